"""
Master operator - Operador maestro Ξ_α, su inversa de Tricomi en [−1, 1]
y diferenciación espectral de la inversa
"""
import math
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Union

import numpy as np
from numpy.polynomial import chebyshev
from scipy.fft import dct

from config import settings
from equilibrium import build_grid, r_alpha_real
from models import FreudModel, GridKind

logger = logging.getLogger(__name__)

DIFF_QUOTIENT_EPS = 1.0e-7

# Umbral de decaimiento de coeficientes para dar por resuelta una función
TAIL_TOLERANCE = 1.0e-10

# Umbral a partir del cual se rechaza derivar
DERIVATIVE_TAIL_LIMIT = 1.0e-6

_TAIL_WINDOW = 8

RealFn = Callable[[np.ndarray], np.ndarray]


class InsufficientResolution(ValueError):
    """Los coeficientes de Chebyshev no han decaído lo suficiente"""


@dataclass(frozen=True)
class TestFunction:
    f: RealFn
    df: RealFn
    d2f: RealFn
    d3f: Optional[RealFn] = None
    label: str = "f"

    def __call__(self, x):
        return self.f(x)

    def scaled(self, a: float, label: Optional[str] = None) -> "TestFunction":
        return TestFunction(
            f=lambda x: a * self.f(x),
            df=lambda x: a * self.df(x),
            d2f=lambda x: a * self.d2f(x),
            d3f=(lambda x: a * self.d3f(x)) if self.d3f else None,
            label=label or f"{a}*{self.label}",
        )

    def plus(self, other: "TestFunction", label: Optional[str] = None) -> "TestFunction":
        has_third = self.d3f is not None and other.d3f is not None
        return TestFunction(
            f=lambda x: self.f(x) + other.f(x),
            df=lambda x: self.df(x) + other.df(x),
            d2f=lambda x: self.d2f(x) + other.d2f(x),
            d3f=(lambda x: self.d3f(x) + other.d3f(x)) if has_third else None,
            label=label or f"{self.label}+{other.label}",
        )


def monomial(k: int) -> TestFunction:
    """x^k con sus tres primeras derivadas"""

    def power(j: int) -> RealFn:
        if k - j < 0:
            return lambda x: np.zeros_like(np.asarray(x, dtype=float))
        factor = float(math.perm(k, j))
        return lambda x: factor * np.asarray(x, dtype=float) ** (k - j)

    return TestFunction(f=power(0), df=power(1), d2f=power(2), d3f=power(3), label=f"x^{k}")


def constant(c: float) -> TestFunction:
    def zero(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    return TestFunction(
        f=lambda x: np.full_like(np.asarray(x, dtype=float), c),
        df=zero, d2f=zero, d3f=zero, label=f"const({c})",
    )


def _exp_window() -> TestFunction:
    # exp(−4x²)
    def base(x):
        x = np.asarray(x, dtype=float)
        return np.exp(-4.0 * x * x)

    return TestFunction(
        f=base,
        df=lambda x: -8.0 * np.asarray(x, dtype=float) * base(x),
        d2f=lambda x: (64.0 * np.asarray(x, dtype=float) ** 2 - 8.0) * base(x),
        d3f=lambda x: (192.0 * np.asarray(x, dtype=float) - 512.0 * np.asarray(x, dtype=float) ** 3) * base(x),
        label="exp-window",
    )


TEST_FUNCTIONS: Dict[str, TestFunction] = {
    "x": TestFunction(
        f=lambda x: np.asarray(x, dtype=float),
        df=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        d2f=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        d3f=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        label="x",
    ),
    "x2": monomial(2),
    "x3": monomial(3),
    "x4": monomial(4),
    "cos": TestFunction(f=np.cos, df=lambda x: -np.sin(x), d2f=lambda x: -np.cos(x), d3f=np.sin, label="cos"),
    "exp-window": _exp_window(),
}


def get_test_function(name: str) -> TestFunction:
    if name not in TEST_FUNCTIONS:
        raise KeyError(f"Función de test desconocida: {name}. Disponibles: {', '.join(TEST_FUNCTIONS)}")
    return TEST_FUNCTIONS[name]


# ============================================================================
# REPRESENTACIÓN CHEBYSHEV A TROZOS
# ============================================================================

def lobatto_nodes(n_points: int) -> np.ndarray:
    """Nodos de Chebyshev de segunda especie cos(πk/M) en [−1, 1], k = 0..M"""
    M = n_points - 1
    return np.cos(math.pi * np.arange(M + 1) / M)


def _coefficients(values: np.ndarray) -> np.ndarray:
    M = values.size - 1
    coeffs = dct(values, type=1) / M
    coeffs[0] *= 0.5
    coeffs[-1] *= 0.5
    return coeffs


def _tail(coeffs: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(coeffs))))
    return float(np.max(np.abs(coeffs[-_TAIL_WINDOW:]))) / scale


@dataclass(frozen=True)
class InteriorFunction:
    """
    Función sobre [−1, 1] representada por Chebyshev en [−1, 0] y [0, 1]
    """
    left_values: np.ndarray
    right_values: np.ndarray
    left_coeffs: np.ndarray
    right_coeffs: np.ndarray
    label: str = "psi"

    @property
    def order(self) -> int:
        return int(self.left_values.size)

    @property
    def tail(self) -> float:
        return max(_tail(self.left_coeffs), _tail(self.right_coeffs))

    @property
    def resolved(self) -> bool:
        return self.tail <= TAIL_TOLERANCE

    @staticmethod
    def piece_nodes(n_points: int):
        s = lobatto_nodes(n_points)
        return 0.5 * (s - 1.0), 0.5 * (s + 1.0)

    def nodes(self) -> np.ndarray:
        left, right = self.piece_nodes(self.order)
        return np.unique(np.concatenate([left, right]))

    @classmethod
    def from_values(cls, left_values, right_values, label: str = "psi") -> "InteriorFunction":
        left_values = np.asarray(left_values, dtype=float)
        right_values = np.asarray(right_values, dtype=float)
        return cls(left_values, right_values, _coefficients(left_values), _coefficients(right_values), label)

    @classmethod
    def from_callable(cls, fn: RealFn, n_points: int, label: str = "psi") -> "InteriorFunction":
        left, right = cls.piece_nodes(n_points)
        return cls.from_values(fn(left), fn(right), label)

    def __call__(self, x):
        values = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty(values.shape, dtype=float)
        left = values < 0.0
        out[left] = chebyshev.chebval(2.0 * values[left] + 1.0, self.left_coeffs)
        out[~left] = chebyshev.chebval(2.0 * values[~left] - 1.0, self.right_coeffs)
        if np.ndim(x) == 0:
            return float(out[0])
        return out

    def derivative(self, m: int = 1, check: bool = True) -> "InteriorFunction":
        """Derivada espectral; cada trozo tiene longitud 1, de ahí el factor 2^m"""
        if check and self.tail > DERIVATIVE_TAIL_LIMIT:
            raise InsufficientResolution(
                f"cola de coeficientes {self.tail:.2e} > {DERIVATIVE_TAIL_LIMIT:.0e} en {self.label}"
            )
        left = np.append(chebyshev.chebder(self.left_coeffs, m) * 2.0 ** m, np.zeros(m))
        right = np.append(chebyshev.chebder(self.right_coeffs, m) * 2.0 ** m, np.zeros(m))
        s = lobatto_nodes(self.order)
        return InteriorFunction(
            chebyshev.chebval(s, left), chebyshev.chebval(s, right), left, right, f"{self.label}'" * m
        )

    def as_test_function(self) -> TestFunction:
        first = self.derivative(1, check=False)
        second = first.derivative(1, check=False)
        return TestFunction(f=self, df=first, d2f=second, label=self.label)


# ============================================================================
# OPERADOR MAESTRO
# ============================================================================

def _difference_quotient(fx, ft, dfx_mid, x, t):
    diff = x - t
    close = np.abs(diff) < DIFF_QUOTIENT_EPS
    quotient = (fx - ft) / np.where(close, 1.0, diff)
    return np.where(close, dfx_mid, quotient)


def xi_forward(model: FreudModel, psi: Union[TestFunction, InteriorFunction], order: Optional[int] = None):
    """
    Devuelve x ↦ Ξ_α[ψ](x) = −½ψ(x)V_α′(x) + ∫ (ψ(x)−ψ(t))/(x−t) dμ_{V_α}(t)
    """
    if isinstance(psi, InteriorFunction):
        psi = psi.as_test_function()
    grid = build_grid(GridKind.EQUILIBRIUM, order or settings.grid_order, model)
    t = grid.nodes
    psi_t = np.asarray(psi.f(t), dtype=float)

    def apply(x):
        values = np.atleast_1d(np.asarray(x, dtype=float))
        psi_x = np.asarray(psi.f(values), dtype=float)
        mid = 0.5 * (values[:, None] + t[None, :])
        quotient = _difference_quotient(
            psi_x[:, None], psi_t[None, :], np.asarray(psi.df(mid), dtype=float), values[:, None], t[None, :]
        )
        result = -0.5 * psi_x * model.potential_derivative(values) + quotient @ grid.weights
        if np.ndim(x) == 0:
            return float(result[0])
        return result

    return apply


def a_constant(f: TestFunction, order: Optional[int] = None) -> float:
    """a = ∫ f(t) dt/σ(t)"""
    grid = build_grid(GridKind.ARCSINE, order or settings.grid_order)
    return grid.integrate(f.f(grid.nodes))


def _tricomi_values(model: FreudModel, f: TestFunction, lam: np.ndarray, inner_order: int) -> np.ndarray:
    grid = build_grid(GridKind.ARCSINE, inner_order)
    t = grid.nodes
    f_t = np.asarray(f.f(t), dtype=float)
    f_lam = np.asarray(f.f(lam), dtype=float)
    mid = 0.5 * (t[None, :] + lam[:, None])
    quotient = _difference_quotient(
        f_t[None, :], f_lam[:, None], np.asarray(f.df(mid), dtype=float), t[None, :], lam[:, None]
    )
    inner = quotient @ grid.weights
    return -inner / (math.pi * r_alpha_real(model, lam))


def tricomi_inverse(model: FreudModel, f: TestFunction, order: Optional[int] = None,
                    inner_order: Optional[int] = None) -> InteriorFunction:
    """
    ψ_α(λ) = −(1/(π r_α(λ)))∫ (f(t)−f(λ))/(t−λ) dt/σ(t) sobre nodos de Chebyshev de [−1, 1]
    El orden se duplica desde tricomi_order hasta tricomi_max_order mientras la cola no decaiga
    """
    inner_order = inner_order or settings.grid_order
    n_points = order or settings.tricomi_order
    max_points = max(n_points, settings.tricomi_max_order)
    while True:
        left, right = InteriorFunction.piece_nodes(n_points)
        psi = InteriorFunction.from_values(
            _tricomi_values(model, f, left, inner_order),
            _tricomi_values(model, f, right, inner_order),
            label=f"psi[{f.label}]",
        )
        if psi.resolved or order is not None or n_points >= max_points:
            break
        n_points = 2 * (n_points - 1) + 1
    if not psi.resolved:
        logger.warning(f"tricomi_inverse({f.label}, p={model.p}, alpha={model.alpha}): cola {psi.tail:.2e} con {n_points} nodos")
    return psi


def psi_derivative(psi: InteriorFunction) -> InteriorFunction:
    """Diferenciación espectral de ψ; rechaza si la cola supera 1e−6"""
    return psi.derivative(1, check=True)


def round_trip_constant(model: FreudModel, f: TestFunction, psi: Optional[InteriorFunction] = None,
                        order: Optional[int] = None):
    """
    Ξ_α[Ξ_α^{−1}[f]] − f sobre los nodos interiores
    Devuelve (media, desviación típica); la media debe valer −a/π
    """
    psi = psi or tricomi_inverse(model, f)
    nodes = psi.nodes()
    interior = nodes[(nodes > -1.0) & (nodes < 1.0)]
    residual = xi_forward(model, psi, order)(interior) - f.f(interior)
    return float(np.mean(residual)), float(np.std(residual))
