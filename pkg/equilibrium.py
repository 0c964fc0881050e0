"""
Equilibrium - Medidas de equilibrio μ_V, μ_G y μ_{V_α} sobre [−1, 1]
Densidades, r_α, momentos, entropía, CDF y mallas de cuadratura
"""
import math
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from scipy.special import comb, digamma, gammaln, rgamma

from config import settings
from models import FreudModel, GridKind
from special_fn import c_p

logger = logging.getLogger(__name__)

# Separación por debajo de la cual el cociente incremental usa la derivada
DIFF_QUOTIENT_EPS = 1.0e-7

# Radio hasta el que se usa la serie de r (la serie tiene radio 1)
SERIES_RADIUS = 0.9

_SERIES_TERMS = 600


def sigma(x):
    """σ(x) = √(1−x²) sobre [−1, 1], 0 fuera"""
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.clip(1.0 - x * x, 0.0, None))


@dataclass(frozen=True)
class QuadratureGrid:
    kind: GridKind
    nodes: np.ndarray
    weights: np.ndarray
    order: int
    density: Optional[np.ndarray] = field(default=None, repr=False)  # ρ en los nodos (malla equilibrium)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def total_mass(self) -> float:
        return float(np.sum(self.weights))


# ============================================================================
# REGLAS BASE
# ============================================================================

@lru_cache(maxsize=64)
def _gauss_legendre(n: int):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _mapped_gauss(a: float, b: float, n: int):
    nodes, weights = _gauss_legendre(n)
    half = 0.5 * (b - a)
    return a + half * (nodes + 1.0), half * weights


@lru_cache(maxsize=32)
def theta_rule(order: int):
    """
    Gauss–Legendre en θ ∈ [0, π] partido en π/2, simétrico respecto a π/2
    Devuelve (θ, pesos) con θ creciente
    """
    half = max(order // 2, 4)
    theta, weights = _mapped_gauss(0.0, 0.5 * math.pi, half)
    theta_full = np.concatenate([theta, math.pi - theta[::-1]])
    weights_full = np.concatenate([weights, weights[::-1]])
    theta_full.setflags(write=False)
    weights_full.setflags(write=False)
    return theta_full, weights_full


# ============================================================================
# DENSIDADES
# ============================================================================

def _sec_power_integral(p: float, upper: float) -> float:
    if upper <= 0.0:
        return 0.0
    value, _ = integrate.quad(lambda th: math.cos(th) ** (-p), 0.0, upper, epsabs=1e-14, epsrel=1e-13, limit=200)
    return value


def _ullman_scalar(p: float, x: float) -> float:
    ax = abs(x)
    if ax > 1.0:
        return 0.0
    if ax == 0.0:
        return p / (math.pi * (p - 1.0))
    if ax >= 0.5:
        # y = cos θ cerca de 1
        inner = ax ** (p - 1.0) * _sec_power_integral(p, math.acos(ax))
    else:
        # tramo [|x|, 1/2] en variable logarítmica, con |x|^{p−1} ya absorbido
        upper = math.log(0.5 / ax)
        log_part, _ = integrate.quad(
            lambda u: math.exp(-(p - 1.0) * u) / math.sqrt(1.0 - (ax * math.exp(u)) ** 2),
            0.0, upper, epsabs=1e-14, epsrel=1e-13, limit=200,
        )
        inner = log_part + ax ** (p - 1.0) * _sec_power_integral(p, math.pi / 3.0)
    return p * inner / math.pi


def ullman_density(p: float, x):
    """
    Densidad de Ullman (p|x|^{p−1}/π)∫_{|x|}^1 y^{−p}/√(1−y²) dy, nula fuera de [−1, 1]
    """
    if p < 2:
        raise ValueError(f"ullman_density requiere p >= 2, recibido {p}")
    if np.ndim(x) == 0:
        return _ullman_scalar(p, float(x))
    values = np.asarray(x, dtype=float)
    return np.vectorize(lambda v: _ullman_scalar(p, v), otypes=[float])(values)


def density_alpha(model: FreudModel, x):
    """α·Ullman + (1−α)·semicírculo"""
    semicircle = (2.0 / math.pi) * sigma(x)
    if model.alpha == 0.0:
        return semicircle if np.ndim(x) else float(semicircle)
    result = model.alpha * ullman_density(model.p, x) + (1.0 - model.alpha) * semicircle
    return result if np.ndim(x) else float(result)


def density_from_r(model: FreudModel, x, order: Optional[int] = None):
    """ρ = σ·r_α/π, la forma vectorizada que usan mallas y CDF"""
    return sigma(x) * r_alpha_real(model, x, order=order) / math.pi


# ============================================================================
# r_α
# ============================================================================

def _r_unit_quadrature(p: float, x: np.ndarray, order: int) -> np.ndarray:
    """r_1(x) = (1/2π)∫ (V′(t)−V′(x))/(t−x) dt/σ(t) con V = c_p|x|^p"""
    theta, weights = theta_rule(order)
    t = np.cos(theta)
    scale = p * c_p(p)

    def dV(u):
        return scale * np.abs(u) ** (p - 1.0) * np.sign(u)

    def d2V(u):
        return scale * (p - 1.0) * np.abs(u) ** (p - 2.0)

    dV_t = dV(t)
    out = np.empty(x.shape, dtype=float)
    block = 256
    for start in range(0, x.size, block):
        xc = x[start:start + block]
        diff = t[None, :] - xc[:, None]
        close = np.abs(diff) < DIFF_QUOTIENT_EPS
        quotient = (dV_t[None, :] - dV(xc)[:, None]) / np.where(close, 1.0, diff)
        quotient = np.where(close, d2V(0.5 * (t[None, :] + xc[:, None])), quotient)
        out[start:start + block] = quotient @ weights
    return out / (2.0 * math.pi)


def r_alpha_real(model: FreudModel, x, order: Optional[int] = None):
    """
    r_α(x) por cuadratura en la malla arcoseno (θ-sustituida)
    Se calcula como α·r_1 + 2(1−α), de modo que la linealidad en α es exacta
    """
    order = order or settings.r_inner_order
    values = np.atleast_1d(np.asarray(x, dtype=float))
    if model.alpha == 0.0:
        result = np.full(values.shape, 2.0)
    else:
        result = model.alpha * _r_unit_quadrature(model.p, values.ravel(), order).reshape(values.shape)
        result = result + 2.0 * (1.0 - model.alpha)
    if np.ndim(x) == 0:
        return float(result[0])
    return result


@lru_cache(maxsize=64)
def series_constants(p: float):
    """
    Constantes (A_p, B_p) y coeficientes a_n(p) de la serie de r_1
    Para p entero impar el término n=(p−1)/2 queda excluido
    """
    n = np.arange(_SERIES_TERMS, dtype=float)
    odd_index = None
    if float(p).is_integer() and int(p) % 2 == 1:
        odd_index = (int(p) - 1) // 2
    base = np.exp(gammaln(n + 0.5) - gammaln(n + 1.0) - 0.5 * math.log(math.pi))
    denom = 2.0 * n - p + 1.0
    coeffs = np.zeros_like(base)
    mask = np.ones(n.shape, dtype=bool)
    if odd_index is not None:
        mask[odd_index] = False
    coeffs[mask] = base[mask] / denom[mask]

    if odd_index is None:
        # ½ Σ (½)_n/(n!(n+b)) = ½ Γ(b)√π/Γ(b+½), b = (1−p)/2; nulo para p par
        b = 0.5 * (1.0 - p)
        A = 0.0 if float(p).is_integer() else 0.5 * math.sqrt(math.pi) * math.gamma(b) * rgamma(b + 0.5)
        B = 0.0
    else:
        m = odd_index
        A = math.exp(gammaln(m + 0.5) - gammaln(m + 1.0)) / (2.0 * math.sqrt(math.pi)) * (
            digamma(m + 1.0) - digamma(0.5 - m)
        )
        B = math.exp(gammaln(p / 2.0) - gammaln((p - 1.0) / 2.0 + 1.0)) / math.sqrt(math.pi)
    coeffs.setflags(write=False)
    return float(A), float(B), coeffs


def r_alpha_series(model: FreudModel, x):
    """
    Forma en serie de r_α para |x| ≤ 0.9; fuera de ese radio se delega en la cuadratura
    """
    values = np.atleast_1d(np.asarray(x, dtype=float))
    result = np.empty(values.shape, dtype=float)
    inside = np.abs(values) <= SERIES_RADIUS
    if np.any(~inside):
        result[~inside] = r_alpha_real(model, values[~inside])
    if np.any(inside):
        p = model.p
        A, B, coeffs = series_constants(p)
        xi = values[inside]
        ax = np.abs(xi)
        x2 = xi * xi
        # Horner sobre x²
        poly = np.zeros_like(xi)
        for coefficient in coeffs[::-1]:
            poly = poly * x2 + coefficient
        with np.errstate(divide="ignore", invalid="ignore"):
            log_term = np.where(ax > 0.0, B * np.log(np.where(ax > 0.0, ax, 1.0)), 0.0)
        singular = np.where(ax > 0.0, ax ** (p - 1.0) * (A - log_term), 0.0)
        r_unit = p / sigma(xi) * (singular - poly)
        result[inside] = model.alpha * r_unit + 2.0 * (1.0 - model.alpha)
    if np.ndim(x) == 0:
        return float(result[0])
    return result


# ============================================================================
# MOMENTOS Y ENTROPÍA
# ============================================================================

def equilibrium_moment(p: float, k: int) -> float:
    """⟨μ_V, x^{2k}⟩ = 4^{−k}·binom(2k, k)·p/(p+2k)"""
    if k < 0:
        raise ValueError(f"k debe ser >= 0, recibido {k}")
    return float(comb(2 * k, k, exact=True)) / 4.0 ** k * p / (p + 2.0 * k)


def raw_moment(model: FreudModel, j: int) -> float:
    """⟨μ_{V_α}, x^j⟩; los momentos impares son nulos"""
    if j % 2:
        return 0.0
    k = j // 2
    return model.alpha * equilibrium_moment(model.p, k) + (1.0 - model.alpha) * equilibrium_moment(2.0, k)


def entropy(model: FreudModel, order: Optional[int] = None) -> float:
    """
    Ent[μ] = −∫ρ log ρ con la sustitución x = cos θ
    """
    grid = build_grid(GridKind.EQUILIBRIUM, order or settings.entropy_grid_order, model)
    rho = grid.density
    positive = rho > 1e-300
    integrand = np.zeros_like(rho)
    integrand[positive] = np.log(rho[positive])
    return -grid.integrate(integrand)


# ============================================================================
# MALLAS
# ============================================================================

@lru_cache(maxsize=32)
def _arcsine_grid(order: int, split_at_zero: bool) -> QuadratureGrid:
    if split_at_zero:
        theta, weights = theta_rule(order)
        nodes = np.cos(theta)[::-1].copy()
        weights = np.asarray(weights)[::-1].copy()
    else:
        j = np.arange(1, order + 1)
        nodes = np.cos((2 * j - 1) * math.pi / (2 * order))[::-1].copy()
        weights = np.full(order, math.pi / order)
    return QuadratureGrid(GridKind.ARCSINE, nodes, weights, nodes.size)


@lru_cache(maxsize=32)
def _lebesgue_grid(order: int) -> QuadratureGrid:
    half = max(order // 2, 4)
    left_nodes, left_weights = _mapped_gauss(-1.0, 0.0, half)
    nodes = np.concatenate([left_nodes, -left_nodes[::-1]])
    weights = np.concatenate([left_weights, left_weights[::-1]])
    return QuadratureGrid(GridKind.LEBESGUE, nodes, weights, nodes.size)


@lru_cache(maxsize=64)
def _equilibrium_grid(order: int, p: float, alpha: float) -> QuadratureGrid:
    model = FreudModel(p=p, beta=1.0, alpha=alpha)
    theta, theta_weights = theta_rule(order)
    half = theta.size // 2
    # se evalúa r sólo en la mitad x > 0 y se refleja para simetría exacta
    x_half = np.cos(theta[:half])
    r_half = r_alpha_real(model, x_half)
    sin_half = np.sin(theta[:half])
    w_half = theta_weights[:half] * sin_half ** 2 * r_half / math.pi
    rho_half = sin_half * r_half / math.pi
    nodes = np.concatenate([-x_half, x_half[::-1]])
    weights = np.concatenate([w_half, w_half[::-1]])
    density = np.concatenate([rho_half, rho_half[::-1]])
    logger.debug(f"Malla de equilibrio p={p} alpha={alpha} orden={nodes.size}: masa={weights.sum():.15f}")
    return QuadratureGrid(GridKind.EQUILIBRIUM, nodes, weights, nodes.size, density)


def build_grid(kind, order: int, model: Optional[FreudModel] = None, split_at_zero: bool = False) -> QuadratureGrid:
    """
    Construye una malla de cuadratura inmutable
    - arcsine: Gauss–Chebyshev (pesos π/n) o θ-Gauss partido en 0
    - equilibrium: θ-Gauss con pesos sin²θ·r_α(cos θ)/π
    - lebesgue: Gauss–Legendre partido en 0
    """
    kind = GridKind(kind)
    if order < 8:
        raise ValueError(f"order debe ser >= 8, recibido {order}")
    if kind == GridKind.ARCSINE:
        return _arcsine_grid(order, split_at_zero)
    if kind == GridKind.LEBESGUE:
        return _lebesgue_grid(order)
    if model is None:
        raise ValueError("la malla de equilibrio necesita un FreudModel")
    alpha = 0.0 if model.p == 2.0 else model.alpha
    return _equilibrium_grid(order, float(model.p), float(alpha))


def equilibrium_expectation(model: FreudModel, f, order: Optional[int] = None) -> float:
    """⟨μ_{V_α}, f⟩ sobre la malla de equilibrio"""
    grid = build_grid(GridKind.EQUILIBRIUM, order or settings.grid_order, model)
    return grid.integrate(f(grid.nodes))


# ============================================================================
# CDF Y CUANTILES
# ============================================================================

@lru_cache(maxsize=32)
def _cdf_table(p: float, alpha: float, panels: int):
    model = FreudModel(p=p, beta=1.0, alpha=alpha)
    edges = np.linspace(0.0, math.pi, panels + 1)
    gl_nodes, gl_weights = _gauss_legendre(8)
    half = 0.5 * (edges[1] - edges[0])
    mids = 0.5 * (edges[:-1] + edges[1:])
    theta = (mids[:, None] + half * gl_nodes[None, :]).ravel()
    x = np.cos(theta)
    integrand = np.sin(theta) ** 2 * r_alpha_real(model, x) / math.pi
    panel_mass = (integrand.reshape(panels, 8) * gl_weights[None, :]).sum(axis=1) * half
    # G(θ) = ∫_θ^π ρ, G(π) = 0
    tail = np.concatenate([np.cumsum(panel_mass[::-1])[::-1], [0.0]])
    total = tail[0]
    return PchipInterpolator(edges, tail / total), total


def equilibrium_cdf(model: FreudModel, x):
    """∫_{−1}^x ρ_α; monótona, con cdf(−1)=0 y cdf(1)=1"""
    alpha = 0.0 if model.p == 2.0 else model.alpha
    interpolator, _ = _cdf_table(float(model.p), float(alpha), settings.cdf_panels)
    values = np.asarray(x, dtype=float)
    theta = np.arccos(np.clip(values, -1.0, 1.0))
    result = np.clip(interpolator(theta), 0.0, 1.0)
    if np.ndim(x) == 0:
        return float(result)
    return result


def equilibrium_quantile(model: FreudModel, u, tol: float = 1e-12):
    """Inversa de la CDF por bisección vectorizada"""
    targets = np.atleast_1d(np.asarray(u, dtype=float))
    low = np.full(targets.shape, -1.0)
    high = np.full(targets.shape, 1.0)
    while np.max(high - low) > tol:
        mid = 0.5 * (low + high)
        below = equilibrium_cdf(model, mid) < targets
        low = np.where(below, mid, low)
        high = np.where(below, high, mid)
    result = 0.5 * (low + high)
    if np.ndim(u) == 0:
        return float(result[0])
    return result


# ============================================================================
# RELACIÓN DE EQUILIBRIO
# ============================================================================

def effective_potential_check(model: FreudModel, x: float) -> float:
    """
    V_α′(x)/2 − PV∫ dμ(y)/(x−y); la parte singular se resta con
    PV∫ ρ(y)/(x−y) dy = ∫ (ρ(y)−ρ(x))/(x−y) dy + ρ(x)·log((1+x)/(1−x))
    """
    if abs(x) >= 1.0:
        raise ValueError(f"effective_potential_check requiere |x| < 1, recibido {x}")

    def rho(y):
        return float(density_from_r(model, y))

    rho_x = rho(x)

    def integrand(y):
        if y == x:
            return 0.0
        return (rho(y) - rho_x) / (x - y)

    points = sorted({0.0, float(x)}) if x != 0.0 else [0.0]
    regular, _ = integrate.quad(integrand, -1.0, 1.0, points=points, epsabs=1e-12, epsrel=1e-12, limit=400)
    principal_value = regular + rho_x * math.log((1.0 + x) / (1.0 - x))
    return float(0.5 * model.potential_derivative(x) - principal_value)
