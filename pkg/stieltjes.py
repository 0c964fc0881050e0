"""
Stieltjes - Objetos en el plano complejo
b(z), extensión pseudo-analítica g(z), g_α, f_{α,z}, h_α, r_α(z), s_V y la relación cuadrática
"""
import math
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config import settings
from equilibrium import build_grid
from models import FreudModel, GridKind
from special_fn import c_p

logger = logging.getLogger(__name__)

# Los puntos complejos se representan con complex de Python / numpy (rama principal)
ComplexPoint = complex

# Por debajo de esta distancia a [−1, 1] se usan mallas finas
NEAR_AXIS_DISTANCE = 1.0e-2

# Límite continuo de r_α en el origen
ORIGIN_RADIUS = 1.0e-10


def _as_complex(z) -> np.ndarray:
    return np.atleast_1d(np.asarray(z, dtype=complex))


def _restore(z, values):
    if np.ndim(z) == 0:
        return complex(values[0])
    return values.reshape(np.shape(z))


def distance_to_support(z) -> np.ndarray:
    """dist(z, [−1, 1])"""
    zc = _as_complex(z)
    nearest = np.clip(zc.real, -1.0, 1.0)
    return np.abs(zc - nearest)


@dataclass(frozen=True)
class SpectralDomain:
    """
    Rectángulo R = [−1−δ₀, 1+δ₀] × (0, δ₀] y trapecio T = {|x| ≤ 1+y}
    """
    delta0: float = 0.5
    n_re: int = 40
    n_im: int = 20

    def points(self) -> np.ndarray:
        re = np.linspace(-1.0 - self.delta0, 1.0 + self.delta0, self.n_re)
        im = np.linspace(self.delta0 / self.n_im, self.delta0, self.n_im)
        return (re[:, None] + 1j * im[None, :]).ravel()

    @staticmethod
    def in_trapezoid(z) -> np.ndarray:
        zc = _as_complex(z)
        return np.abs(zc.real) <= 1.0 + zc.imag

    def trapezoid_points(self) -> np.ndarray:
        pts = self.points()
        return pts[self.in_trapezoid(pts)]

    @staticmethod
    def kappa(z) -> np.ndarray:
        """κ = |x−1| ∧ |x+1|"""
        x = _as_complex(z).real
        return np.minimum(np.abs(x - 1.0), np.abs(x + 1.0))


# ============================================================================
# FUNCIONES BÁSICAS
# ============================================================================

def branch_b(z):
    """b(z) = √(z+1)·√(z−1) con raíces principales"""
    zc = _as_complex(z)
    return _restore(z, np.sqrt(zc + 1.0) * np.sqrt(zc - 1.0))


def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    positive = s > 0
    out[positive] = np.exp(-1.0 / s[positive])
    return out


def chi_cutoff(t):
    """
    Corte suave par: 1 en [−1/2, 1/2], 0 fuera de [−1, 1]
    """
    at = np.abs(np.asarray(t, dtype=float))
    left = _bump(1.0 - at)
    right = _bump(at - 0.5)
    result = left / (left + right)
    if np.ndim(t) == 0:
        return float(result)
    return result


def g_real(p: float, x):
    """g(x) = p·c_p|x|^p = x·V′(x)"""
    return p * c_p(p) * np.abs(np.asarray(x, dtype=float)) ** p


def g_complex(p: float, z):
    """
    Extensión pseudo-analítica
    g(x) + iy·g′(x) − (y²/2)·g″(x) − i(y³/6)·g‴(x)·χ(y/x), último término nulo si x = 0
    """
    zc = _as_complex(z)
    x, y = zc.real, zc.imag
    scale = p * p * c_p(p)
    ax = np.abs(x)
    sgn = np.sign(x)
    g0 = p * c_p(p) * ax ** p
    g1 = scale * ax ** (p - 1.0) * sgn
    g2 = scale * (p - 1.0) * ax ** (p - 2.0)
    third = np.zeros_like(x)
    nonzero = ax > 0.0
    if np.any(nonzero) and p != 2.0:
        xn = x[nonzero]
        g3 = scale * (p - 1.0) * (p - 2.0) * np.abs(xn) ** (p - 3.0) * np.sign(xn)
        third[nonzero] = (y[nonzero] ** 3 / 6.0) * g3 * chi_cutoff(y[nonzero] / xn)
    values = (g0 - 0.5 * y * y * g2) + 1j * (y * g1 - third)
    return _restore(z, values)


def g_alpha_complex(model: FreudModel, z):
    """g_α(z) = α·g(z) + 4(1−α)z²"""
    zc = _as_complex(z)
    values = 4.0 * (1.0 - model.alpha) * zc * zc
    if model.alpha > 0.0:
        values = values + model.alpha * _as_complex(g_complex(model.p, zc))
    return _restore(z, values)


def _g_alpha_on_support(model: FreudModel, t: np.ndarray) -> np.ndarray:
    return t * model.potential_derivative(t)


def f_alpha_z(model: FreudModel, z, lam):
    """
    f_{α,z}(λ) = (g_α(λ) − g_α(z))/(λ − z), sólo para Im z ≠ 0
    """
    if np.any(np.imag(z) == 0.0):
        raise ValueError(f"f_alpha_z requiere Im z != 0, recibido {z}")
    lam_arr = np.asarray(lam, dtype=float)
    gz = complex(g_alpha_complex(model, complex(z)))
    values = (_g_alpha_on_support(model, lam_arr) - gz) / (lam_arr - z)
    if np.ndim(lam) == 0:
        return complex(values)
    return values


# ============================================================================
# INTEGRALES SOBRE EL SOPORTE
# ============================================================================

def _order_for(z: np.ndarray, base: int) -> np.ndarray:
    near = distance_to_support(z) < NEAR_AXIS_DISTANCE
    return np.where(near, settings.fine_grid_order, base)


def _support_integral(model: FreudModel, z, kind: GridKind, base_order: Optional[int]) -> np.ndarray:
    """∫ (g_α(t) − g_α(z))/(t − z) contra la malla indicada, por grupos de orden"""
    zc = _as_complex(z)
    orders = _order_for(zc, base_order or settings.grid_order)
    gz = _as_complex(g_alpha_complex(model, zc))
    out = np.empty(zc.shape, dtype=complex)
    for order in np.unique(orders):
        grid = build_grid(kind, int(order), model)
        t = grid.nodes
        gt = _g_alpha_on_support(model, t)
        idx = np.nonzero(orders == order)[0]
        for start in range(0, idx.size, 128):
            sel = idx[start:start + 128]
            quotient = (gt[None, :] - gz[sel, None]) / (t[None, :] - zc[sel, None])
            out[sel] = quotient @ grid.weights
    return out


def h_alpha(model: FreudModel, z, order: Optional[int] = None):
    """h_α(z) = ∫ f_{α,z}(t) dμ_{V_α}(t)"""
    zc = _as_complex(z)
    return _restore(z, _support_integral(model, zc, GridKind.EQUILIBRIUM, order))


def r_alpha_complex(model: FreudModel, z, order: Optional[int] = None):
    """
    r_α(z) = (1/2πz)∫ (g_α(t) − g_α(z))/(t − z) dt/σ(t)
    Para |z| < 1e−10 se usa el valor límite en el origen
    """
    zc = _as_complex(z)
    out = np.empty(zc.shape, dtype=complex)
    at_origin = np.abs(zc) < ORIGIN_RADIUS
    if np.any(at_origin):
        out[at_origin] = _r_alpha_origin(model, order)
    regular = ~at_origin
    if np.any(regular):
        integral = _support_integral(model, zc[regular], GridKind.ARCSINE, order)
        out[regular] = integral / (2.0 * math.pi * zc[regular])
    return _restore(z, out)


def _r_alpha_origin(model: FreudModel, order: Optional[int]) -> float:
    # α·(1/2π)∫ p·c_p|t|^{p−2} dt/σ(t) + 2(1−α)
    grid = build_grid(GridKind.ARCSINE, order or settings.fine_grid_order, model, split_at_zero=True)
    inner = grid.integrate(model.p * c_p(model.p) * np.abs(grid.nodes) ** (model.p - 2.0))
    return model.alpha * inner / (2.0 * math.pi) + 2.0 * (1.0 - model.alpha)


# ============================================================================
# TRANSFORMADA DE STIELTJES Y RELACIÓN CUADRÁTICA
# ============================================================================

def s_V(model: FreudModel, z, order: Optional[int] = None):
    """s_{V_α}(z) = r_α(z)·b(z) − g_α(z)/(2z)"""
    zc = _as_complex(z)
    values = (
        _as_complex(r_alpha_complex(model, zc, order)) * _as_complex(branch_b(zc))
        - _as_complex(g_alpha_complex(model, zc)) / (2.0 * zc)
    )
    return _restore(z, values)


def s_V_tilde(model: FreudModel, z, order: Optional[int] = None):
    """La otra raíz: −r_α(z)·b(z) − g_α(z)/(2z)"""
    zc = _as_complex(z)
    values = (
        -_as_complex(r_alpha_complex(model, zc, order)) * _as_complex(branch_b(zc))
        - _as_complex(g_alpha_complex(model, zc)) / (2.0 * zc)
    )
    return _restore(z, values)


def quadratic_residual(model: FreudModel, z, order: Optional[int] = None):
    """|s_V² + (g_α/z)·s_V + h_α/z|"""
    zc = _as_complex(z)
    s = _as_complex(s_V(model, zc, order))
    g = _as_complex(g_alpha_complex(model, zc))
    h = _as_complex(h_alpha(model, zc, order))
    residual = np.abs(s * s + g / zc * s + h / zc)
    if np.ndim(z) == 0:
        return float(residual[0])
    return residual.reshape(np.shape(z))
