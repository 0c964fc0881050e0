"""
Asymptotics - Predictores en forma cerrada
Media y varianza del TCL, momentos gaussianos, desarrollo de la energía libre,
volumen de bolas de Schatten y cocientes KLS
"""
import math
import logging
from typing import List, Optional

import numpy as np
from scipy import integrate, optimize
from scipy.special import comb, gammaln

from config import settings
from equilibrium import build_grid, entropy, equilibrium_moment, r_alpha_real, theta_rule
from master_op import InteriorFunction, TestFunction, monomial, psi_derivative, tricomi_inverse
from models import (
    CltPrediction,
    FreeEnergyExpansion,
    FreudModel,
    GridKind,
    KlsMoments,
    KlsRatio,
    SchattenCoeffs,
)
from special_fn import (
    c_p,
    log_c_N,
    log_gamma_convexity,
    log_gamma_ratio,
    schatten_dim,
)

logger = logging.getLogger(__name__)

DIAGONAL_BAND = 1.0e-6

MAX_GAUSSIAN_MOMENTS = 8


# ============================================================================
# TCL: VARIANZA Y MEDIA
# ============================================================================

def _variance_kernel(f: TestFunction, order: int) -> float:
    """∬ ((f(x)−f(y))/(x−y))² (1−xy) dx dy/(σ(x)σ(y)) con Gauss–Chebyshev doble"""
    grid = build_grid(GridKind.ARCSINE, order)
    x = grid.nodes
    fx = np.asarray(f.f(x), dtype=float)
    dfx = np.asarray(f.df(x), dtype=float)
    diff = x[:, None] - x[None, :]
    band = np.abs(diff) < DIAGONAL_BAND
    quotient = (fx[:, None] - fx[None, :]) / np.where(band, 1.0, diff)
    # en la banda diagonal se usa el límite f′(x)²(1−x²)
    quotient = np.where(band, dfx[:, None], quotient)
    kernel = quotient ** 2 * (1.0 - x[:, None] * x[None, :])
    return float(grid.weights @ kernel @ grid.weights)


def clt_variance(f: TestFunction, beta: float, order: Optional[int] = None) -> float:
    """
    σ²(f) = (1/(2βπ²))∬ ((f(x)−f(y))/(x−y))² (1−xy)/(σ(x)σ(y)) dx dy
    Universal: no depende de p ni de α
    """
    base = _variance_kernel(f, order or settings.grid_order) / (2.0 * math.pi ** 2)
    return base / beta


def clt_variance_via_psi(model: FreudModel, f: TestFunction, psi: Optional[InteriorFunction] = None,
                         order: Optional[int] = None) -> float:
    """
    Forma dual (1/β)[½∫V_α″ψ² dμ + ½∬((ψ(x)−ψ(y))/(x−y))² dμ dμ] con ψ = Ξ_α^{−1}[f]
    """
    psi = psi or tricomi_inverse(model, f)
    grid = build_grid(GridKind.EQUILIBRIUM, order or settings.grid_order, model)
    x = grid.nodes
    psi_x = psi(x)
    dpsi_x = psi.derivative(1, check=False)(x)
    first = 0.5 * grid.integrate(model.potential_second_derivative(x) * psi_x ** 2)
    diff = x[:, None] - x[None, :]
    band = np.abs(diff) < DIAGONAL_BAND
    quotient = (psi_x[:, None] - psi_x[None, :]) / np.where(band, 1.0, diff)
    quotient = np.where(band, dpsi_x[:, None], quotient)
    second = 0.5 * float(grid.weights @ (quotient ** 2) @ grid.weights)
    return (first + second) / model.beta


def clt_mean_via_psi(model: FreudModel, f: TestFunction, psi: Optional[InteriorFunction] = None,
                     order: Optional[int] = None) -> float:
    """m_{V_α}(f) = (½ − 1/β)∫ Ξ_α^{−1}[f]′ dμ_{V_α}"""
    prefactor = 0.5 - 1.0 / model.beta
    psi = psi or tricomi_inverse(model, f)
    grid = build_grid(GridKind.EQUILIBRIUM, order or settings.grid_order, model)
    return prefactor * grid.integrate(psi_derivative(psi)(grid.nodes))


def _arcsine_transform(f: TestFunction, x: np.ndarray, order: int) -> np.ndarray:
    """∫ (f(t)−f(x))/(t−x) dt/σ(t)"""
    grid = build_grid(GridKind.ARCSINE, order)
    t = grid.nodes
    diff = t[None, :] - x[:, None]
    close = np.abs(diff) < 1.0e-7
    quotient = (np.asarray(f.f(t))[None, :] - np.asarray(f.f(x))[:, None]) / np.where(close, 1.0, diff)
    quotient = np.where(close, np.asarray(f.df(0.5 * (t[None, :] + x[:, None]))), quotient)
    return quotient @ grid.weights


def clt_mean_via_r(model: FreudModel, f: TestFunction, order: Optional[int] = None) -> float:
    """
    (½−1/β)·[(1/π²)∫ (r′/r)(x)·(∫(f(t)−f(x))/(t−x) dt/σ(t))·σ(x) dx − (f(1)+f(−1))/2 + (1/π)∫ f dx/σ]
    r′ por diferenciación espectral de r_α sobre la malla de Chebyshev a trozos
    """
    prefactor = 0.5 - 1.0 / model.beta
    order = order or settings.grid_order
    r_fn = InteriorFunction.from_callable(lambda x: r_alpha_real(model, x), settings.tricomi_max_order, label="r")
    dr_fn = r_fn.derivative(1, check=False)
    theta, weights = theta_rule(settings.entropy_grid_order)
    x = np.cos(theta)
    # dx = sin θ dθ y el factor σ(x) = sin θ
    integrand = dr_fn(x) / r_alpha_real(model, x) * _arcsine_transform(f, x, order) * np.sin(theta) ** 2
    first = float(weights @ integrand) / math.pi ** 2
    edges = 0.5 * float(f.f(np.array([1.0]))[0] + f.f(np.array([-1.0]))[0])
    arcsine = build_grid(GridKind.ARCSINE, order)
    average = arcsine.integrate(f.f(arcsine.nodes)) / math.pi
    return prefactor * (first - edges + average)


def gaussian_moments(mean: float, variance: float, K: int) -> List[float]:
    """M_k = mean·M_{k−1} + (k−1)·variance·M_{k−2}, k = 1..K"""
    if variance < 0:
        raise ValueError(f"la varianza debe ser >= 0, recibido {variance}")
    if K > MAX_GAUSSIAN_MOMENTS:
        raise ValueError(f"K debe ser <= {MAX_GAUSSIAN_MOMENTS}, recibido {K}")
    moments = [1.0]
    for k in range(1, K + 1):
        previous = moments[k - 2] if k >= 2 else 0.0
        moments.append(mean * moments[k - 1] + (k - 1) * variance * previous)
    return moments[1:]


def clt_prediction(model: FreudModel, f: TestFunction, K: int = 4,
                   grid_order: Optional[int] = None) -> CltPrediction:
    psi = tricomi_inverse(model, f, inner_order=grid_order)
    mean = clt_mean_via_psi(model, f, psi=psi, order=grid_order)
    variance = clt_variance(f, model.beta, order=grid_order)
    return CltPrediction(mean=mean, variance=variance, moments=gaussian_moments(mean, variance, K))


# ============================================================================
# ENERGÍA LIBRE
# ============================================================================

def fg_minus1(beta: float) -> float:
    """F_G^{−1} = (½−1/β)(log(β/2)+log 2) − 1/(2β) − ¼ + (1/β)·log(2π/Γ(β/2))"""
    return (
        (0.5 - 1.0 / beta) * (math.log(beta / 2.0) + math.log(2.0))
        - 1.0 / (2.0 * beta) - 0.25
        + (math.log(2.0 * math.pi) - gammaln(beta / 2.0)) / beta
    )


def free_energy_expansion(p: float, beta: float) -> FreeEnergyExpansion:
    """
    (1/N²β) log Z_N = −½(log 2 + 3/(2p)) + log N/(2N) + F^{−1}/N + o(1/N)
    con F^{−1} = F_G^{−1} + (1/β − ½)(Ent[μ_V] − log π + ½)
    """
    if p < 2 or beta <= 0:
        raise ValueError(f"free_energy_expansion requiere p >= 2 y beta > 0, recibido p={p}, beta={beta}")
    ent = entropy(FreudModel(p=p, beta=beta, alpha=1.0))
    fg = fg_minus1(beta)
    return FreeEnergyExpansion(
        p=p,
        beta=beta,
        leading=-0.5 * (math.log(2.0) + 1.5 / p),
        nlogn_coeff=0.5,
        f_minus1=fg + (1.0 / beta - 0.5) * (ent - math.log(math.pi) + 0.5),
        fg_minus1=fg,
        entropy=ent,
    )


def expansion_log_partition(expansion: FreeEnergyExpansion, N: int) -> float:
    """log Z_N según el desarrollo, sin el resto o(N)"""
    return N * N * expansion.beta * (
        expansion.leading + expansion.nlogn_coeff * math.log(N) / N + expansion.f_minus1 / N
    )


def gaussian_expansion_log_partition(N: int, beta: float) -> float:
    """−(β/2)(¾ + log 2)N² + (β/2)N log N + F_G^{−1}βN"""
    return -0.5 * beta * (0.75 + math.log(2.0)) * N * N + 0.5 * beta * N * math.log(N) + fg_minus1(beta) * beta * N


def alpha_derivative_function(p: float) -> TestFunction:
    """∂_α V_α = c_p|x|^p − 2x²"""
    cp = c_p(p)

    def f(x):
        x = np.asarray(x, dtype=float)
        return cp * np.abs(x) ** p - 2.0 * x * x

    def df(x):
        x = np.asarray(x, dtype=float)
        return p * cp * np.abs(x) ** (p - 1.0) * np.sign(x) - 4.0 * x

    def d2f(x):
        x = np.asarray(x, dtype=float)
        return p * (p - 1.0) * cp * np.abs(x) ** (p - 2.0) - 4.0

    return TestFunction(f=f, df=df, d2f=d2f, label=f"dV/dalpha[p={p}]")


def free_energy_correction_via_means(p: float, beta: float, alpha_order: Optional[int] = None) -> float:
    """
    F^{−1} − F_G^{−1} = −½∫₀¹ m_α(∂_αV_α) dα, integrando en α con Gauss–Legendre
    """
    nodes, weights = np.polynomial.legendre.leggauss(alpha_order or settings.alpha_order)
    alphas = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    f = alpha_derivative_function(p)
    means = [clt_mean_via_psi(FreudModel(p=p, beta=beta, alpha=float(a)), f) for a in alphas]
    return -0.5 * float(np.dot(weights, means))


def confinement_radius(model: FreudModel, level: float = 60.0) -> float:
    scale = 0.5 * model.beta * model.N

    def excess(x):
        return scale * float(model.potential(x)) - level

    return optimize.brentq(excess, 1e-6, 1e3)


def log_partition_quadrature(model: FreudModel) -> float:
    """
    log Z_N por cuadratura directa para N ∈ {1, 2}
    Z_N = ∫ Π|λᵢ−λⱼ|^β e^{−(βN/2)ΣV_α(λᵢ)} dλ
    """
    scale = 0.5 * model.beta * model.N
    L = confinement_radius(model)
    if model.N == 1:
        value, _ = integrate.quad(lambda x: math.exp(-scale * float(model.potential(x))), -L, L,
                                  points=[0.0], epsabs=0.0, epsrel=1e-13, limit=400)
        return math.log(value)
    if model.N != 2:
        raise ValueError(f"log_partition_quadrature sólo admite N <= 2, recibido {model.N}")

    def inner(x):
        wx = math.exp(-scale * float(model.potential(x)))
        value, _ = integrate.quad(
            lambda y: (x - y) ** model.beta * math.exp(-scale * float(model.potential(y))),
            -L, x, epsabs=0.0, epsrel=1e-12, limit=400,
        )
        return wx * value

    outer, _ = integrate.quad(inner, -L, L, points=[0.0], epsabs=0.0, epsrel=1e-11, limit=400)
    # simetría x ↔ y
    return math.log(2.0 * outer)


# ============================================================================
# BOLAS DE SCHATTEN
# ============================================================================

def schatten_volume_coeffs(p: float, beta: int, expansion: Optional[FreeEnergyExpansion] = None) -> SchattenCoeffs:
    """log |B(S_p^N)| = aN² log N + bN² + cN log N + dN + o(N)"""
    if p < 2:
        raise ValueError(f"schatten_volume_coeffs requiere p >= 2, recibido {p}")
    expansion = expansion or free_energy_expansion(p, beta)
    log_pcp = math.log(p * c_p(p))
    a = -0.5 * beta * (0.5 + 1.0 / p)
    b = beta / (2.0 * p) * (log_pcp - 0.5) + 0.25 * beta * (1.5 + math.log(math.pi / beta))
    c = 0.5 * (beta - 2.0) * (1.0 / p + 0.5)
    d = (
        (2.0 - beta) / (2.0 * p) * log_pcp
        + float(gammaln(beta / 2.0)) + 0.5
        + 0.25 * beta * (1.0 - math.log(math.pi * beta))
        - 0.5 * math.log(4.0 * math.pi / beta)
        + beta * expansion.f_minus1
    )
    return SchattenCoeffs(p=p, beta=beta, a=a, b=b, c=c, d=d)


def schatten_expansion(coeffs: SchattenCoeffs, N: int) -> float:
    logN = math.log(N)
    return coeffs.a * N * N * logN + coeffs.b * N * N + coeffs.c * N * logN + coeffs.d * N


def schatten_log_volume(p: float, beta: int, N: int, log_Z: float) -> float:
    """log c_N − log Γ(1 + d_N/p) + (d_N/p)·log(Nβc_p/2) + log Z_N"""
    d = schatten_dim(N, beta)
    return (
        log_c_N(N, beta)
        - float(gammaln(1.0 + d / p))
        + d / p * math.log(N * beta * c_p(p) / 2.0)
        + log_Z
    )


# ============================================================================
# KLS
# ============================================================================

def kls_asymptotic_bound(p: float, r: int) -> float:
    """(2/r)·((p+2)/p)·((p+2r−2)/p)"""
    if p < 2 or r < 2 or r % 2:
        raise ValueError(f"kls_asymptotic_bound requiere p >= 2 y r par >= 2, recibido p={p}, r={r}")
    return 2.0 / r * (p + 2.0) / p * (p + 2.0 * r - 2.0) / p


def kls_variance_bound(p: float, r: int, q: float) -> float:
    """Cota de lím d_N·Var(⟨μ_N,x^r⟩^q): r q² a^{2q−2} 4^{1−r} binom(2r−2, r−1)"""
    a = equilibrium_moment(p, r // 2)
    return r * q * q * a ** (2 * q - 2) * 4.0 ** (1 - r) * float(comb(2 * r - 2, r - 1, exact=True))


def kls_variance_limit(p: float, beta: float, r: int, q: float) -> float:
    """lím d_N·Var(⟨μ_N,x^r⟩^q) = (β/2) q² a^{2q−2} σ²(x^r)"""
    a = equilibrium_moment(p, r // 2)
    return 0.5 * beta * q * q * a ** (2 * q - 2) * clt_variance(monomial(r), beta)


def kls_limit_moments(p: float, r: int, q: float) -> KlsMoments:
    """Valores límite de G_{r,q}, G_{2,1} y E[⟨μ_N,x^r⟩^{2q−2}⟨μ_N,x^{2r−2}⟩] (sin varianza)"""
    a = equilibrium_moment(p, r // 2)
    return KlsMoments(
        G_r2q=a ** (2 * q),
        G_rq=a ** q,
        G_21=equilibrium_moment(p, 1),
        E_mixed=a ** (2 * q - 2) * equilibrium_moment(p, r - 1),
    )


def kls_ratio_limit(p: float, beta: float, r: int, q: float) -> float:
    """
    Límite N→∞ del cociente: [L − p·a^{2q}·v₀²]/((rq)²·M), v₀ = rq/p
    Siempre por debajo de kls_asymptotic_bound
    """
    limit = kls_limit_moments(p, r, q)
    v0 = r * q / p
    numerator = kls_variance_limit(p, beta, r, q) - p * limit.G_r2q * v0 * v0
    return numerator / ((r * q) ** 2 * limit.G_21 * limit.E_mixed)


def _kls_ratio_parts(G_r2q, G_rq, G_21, E_mixed, p, beta, r, q, N):
    d = schatten_dim(N, beta)
    u = 1.0 + d / p
    v0, v1, v2 = r * q / p, 2.0 / p, 2.0 * (r * q - 1.0) / p
    log_prefactor = log_gamma_ratio(u, v1) + log_gamma_ratio(u, v2) - log_gamma_ratio(u, 2.0 * v0)
    kappa_minus_one = math.expm1(log_gamma_convexity(u, v0))
    numerator = (G_r2q - G_rq * G_rq) - kappa_minus_one * G_rq * G_rq
    scale = d / (r * q) ** 2 * math.exp(log_prefactor) / (G_21 * E_mixed)
    return numerator, scale, 1.0 + kappa_minus_one


def kls_ratio_finite_N(moments: KlsMoments, p: float, beta: int, r: int, q: float, N: int,
                       samples: Optional[np.ndarray] = None, bootstrap: int = 0,
                       seed: Optional[int] = None) -> KlsRatio:
    """
    Cota a N finito del cociente de Poincaré para Tr(X^r)^q en la bola de Schatten,
    con cocientes de Gamma en escala logarítmica y error por método delta
    samples: matriz (n, 4) con X^{2q}, X^q, ⟨μ_N,x²⟩ y X^{2q−2}⟨μ_N,x^{2r−2}⟩ por muestra, para bootstrap
    """
    numerator, scale, kappa = _kls_ratio_parts(
        moments.G_r2q, moments.G_rq, moments.G_21, moments.E_mixed, p, beta, r, q, N
    )
    ratio = scale * numerator
    gradient = np.array([
        scale,
        -2.0 * kappa * moments.G_rq * scale,
        -ratio / moments.G_21,
        -ratio / moments.E_mixed,
    ])
    if moments.covariance is not None:
        cov = np.asarray(moments.covariance, dtype=float)
    else:
        cov = np.diag([moments.se_G_r2q ** 2, moments.se_G_rq ** 2, moments.se_G_21 ** 2, moments.se_E_mixed ** 2])
    std_error = math.sqrt(max(float(gradient @ cov @ gradient), 0.0))
    num_gradient = np.array([1.0, -2.0 * kappa * moments.G_rq, 0.0, 0.0])
    numerator_se = math.sqrt(max(float(num_gradient @ cov @ num_gradient), 0.0))
    cancellation = abs(numerator) <= 2.0 * numerator_se
    if cancellation:
        logger.info(f"KLS p={p} r={r} q={q} N={N}: numerador {numerator:.3e} dentro del ruido ({numerator_se:.3e})")

    bootstrap_se = None
    if bootstrap > 0 and samples is not None:
        rng = np.random.default_rng(seed)
        data = np.asarray(samples, dtype=float)
        values = []
        for _ in range(bootstrap):
            resample = data[rng.integers(0, data.shape[0], data.shape[0])].mean(axis=0)
            num, sc, _ = _kls_ratio_parts(resample[0], resample[1], resample[2], resample[3], p, beta, r, q, N)
            values.append(sc * num)
        bootstrap_se = float(np.std(values, ddof=1))

    return KlsRatio(
        ratio=ratio,
        std_error=std_error,
        numerator=numerator,
        numerator_std_error=numerator_se,
        cancellation=cancellation,
        bootstrap_std_error=bootstrap_se,
    )
