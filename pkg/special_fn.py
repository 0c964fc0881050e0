"""
Special functions - Funciones especiales y constantes de partición exactas
c_p, dimensiones y volúmenes de Schatten, fórmula de Mehta en escala logarítmica
"""
import math
import logging
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.special import gammaln

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

ALLOWED_BETAS = (1, 2, 4)

# Umbral a partir del cual los cocientes de Gamma se evalúan con Stirling
_STIRLING_THRESHOLD = 1.0e3


class DomainError(ValueError):
    """Argumento fuera del dominio de una función especial"""


def log_gamma(x: ArrayLike) -> ArrayLike:
    """
    ln Γ(x) para x > 0 (escalar o array)
    """
    values = np.asarray(x, dtype=float)
    if np.any(values <= 0) or np.any(~np.isfinite(values)):
        raise DomainError(f"log_gamma requiere x > 0, recibido {x}")
    result = gammaln(values)
    if np.ndim(result) == 0:
        return float(result)
    return result


def _stirling_tail(x: ArrayLike) -> ArrayLike:
    # Σ B_2k / (2k(2k-1) x^(2k-1)), k = 1..4
    inv = 1.0 / np.asarray(x, dtype=float)
    inv2 = inv * inv
    return inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))


def log_gamma_ratio(u: float, a: float) -> float:
    """
    ln Γ(u+a) − ln Γ(u) sin cancelación para u grande
    """
    if u <= 0 or u + a <= 0:
        raise DomainError(f"log_gamma_ratio requiere u > 0 y u + a > 0, recibido u={u}, a={a}")
    if u < _STIRLING_THRESHOLD:
        return float(gammaln(u + a) - gammaln(u))
    return float(
        (u - 0.5) * math.log1p(a / u) + a * math.log(u + a) - a
        + _stirling_tail(u + a) - _stirling_tail(u)
    )


def log_gamma_convexity(u: float, v: float) -> float:
    """
    ln Γ(u) + ln Γ(u+2v) − 2 ln Γ(u+v), que es ≈ v²/u para u grande
    """
    if u <= 0 or u + 2 * v <= 0 or u + v <= 0:
        raise DomainError(f"log_gamma_convexity fuera de dominio: u={u}, v={v}")
    if u < _STIRLING_THRESHOLD:
        return float(gammaln(u) + gammaln(u + 2 * v) - 2 * gammaln(u + v))
    w = u + v
    eps = v / w
    return float(
        (w - 0.5) * math.log1p(-eps * eps) + 2.0 * v * math.atanh(eps)
        + _stirling_tail(u) + _stirling_tail(u + 2 * v) - 2.0 * _stirling_tail(w)
    )


@lru_cache(maxsize=256)
def c_p(p: float) -> float:
    """
    Constante de normalización c_p = Γ(p/2)Γ(1/2)/Γ((p+1)/2)
    Con esta elección el soporte de μ_V es [−1, 1]
    """
    if p < 1:
        raise DomainError(f"c_p requiere p >= 1, recibido {p}")
    return math.exp(gammaln(p / 2.0) + gammaln(0.5) - gammaln((p + 1.0) / 2.0))


def _check_beta(beta: float) -> None:
    if beta not in ALLOWED_BETAS:
        raise DomainError(f"beta debe ser uno de {ALLOWED_BETAS}, recibido {beta}")


def schatten_dim(N: int, beta: int) -> int:
    """Dimensión real d_N = βN(N−1)/2 + N del espacio de matrices autoadjuntas"""
    _check_beta(beta)
    if N < 1:
        raise DomainError(f"N debe ser >= 1, recibido {N}")
    return int(beta * N * (N - 1) // 2 + N)


def log_unitary_volume(N: int, beta: int) -> float:
    """
    ln |U_N(F)| = (βN(N+1)/4) ln 2π + N(1−β/2) ln 2 − Σ_k ln Γ(βk/2)
    """
    _check_beta(beta)
    k = np.arange(1, N + 1, dtype=float)
    return float(
        beta * N * (N + 1) / 4.0 * math.log(2 * math.pi)
        + N * (1.0 - beta / 2.0) * math.log(2.0)
        - np.sum(gammaln(beta * k / 2.0))
    )


def log_c_N(N: int, beta: int) -> float:
    """ln c_N = ln |U_N| − ln N! − N ln |U_1|"""
    if N < 1:
        raise DomainError(f"N debe ser >= 1, recibido {N}")
    return log_unitary_volume(N, beta) - float(gammaln(N + 1.0)) - N * log_unitary_volume(1, beta)


def mehta_log_partition(N: int, beta: float) -> float:
    """
    ln Z_N^G para V_G(x) = 2x² con peso e^{−(βN/2)ΣV_G}, forma producto de Mehta–Selberg:
    −(βN(N−1)/4 + N/2) ln(2Nβ) + (N/2) ln 2π + Σ_j [ln Γ(1+jβ/2) − ln Γ(1+β/2)]
    """
    if N < 1 or beta <= 0:
        raise DomainError(f"mehta_log_partition requiere N >= 1 y beta > 0, recibido N={N}, beta={beta}")
    j = np.arange(1, N + 1, dtype=float)
    selberg = np.sum(gammaln(1.0 + j * beta / 2.0)) - N * gammaln(1.0 + beta / 2.0)
    return float(
        -(beta * N * (N - 1) / 4.0 + N / 2.0) * math.log(2.0 * N * beta)
        + N / 2.0 * math.log(2.0 * math.pi)
        + selberg
    )
