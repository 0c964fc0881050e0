"""
Pydantic models for FreudGas
Parámetros del ensemble, configuración de muestreo, predicciones y reportes de verificación
"""
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from special_fn import c_p


class GridKind(str, Enum):
    ARCSINE = "arcsine"
    EQUILIBRIUM = "equilibrium"
    LEBESGUE = "lebesgue"


class SamplerMethod(str, Enum):
    AUTO = "auto"
    METROPOLIS = "metropolis"
    TRIDIAGONAL = "tridiagonal"


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


class Subcommand(str, Enum):
    PREDICT = "predict"
    SAMPLE = "sample"
    VERIFY_CLT = "verify-clt"
    VERIFY_LOCAL_LAW = "verify-local-law"
    VERIFY_LOOP = "verify-loop"
    FREE_ENERGY = "free-energy"
    SCHATTEN = "schatten"
    KLS = "kls"
    EQUILIBRIUM = "equilibrium"


class OutputFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


# ============================================================================
# MODELO
# ============================================================================

class FreudModel(BaseModel):
    """
    Ensemble P_α con potencial V_α(x) = α·c_p|x|^p + (1−α)·2x²
    """
    p: float = Field(ge=2.0)
    beta: float = Field(gt=0.0)
    alpha: float = Field(default=1.0, ge=0.0, le=1.0)
    N: int = Field(default=1, ge=1)

    class Config:
        frozen = True

    @property
    def cp(self) -> float:
        return c_p(self.p)

    @property
    def is_gaussian(self) -> bool:
        """True cuando μ_{V_α} es el semicírculo (α=0 o p=2)"""
        return self.alpha == 0.0 or self.p == 2.0

    def with_alpha(self, alpha: float) -> "FreudModel":
        return self.model_copy(update={"alpha": float(alpha)})

    def with_N(self, N: int) -> "FreudModel":
        return self.model_copy(update={"N": int(N)})

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        return self.alpha * self.cp * np.abs(x) ** self.p + (1.0 - self.alpha) * 2.0 * x * x

    def potential_derivative(self, x):
        x = np.asarray(x, dtype=float)
        return (
            self.alpha * self.p * self.cp * np.abs(x) ** (self.p - 1.0) * np.sign(x)
            + (1.0 - self.alpha) * 4.0 * x
        )

    def potential_second_derivative(self, x):
        x = np.asarray(x, dtype=float)
        return (
            self.alpha * self.p * (self.p - 1.0) * self.cp * np.abs(x) ** (self.p - 2.0)
            + (1.0 - self.alpha) * 4.0
        )

    def alpha_derivative(self, x):
        """∂_α V_α(x) = c_p|x|^p − 2x², independiente de α"""
        x = np.asarray(x, dtype=float)
        return self.cp * np.abs(x) ** self.p - 2.0 * x * x


# ============================================================================
# MUESTREO
# ============================================================================

class SamplerConfig(BaseModel):
    model: FreudModel
    proposal_sigma: Optional[float] = Field(default=None, gt=0.0)  # None = proposal_scale/N
    sweeps: int = Field(default=2000, ge=1)
    burn_in: int = Field(default=400, ge=0)
    thinning: int = Field(default=10, ge=1)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    adapt: bool = True
    method: SamplerMethod = SamplerMethod.AUTO
    debug_cache_checks: bool = False

    @model_validator(mode="after")
    def check_burn_in(self):
        if self.burn_in >= self.sweeps:
            raise ValueError(f"burn_in ({self.burn_in}) debe ser menor que sweeps ({self.sweeps})")
        return self

    def resolved_method(self) -> SamplerMethod:
        """auto usa el muestreador tridiagonal exacto cuando el ensemble es gaussiano"""
        if self.method != SamplerMethod.AUTO:
            return self.method
        if self.model.is_gaussian:
            return SamplerMethod.TRIDIAGONAL
        return SamplerMethod.METROPOLIS


# ============================================================================
# PREDICCIONES
# ============================================================================

class CltPrediction(BaseModel):
    mean: float
    variance: float = Field(ge=0.0)
    moments: List[float]

    @model_validator(mode="after")
    def check_moments(self):
        if self.moments and abs(self.moments[0] - self.mean) > 1e-12 * max(1.0, abs(self.mean)):
            raise ValueError("M_1 debe coincidir con la media")
        return self


class FreeEnergyExpansion(BaseModel):
    """(1/N²β) log Z_N = leading + nlogn_coeff·log N/N + f_minus1/N + o(1/N)"""
    p: float
    beta: float
    leading: float
    nlogn_coeff: float = 0.5
    f_minus1: float
    fg_minus1: float
    entropy: float


class SchattenCoeffs(BaseModel):
    """log |B(S_p^N)| = a N² log N + b N² + c N log N + d N + o(N)"""
    p: float
    beta: int
    a: float
    b: float
    c: float
    d: float

    @field_validator("a")
    @classmethod
    def check_negative_leading(cls, v):
        if v >= 0:
            raise ValueError(f"el coeficiente a debe ser negativo, recibido {v}")
        return v


class KlsMoments(BaseModel):
    """Estimaciones de G_{r,2q}, G_{r,q}, G_{2,1} y E[⟨μ_N,x^r⟩^{2q−2}⟨μ_N,x^{2r−2}⟩]"""
    G_r2q: float
    G_rq: float
    G_21: float
    E_mixed: float
    se_G_r2q: float = 0.0
    se_G_rq: float = 0.0
    se_G_21: float = 0.0
    se_E_mixed: float = 0.0
    covariance: Optional[List[List[float]]] = None  # orden (G_r2q, G_rq, G_21, E_mixed)


class KlsRatio(BaseModel):
    ratio: float
    std_error: float
    numerator: float
    numerator_std_error: float
    cancellation: bool
    bootstrap_std_error: Optional[float] = None


# ============================================================================
# REPORTES
# ============================================================================

class Estimate(BaseModel):
    value: float
    std_error: float
    n_samples: int


class Criteria(BaseModel):
    k: float = 3.0
    abs_tolerance: float = 0.0
    rel_tolerance: float = 0.0


class ReportRow(BaseModel):
    observable: str
    N: Optional[int] = None
    re_z: Optional[float] = None
    im_z: Optional[float] = None
    q: Optional[int] = None
    estimate: float
    std_error: Optional[float] = None
    theory_bound: Optional[float] = None
    verdict: Optional[Verdict] = None


class ExperimentReport(BaseModel):
    name: str
    model: Dict[str, float] = {}
    config: Dict[str, Any] = {}
    estimates: Dict[str, Estimate] = {}
    theory: Dict[str, float] = {}
    verdicts: Dict[str, Verdict] = {}
    criteria: Dict[str, Criteria] = {}
    notes: List[str] = []
    rows: List[ReportRow] = []
    seed: int = 0
    runtime_seconds: float = 0.0
    created_at: datetime = Field(default_factory=datetime.utcnow)

    class Config:
        from_attributes = True

    def overall(self) -> Verdict:
        """fail si alguno falla, pass si todos pasan, inconclusive en otro caso"""
        values = list(self.verdicts.values())
        if any(v == Verdict.FAIL for v in values):
            return Verdict.FAIL
        if values and all(v == Verdict.PASS for v in values):
            return Verdict.PASS
        return Verdict.INCONCLUSIVE

    def to_json(self) -> str:
        # Los campos de tiempo quedan fuera para que la salida sea reproducible byte a byte
        return self.model_dump_json(indent=2, exclude={"runtime_seconds", "created_at"})

    def timing(self) -> Dict[str, object]:
        return {"runtime_seconds": self.runtime_seconds, "created_at": self.created_at.isoformat()}


# ============================================================================
# CLI
# ============================================================================

class RunConfig(BaseModel):
    subcommand: Subcommand
    p: float = 4.0
    beta: float = 2.0
    alpha: float = 1.0
    N: int = 64
    replicas: int = 200
    sweeps: Optional[int] = None
    seed: Optional[int] = None
    threads: int = 0
    out: Optional[str] = None
    format: OutputFormat = OutputFormat.JSON
    f: str = "x2"
    z_grid: List[Tuple[float, float]] = [(0.3, 0.1)]  # (Re z, Im z)
    N_list: List[int] = [64, 128, 256, 512]
    q: int = 1
    r: int = 2
    moments: int = 4
    grid_order: Optional[int] = None
    verify: bool = False  # free-energy: añade la integración termodinámica

    class Config:
        extra = "forbid"

    @field_validator("p")
    @classmethod
    def check_p(cls, v):
        if v < 2:
            raise ValueError(f"p debe ser >= 2, recibido {v}")
        return v

    @field_validator("beta")
    @classmethod
    def check_beta(cls, v):
        if v <= 0:
            raise ValueError(f"beta debe ser > 0, recibido {v}")
        return v

    @field_validator("alpha")
    @classmethod
    def check_alpha(cls, v):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"alpha debe estar en [0, 1], recibido {v}")
        return v

    @field_validator("N", "replicas", "q", "moments")
    @classmethod
    def check_positive(cls, v):
        if v < 1:
            raise ValueError(f"se esperaba un entero >= 1, recibido {v}")
        return v

    @field_validator("r")
    @classmethod
    def check_r(cls, v):
        if v < 2 or v % 2:
            raise ValueError(f"r debe ser par y >= 2, recibido {v}")
        return v

    @field_validator("N_list")
    @classmethod
    def check_N_list(cls, v):
        if not v or any(n < 1 for n in v):
            raise ValueError(f"N_list debe contener enteros >= 1, recibido {v}")
        return sorted(v)

    def freud_model(self, N: Optional[int] = None) -> FreudModel:
        return FreudModel(p=self.p, beta=self.beta, alpha=self.alpha, N=N or self.N)

    @field_validator("z_grid")
    @classmethod
    def check_z_grid(cls, v):
        if not v or any(im == 0.0 for _, im in v):
            raise ValueError("z_grid requiere puntos con Im z != 0")
        return v

    def z_points(self) -> List[complex]:
        return [complex(re, im) for re, im in self.z_grid]

    def echo(self) -> Dict[str, Any]:
        """Copia textual de la configuración para incluir en cada artefacto"""
        return self.model_dump(mode="json")
