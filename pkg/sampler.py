"""
Sampler - Generación Monte Carlo de configuraciones bajo P_α
Metropolis de un sitio para el gas logarítmico, muestreador tridiagonal exacto
para el caso gaussiano y observables espectrales
"""
import csv
import io
import json
import math
import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from config import settings
from equilibrium import build_grid, equilibrium_expectation, equilibrium_quantile
from master_op import TestFunction
from models import FreudModel, GridKind, SamplerConfig, SamplerMethod
from stieltjes import f_alpha_z, g_alpha_complex, h_alpha

logger = logging.getLogger(__name__)

ACCEPTANCE_RANGE = (0.05, 0.95)

# Exponente del paso de Robbins–Monro
ADAPT_EXPONENT = 0.6


class CacheDriftError(RuntimeError):
    """Las energías cacheadas se han separado del recálculo completo"""


def make_rng(seed: int) -> np.random.Generator:
    """Generador Philox (contador) a partir de una semilla de 64 bits"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def spawn_seeds(seed: int, n: int) -> list:
    """Semillas de 64 bits independientes por réplica, derivadas por SeedSequence.spawn"""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


# ============================================================================
# CONFIGURACIONES
# ============================================================================

def _pair_energy(positions: np.ndarray) -> float:
    """Σ_{i<j} log|λᵢ − λⱼ|"""
    diff = np.abs(positions[:, None] - positions[None, :])
    upper = diff[np.triu_indices(positions.size, k=1)]
    if np.any(upper == 0.0):
        return -math.inf
    return float(np.sum(np.log(upper)))


@dataclass
class ParticleConfiguration:
    positions: np.ndarray
    cached_pair_energy: float
    cached_potential: float

    @classmethod
    def from_positions(cls, model: FreudModel, positions) -> "ParticleConfiguration":
        positions = np.array(positions, dtype=float)
        return cls(positions, _pair_energy(positions), float(np.sum(model.potential(positions))))

    @property
    def N(self) -> int:
        return int(self.positions.size)

    def cache_drift(self, model: FreudModel) -> float:
        pair = _pair_energy(self.positions)
        potential = float(np.sum(model.potential(self.positions)))
        return max(abs(pair - self.cached_pair_energy), abs(potential - self.cached_potential))

    def resync(self, model: FreudModel) -> None:
        self.cached_pair_energy = _pair_energy(self.positions)
        self.cached_potential = float(np.sum(model.potential(self.positions)))


def _positions(config) -> np.ndarray:
    if isinstance(config, ParticleConfiguration):
        return config.positions
    return np.asarray(config, dtype=float)


def log_density_unnormalized(model: FreudModel, config) -> float:
    """β·Σ_{i<j} log|λᵢ−λⱼ| − (βN/2)·ΣV_α(λᵢ); −∞ si dos partículas coinciden"""
    if isinstance(config, ParticleConfiguration):
        pair, potential = config.cached_pair_energy, config.cached_potential
        N = config.N
    else:
        positions = _positions(config)
        pair, potential = _pair_energy(positions), float(np.sum(model.potential(positions)))
        N = positions.size
    if pair == -math.inf:
        return -math.inf
    return model.beta * pair - 0.5 * model.beta * N * potential


# ============================================================================
# METROPOLIS
# ============================================================================

def _potential_scalar(model: FreudModel, x: float) -> float:
    return model.alpha * model.cp * abs(x) ** model.p + (1.0 - model.alpha) * 2.0 * x * x


def metropolis_sweep(config: ParticleConfiguration, sampler_config: SamplerConfig,
                     rng: np.random.Generator, proposal_sigma: Optional[float] = None) -> int:
    """
    Barrido sistemático de N propuestas gaussianas de un sitio λᵢ → λᵢ + σξ
    ΔE se calcula en O(N) por propuesta; devuelve el número de aceptaciones
    """
    model = sampler_config.model
    positions = config.positions
    N = positions.size
    sigma = proposal_sigma or sampler_config.proposal_sigma or settings.proposal_scale / N
    beta = model.beta
    potential_scale = 0.5 * beta * N
    steps = sigma * rng.standard_normal(N)
    log_u = np.log(rng.random(N))
    accepted = 0
    for i in range(N):
        old = positions[i]
        new = old + steps[i]
        d_old = np.abs(old - positions)
        d_new = np.abs(new - positions)
        d_old[i] = 1.0
        d_new[i] = 1.0
        if np.any(d_new == 0.0):
            continue
        delta_pair = float(np.sum(np.log(d_new)) - np.sum(np.log(d_old)))
        delta_potential = _potential_scalar(model, new) - _potential_scalar(model, old)
        delta = beta * delta_pair - potential_scale * delta_potential
        if log_u[i] < delta:
            positions[i] = new
            config.cached_pair_energy += delta_pair
            config.cached_potential += delta_potential
            accepted += 1
    return accepted


@dataclass
class ChainOutput:
    samples: np.ndarray  # (n_samples, N)
    sweep_indices: np.ndarray
    acceptance_rate: float
    proposal_sigma: float
    seed: int
    method: SamplerMethod = SamplerMethod.METROPOLIS
    flagged: bool = False
    model: Optional[FreudModel] = field(default=None, repr=False)

    @property
    def n_samples(self) -> int:
        return int(self.samples.shape[0])

    def snapshots(self) -> Iterator[ParticleConfiguration]:
        for row in self.samples:
            yield ParticleConfiguration.from_positions(self.model, row)

    def header_json(self, sampler_config: Optional[SamplerConfig] = None) -> str:
        header = {
            "seed": self.seed,
            "method": self.method.value,
            "n_samples": self.n_samples,
            "acceptance_rate": self.acceptance_rate,
            "proposal_sigma": self.proposal_sigma,
            "flagged": self.flagged,
        }
        if sampler_config is not None:
            header["config"] = sampler_config.model_dump(mode="json")
        return json.dumps(header, indent=2, sort_keys=True)

    def to_csv(self, stream: Optional[io.TextIOBase] = None) -> str:
        """Una fila por muestra: seed, sweep y las N posiciones"""
        buffer = stream or io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        N = self.samples.shape[1]
        writer.writerow(["seed", "sweep"] + [f"lambda_{k}" for k in range(N)])
        for sweep, row in zip(self.sweep_indices, self.samples):
            writer.writerow([self.seed, int(sweep)] + [repr(float(v)) for v in row])
        return buffer.getvalue() if stream is None else ""


class MetropolisSampler:
    """Cadena de Metropolis de un sitio con adaptación de σ durante el burn-in"""

    def __init__(self, sampler_config: SamplerConfig):
        self.config = sampler_config
        self.model = sampler_config.model
        self.rng = make_rng(sampler_config.seed)

    def initial_configuration(self, shuffle: bool = False) -> ParticleConfiguration:
        """Partículas en los cuantiles k/(N+1) de μ_{V_α}"""
        N = self.model.N
        positions = equilibrium_quantile(self.model, np.arange(1, N + 1) / (N + 1.0))
        positions = np.atleast_1d(positions)
        if shuffle:
            positions = self.rng.permutation(positions)
        return ParticleConfiguration.from_positions(self.model, positions)

    def run(self, initial: Optional[ParticleConfiguration] = None) -> ChainOutput:
        cfg = self.config
        N = self.model.N
        state = initial or self.initial_configuration()
        log_sigma = math.log(cfg.proposal_sigma or settings.proposal_scale / N)
        target = settings.acceptance_target
        samples, sweeps = [], []
        accepted_after_burn_in = 0
        proposals_after_burn_in = 0
        interval = settings.cache_check_interval

        for sweep in range(cfg.sweeps):
            accepted = metropolis_sweep(state, cfg, self.rng, math.exp(log_sigma))
            if sweep < cfg.burn_in:
                if cfg.adapt:
                    gamma = (sweep + 1.0) ** (-ADAPT_EXPONENT)
                    log_sigma += gamma * (accepted / N - target)
            else:
                accepted_after_burn_in += accepted
                proposals_after_burn_in += N
                if (sweep - cfg.burn_in) % cfg.thinning == cfg.thinning - 1:
                    samples.append(state.positions.copy())
                    sweeps.append(sweep)
            if cfg.debug_cache_checks and (sweep + 1) % interval == 0:
                drift = state.cache_drift(self.model)
                if drift > 1e-9 * N:
                    raise CacheDriftError(f"deriva de caché {drift:.3e} en el barrido {sweep + 1}")

        rate = accepted_after_burn_in / max(proposals_after_burn_in, 1)
        flagged = not ACCEPTANCE_RANGE[0] <= rate <= ACCEPTANCE_RANGE[1]
        if flagged:
            logger.warning(f"Tasa de aceptación {rate:.3f} fuera de {ACCEPTANCE_RANGE} (seed={cfg.seed})")
        return ChainOutput(
            samples=np.array(samples).reshape(len(samples), N),
            sweep_indices=np.array(sweeps, dtype=int),
            acceptance_rate=rate,
            proposal_sigma=math.exp(log_sigma),
            seed=cfg.seed,
            method=SamplerMethod.METROPOLIS,
            flagged=flagged,
            model=self.model,
        )


# ============================================================================
# MUESTREADOR TRIDIAGONAL
# ============================================================================

def sample_gaussian_tridiagonal(N: int, beta: float, rng: np.random.Generator) -> ParticleConfiguration:
    """
    Modelo β-Hermite tridiagonal: diagonal N(0,2)/√2, subdiagonal χ_{β(N−k)}/√2
    Sus autovalores x tienen peso e^{−Σx²/2}; λ = x/√(2Nβ) da el peso e^{−NβΣλ²} de P₀
    """
    if beta <= 0:
        raise ValueError(f"beta debe ser > 0, recibido {beta}")
    diagonal = rng.normal(0.0, math.sqrt(2.0), N) / math.sqrt(2.0)
    if N == 1:
        eigenvalues = diagonal
    else:
        off_diagonal = np.sqrt(rng.chisquare(beta * np.arange(N - 1, 0, -1))) / math.sqrt(2.0)
        eigenvalues = eigvalsh_tridiagonal(diagonal, off_diagonal, lapack_driver="sterf")
    model = FreudModel(p=2.0, beta=beta, alpha=0.0, N=N)
    return ParticleConfiguration.from_positions(model, eigenvalues / math.sqrt(2.0 * N * beta))


def _tridiagonal_chain(cfg: SamplerConfig) -> ChainOutput:
    rng = make_rng(cfg.seed)
    model = cfg.model
    n_samples = max((cfg.sweeps - cfg.burn_in) // cfg.thinning, 1)
    samples = np.empty((n_samples, model.N))
    for k in range(n_samples):
        samples[k] = np.sort(sample_gaussian_tridiagonal(model.N, model.beta, rng).positions)
    return ChainOutput(
        samples=samples,
        sweep_indices=np.arange(n_samples),
        acceptance_rate=1.0,
        proposal_sigma=0.0,
        seed=cfg.seed,
        method=SamplerMethod.TRIDIAGONAL,
        model=model,
    )


def sample_chain(cfg: SamplerConfig) -> ChainOutput:
    """Ejecuta la cadena con el método resuelto por la configuración"""
    method = cfg.resolved_method()
    if method == SamplerMethod.TRIDIAGONAL:
        if not cfg.model.is_gaussian:
            raise ValueError("el muestreador tridiagonal sólo es exacto para α=0 o p=2")
        return _tridiagonal_chain(cfg)
    return MetropolisSampler(cfg).run()


# ============================================================================
# OBSERVABLES
# ============================================================================

Config = Union[ParticleConfiguration, np.ndarray]


def linear_statistic(config: Config, model: FreudModel, f: TestFunction, mean: Optional[float] = None) -> float:
    """L_N(f) = Σ f(λ_k) − N·⟨μ_{V_α}, f⟩"""
    positions = _positions(config)
    if mean is None:
        mean = equilibrium_expectation(model, f.f)
    return float(np.sum(f.f(positions)) - positions.size * mean)


def linear_statistics(samples: np.ndarray, model: FreudModel, f: TestFunction,
                      order: Optional[int] = None) -> np.ndarray:
    """L_N(f) para cada fila de una matriz de muestras"""
    mean = equilibrium_expectation(model, f.f, order)
    samples = np.atleast_2d(samples)
    return np.sum(f.f(samples), axis=1) - samples.shape[1] * mean


def _check_nonreal(z) -> complex:
    z = complex(z)
    if z.imag == 0.0:
        raise ValueError(f"se requiere Im z != 0, recibido {z}")
    return z


def empirical_stieltjes(config: Config, z) -> complex:
    """s_N(z) = (1/N)Σ 1/(λ_k − z)"""
    z = _check_nonreal(z)
    positions = _positions(config)
    return complex(np.mean(1.0 / (positions - z)))


def empirical_stieltjes_derivative(config: Config, z) -> complex:
    """s_N′(z) = (1/N)Σ 1/(λ_k − z)²"""
    z = _check_nonreal(z)
    positions = _positions(config)
    return complex(np.mean(1.0 / (positions - z) ** 2))


def anisotropy(config: Config, model: FreudModel, f: TestFunction, order: Optional[int] = None) -> float:
    """
    A_N(f) = N²∬ (f(λ)−f(λ′))/(λ−λ′) d(μ_N−μ)(λ) d(μ_N−μ)(λ′), diagonal f′(λ)
    """
    positions = _positions(config)
    N = positions.size
    grid = build_grid(GridKind.EQUILIBRIUM, order or settings.grid_order, model)
    t, w = grid.nodes, grid.weights

    def quotient_matrix(a, b):
        diff = a[:, None] - b[None, :]
        same = diff == 0.0
        values = (f.f(a)[:, None] - f.f(b)[None, :]) / np.where(same, 1.0, diff)
        return np.where(same, f.df(a)[:, None], values)

    empirical = float(np.sum(quotient_matrix(positions, positions)))
    cross = float(np.sum(quotient_matrix(positions, t) @ w))
    equilibrium_part = float(w @ quotient_matrix(t, t) @ w)
    return empirical - 2.0 * N * cross + N * N * equilibrium_part


def loop_observable(config: Config, model: FreudModel, z, h: Optional[complex] = None,
                    order: Optional[int] = None) -> complex:
    """
    P_α(z) + L_N(f_{α,z})/(Nz) + (1/N)(2/β − 1)·s_N′(z)
    con P_α(z) = s_N² + (g_α(z)/z)·s_N + h_α(z)/z
    """
    z = _check_nonreal(z)
    positions = _positions(config)
    N = positions.size
    h = complex(h_alpha(model, z, order)) if h is None else h
    g = complex(g_alpha_complex(model, z))
    s = empirical_stieltjes(positions, z)
    ds = empirical_stieltjes_derivative(positions, z)
    P = s * s + g / z * s + h / z
    linear = complex(np.sum(f_alpha_z(model, z, positions))) - N * h
    return P + linear / (N * z) + (2.0 / model.beta - 1.0) * ds / N


def loop_observables(samples: np.ndarray, model: FreudModel, z, order: Optional[int] = None) -> np.ndarray:
    z = _check_nonreal(z)
    h = complex(h_alpha(model, z, order))
    return np.array([loop_observable(row, model, z, h) for row in np.atleast_2d(samples)])


def count_in_interval(config: Config, a: float, b: float) -> int:
    """#{k : λ_k ∈ [a, b]}"""
    if a > b:
        raise ValueError(f"se requiere a <= b, recibido a={a}, b={b}")
    positions = _positions(config)
    return int(np.count_nonzero((positions >= a) & (positions <= b)))
