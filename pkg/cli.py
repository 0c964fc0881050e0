#!/usr/bin/env python3
"""
FreudGas CLI - Punto de entrada de línea de comandos
Configuración, despacho de experimentos y emisión de resultados (JSON / CSV)

Uso:
  $ python cli.py predict --p 2.5 --beta 2 --f x2
  $ python cli.py free-energy --p 2 --beta 2
  $ python cli.py verify-loop --p 3 --beta 1 --N 32 --replicas 2000 --seed 7
  $ python cli.py verify-local-law --alpha 0 --N-list 64,128,256,512 --format csv --out local_law.csv
"""
import argparse
import csv
import io
import json
import logging
import sys
from typing import Any, Dict, List, Optional, Tuple

from pydantic import ValidationError

import database
from asymptotics import (
    clt_prediction,
    free_energy_expansion,
    schatten_expansion,
    schatten_log_volume,
    schatten_volume_coeffs,
)
from config import settings
from harness import (
    run_clt_experiment,
    run_equilibrium_convergence,
    run_kls_experiment,
    run_local_law_experiment,
    run_loop_equation_experiment,
    run_thermo_integration,
)
from master_op import TEST_FUNCTIONS, get_test_function
from models import ExperimentReport, OutputFormat, RunConfig, SamplerConfig, Subcommand, Verdict
from sampler import sample_chain
from special_fn import ALLOWED_BETAS, DomainError, mehta_log_partition

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INCONCLUSIVE = 2
EXIT_USAGE = 64

EXIT_CODES = {
    Verdict.PASS: EXIT_PASS,
    Verdict.FAIL: EXIT_FAIL,
    Verdict.INCONCLUSIVE: EXIT_INCONCLUSIVE,
}

LOCAL_LAW_COLUMNS = ["N", "re_z", "im_z", "q", "estimate", "std_error", "theory_bound", "verdict"]
REPORT_COLUMNS = ["observable", "estimate", "std_error", "n_samples", "theory", "verdict"]


class UsageError(Exception):
    """Argumentos o configuración inválidos (código de salida 64)"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ============================================================================
# CONVERSORES
# ============================================================================

def parse_N_list(text: str) -> List[int]:
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"lista de N inválida: {text!r}")


def parse_z_grid(text: str) -> List[Tuple[float, float]]:
    """'0.3+0.1i,0.5+0.5i' → [(0.3, 0.1), (0.5, 0.5)]"""
    points = []
    for item in text.split(","):
        item = item.strip().replace(" ", "")
        if not item:
            continue
        try:
            z = complex(item.replace("i", "j"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"punto complejo inválido: {item!r}")
        points.append((z.real, z.imag))
    return points


def parse_bool(text: str) -> bool:
    return str(text).strip().lower() in ("1", "true", "yes", "si", "sí", "on")


CONVERTERS = {
    "N_list": parse_N_list,
    "z_grid": parse_z_grid,
    "verify": parse_bool,
}


def read_config_file(path: str) -> Dict[str, Any]:
    """Fichero plano clave=valor; '#' inicia comentario"""
    values: Dict[str, Any] = {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.readlines()
    except OSError as e:
        raise UsageError(f"no se puede leer --config {path}: {e}")
    for number, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{number}: se esperaba clave=valor")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        try:
            values[key] = CONVERTERS[key](value) if key in CONVERTERS else value
        except argparse.ArgumentTypeError as e:
            raise UsageError(f"{path}:{number}: {e}")
    return values


# ============================================================================
# PARSER
# ============================================================================

def _default(name: str):
    return RunConfig.model_fields[name].default


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--p", type=float, default=S, help=f"Exponente de Freud p >= 2 (default: {_default('p')})")
    common.add_argument("--beta", type=float, default=S,
                        help=f"Temperatura inversa beta > 0; schatten/kls exigen 1, 2 o 4 (default: {_default('beta')})")
    common.add_argument("--alpha", type=float, default=S,
                        help=f"Interpolación alpha en [0, 1]; 0 = gaussiano (default: {_default('alpha')})")
    common.add_argument("--N", type=int, default=S, help=f"Número de partículas (default: {_default('N')})")
    common.add_argument("--replicas", type=int, default=S,
                        help=f"Cadenas independientes (default: {_default('replicas')})")
    common.add_argument("--sweeps", type=int, default=S,
                        help=f"Barridos de N propuestas por cadena (default: {settings.sweeps})")
    common.add_argument("--seed", type=int, default=S, help=f"Semilla de 64 bits (default: {settings.default_seed})")
    common.add_argument("--threads", type=int, default=S,
                        help="Procesos de la granja de réplicas; 0 = todos los núcleos (default: 0)")
    common.add_argument("--out", type=str, default=S, help="Fichero de salida (default: stdout)")
    common.add_argument("--format", choices=[f.value for f in OutputFormat], default=S,
                        help=f"Formato de salida (default: {_default('format').value})")
    common.add_argument("--f", choices=sorted(TEST_FUNCTIONS), default=S,
                        help=f"Función test del registro (default: {_default('f')})")
    common.add_argument("--z-grid", dest="z_grid", type=parse_z_grid, default=S,
                        help="Puntos complejos separados por comas, p.ej. 0.3+0.1i,0.5+0.5i (default: 0.3+0.1i)")
    common.add_argument("--N-list", dest="N_list", type=parse_N_list, default=S,
                        help="Valores de N separados por comas (default: 64,128,256,512)")
    common.add_argument("--q", type=int, default=S,
                        help=f"Exponente q (ley local: q <= 2; KLS: potencia) (default: {_default('q')})")
    common.add_argument("--r", type=int, default=S, help=f"Potencia par r de la traza en KLS (default: {_default('r')})")
    common.add_argument("--moments", type=int, default=S,
                        help=f"Número de momentos gaussianos K (default: {_default('moments')})")
    common.add_argument("--grid-order", dest="grid_order", type=int, default=S,
                        help="Nodos de cuadratura sobre [-1, 1] para predict y verify-* "
                             f"(default: {settings.grid_order})")
    common.add_argument("--verify", action="store_true", default=S,
                        help="free-energy: añade la integración termodinámica sobre --N-list (default: off)")
    common.add_argument("--config", type=str, default=S, help="Fichero clave=valor; los flags tienen prioridad")

    parser = _Parser(prog="freudgas", description="Beta-ensembles con pesos de Freud: predicción y verificación")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    descriptions = {
        Subcommand.PREDICT: "Media, varianza y momentos gaussianos del TCL para --f",
        Subcommand.SAMPLE: "Una cadena de Monte Carlo; escribe las instantáneas",
        Subcommand.VERIFY_CLT: "Momentos empíricos de L_N(f) frente a la predicción",
        Subcommand.VERIFY_LOCAL_LAW: "E|s_N - s_V|^q frente a N y pendiente log-log",
        Subcommand.VERIFY_LOOP: "Identidad exacta de la ecuación de lazo en --z-grid",
        Subcommand.FREE_ENERGY: "Desarrollo de (1/N²β) log Z_N",
        Subcommand.SCHATTEN: "Coeficientes del volumen de la bola de Schatten",
        Subcommand.KLS: "Cociente KLS a N finito para Tr(X^r)^q",
        Subcommand.EQUILIBRIUM: "Distancia KS entre la medida empírica y μ_V",
    }
    for subcommand, description in descriptions.items():
        subparsers.add_parser(subcommand.value, parents=[common], help=description, description=description)
    return parser


def parse_run_config(argv: Optional[List[str]] = None) -> RunConfig:
    namespace = vars(build_parser().parse_args(argv))
    values: Dict[str, Any] = {}
    if "config" in namespace:
        values.update(read_config_file(namespace.pop("config")))
    values.update(namespace)
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise UsageError(str(e))


# ============================================================================
# SALIDA
# ============================================================================

def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as handle:
            handle.write(text)
        logger.info(f"Resultado escrito en {out}")
    else:
        sys.stdout.write(text)


def _json(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, indent=2, sort_keys=False) + "\n"


def _csv_preamble(cfg: RunConfig) -> str:
    return f"# run_config: {json.dumps(cfg.echo(), sort_keys=True)}\n"


def report_to_csv(report: ExperimentReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    if report.rows and report.name == "local_law":
        writer.writerow(LOCAL_LAW_COLUMNS)
        for row in report.rows:
            writer.writerow([row.N, row.re_z, row.im_z, row.q, row.estimate, row.std_error,
                             row.theory_bound, row.verdict.value if row.verdict else ""])
        return buffer.getvalue()
    writer.writerow(REPORT_COLUMNS)
    for key, estimate in report.estimates.items():
        verdict = report.verdicts.get(key)
        writer.writerow([key, estimate.value, estimate.std_error, estimate.n_samples,
                         report.theory.get(key, ""), verdict.value if verdict else ""])
    for key, verdict in report.verdicts.items():
        if key not in report.estimates:
            writer.writerow([key, "", "", "", report.theory.get(key, ""), verdict.value])
    return buffer.getvalue()


def emit_report(cfg: RunConfig, report: ExperimentReport, extra: Optional[Dict[str, Any]] = None) -> int:
    if cfg.format == OutputFormat.CSV:
        _emit(_csv_preamble(cfg) + report_to_csv(report), cfg.out)
    else:
        payload = {"run_config": cfg.echo(), "report": json.loads(report.to_json())}
        if extra:
            payload.update(extra)
        _emit(_json(payload), cfg.out)
    if settings.store_runs:
        database.init_db()
        db = database.SessionLocal()
        try:
            run = database.save_report(db, report)
            logger.info(f"Reporte {report.name} guardado con id={run.id}")
        finally:
            db.close()
    logger.info(f"timing {report.name}: {json.dumps(report.timing())}")
    return EXIT_CODES[report.overall()]


def emit_values(cfg: RunConfig, key: str, values: Dict[str, Any]) -> int:
    if cfg.format == OutputFormat.CSV:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["quantity", "value"])
        for name, value in values.items():
            writer.writerow([name, json.dumps(value) if isinstance(value, (list, dict)) else value])
        _emit(_csv_preamble(cfg) + buffer.getvalue(), cfg.out)
    else:
        _emit(_json({"run_config": cfg.echo(), key: values}), cfg.out)
    return EXIT_PASS


# ============================================================================
# SUBCOMANDOS
# ============================================================================

def _seed(cfg: RunConfig) -> int:
    return settings.default_seed if cfg.seed is None else cfg.seed


def _threads(cfg: RunConfig) -> int:
    return cfg.threads or settings.worker_count()


def _matrix_beta(cfg: RunConfig) -> int:
    if cfg.beta not in ALLOWED_BETAS:
        raise UsageError(f"{cfg.subcommand.value} requiere beta en {ALLOWED_BETAS}, recibido {cfg.beta}")
    return int(cfg.beta)


def cmd_predict(cfg: RunConfig) -> int:
    f = get_test_function(cfg.f)
    prediction = clt_prediction(cfg.freud_model(), f, min(cfg.moments, 8), grid_order=cfg.grid_order)
    return emit_values(cfg, "prediction", {"f": f.label, **prediction.model_dump()})


def cmd_sample(cfg: RunConfig) -> int:
    sweeps = cfg.sweeps or settings.sweeps
    burn_in = int(settings.burn_in_fraction * sweeps)
    sampler_config = SamplerConfig(
        model=cfg.freud_model(),
        sweeps=sweeps,
        burn_in=burn_in,
        thinning=min(settings.thinning, sweeps - burn_in),
        seed=_seed(cfg),
        debug_cache_checks=settings.debug_cache_checks,
    )
    chain = sample_chain(sampler_config)
    if cfg.format == OutputFormat.CSV:
        _emit(_csv_preamble(cfg) + chain.to_csv(), cfg.out)
    else:
        _emit(_json({
            "run_config": cfg.echo(),
            "header": json.loads(chain.header_json(sampler_config)),
            "samples": chain.samples.tolist(),
        }), cfg.out)
    return EXIT_INCONCLUSIVE if chain.flagged else EXIT_PASS


def cmd_verify_clt(cfg: RunConfig) -> int:
    report = run_clt_experiment(cfg.freud_model(), get_test_function(cfg.f), cfg.replicas, min(cfg.moments, 4),
                                seed=_seed(cfg), sweeps=cfg.sweeps, threads=_threads(cfg),
                                grid_order=cfg.grid_order)
    return emit_report(cfg, report)


def cmd_verify_local_law(cfg: RunConfig) -> int:
    report = run_local_law_experiment(cfg.freud_model(), q_list=(cfg.q,), N_list=cfg.N_list, replicas=cfg.replicas,
                                      z_points=cfg.z_points(), seed=_seed(cfg), sweeps=cfg.sweeps,
                                      threads=_threads(cfg), grid_order=cfg.grid_order)
    return emit_report(cfg, report)


def cmd_verify_loop(cfg: RunConfig) -> int:
    report = run_loop_equation_experiment(cfg.freud_model(), cfg.z_points(), cfg.replicas, seed=_seed(cfg),
                                          sweeps=cfg.sweeps, threads=_threads(cfg), grid_order=cfg.grid_order)
    return emit_report(cfg, report)


def cmd_free_energy(cfg: RunConfig) -> int:
    expansion = free_energy_expansion(cfg.p, cfg.beta)
    if not cfg.verify:
        return emit_values(cfg, "free_energy", expansion.model_dump())
    report = run_thermo_integration(cfg.p, cfg.beta, cfg.N_list, cfg.replicas, seed=_seed(cfg),
                                    sweeps=cfg.sweeps, threads=_threads(cfg))
    return emit_report(cfg, report, {"free_energy": expansion.model_dump()})


def cmd_schatten(cfg: RunConfig) -> int:
    beta = _matrix_beta(cfg)
    coeffs = schatten_volume_coeffs(cfg.p, beta)
    values = {**coeffs.model_dump(), "N": cfg.N, "log_volume_expansion": schatten_expansion(coeffs, cfg.N)}
    if cfg.p == 2.0:
        # V = 2x² coincide con el potencial gaussiano: log Z_N es exacto
        values["log_volume_exact"] = schatten_log_volume(2.0, beta, cfg.N, mehta_log_partition(cfg.N, beta))
    return emit_values(cfg, "schatten", values)


def cmd_kls(cfg: RunConfig) -> int:
    report = run_kls_experiment(cfg.p, _matrix_beta(cfg), cfg.r, cfg.q, cfg.N, cfg.replicas, seed=_seed(cfg),
                                sweeps=cfg.sweeps, threads=_threads(cfg))
    return emit_report(cfg, report)


def cmd_equilibrium(cfg: RunConfig) -> int:
    report = run_equilibrium_convergence(cfg.freud_model(), cfg.N_list, cfg.replicas, seed=_seed(cfg),
                                         sweeps=cfg.sweeps, threads=_threads(cfg))
    return emit_report(cfg, report)


COMMANDS = {
    Subcommand.PREDICT: cmd_predict,
    Subcommand.SAMPLE: cmd_sample,
    Subcommand.VERIFY_CLT: cmd_verify_clt,
    Subcommand.VERIFY_LOCAL_LAW: cmd_verify_local_law,
    Subcommand.VERIFY_LOOP: cmd_verify_loop,
    Subcommand.FREE_ENERGY: cmd_free_energy,
    Subcommand.SCHATTEN: cmd_schatten,
    Subcommand.KLS: cmd_kls,
    Subcommand.EQUILIBRIUM: cmd_equilibrium,
}


def parse_and_dispatch(argv: Optional[List[str]] = None) -> int:
    """Ejecuta el subcomando pedido; 0 pass, 1 fail, 2 sólo inconclusive, 64 error de uso"""
    try:
        cfg = parse_run_config(argv)
        logger.info(f"{cfg.subcommand.value}: p={cfg.p} beta={cfg.beta} alpha={cfg.alpha} N={cfg.N}")
        return COMMANDS[cfg.subcommand](cfg)
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except (UsageError, DomainError, ValueError, KeyError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=settings.log_level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    return parse_and_dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
