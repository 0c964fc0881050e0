#!/usr/bin/env python3
"""
FreudGas - Quick Start Demo
Predicciones en forma cerrada y una verificación Monte Carlo rápida
"""

import numpy as np

from asymptotics import clt_prediction, free_energy_expansion, kls_asymptotic_bound, schatten_volume_coeffs
from equilibrium import equilibrium_moment, ullman_density
from harness import run_loop_equation_experiment
from master_op import get_test_function
from models import FreudModel
from stieltjes import quadratic_residual


def main():
    print("=" * 60)
    print("🚀 FreudGas - Beta-ensembles con pesos de Freud")
    print("=" * 60)
    print()

    model = FreudModel(p=2.5, beta=2.0, alpha=1.0, N=32)

    # Medida de equilibrio
    print("📐 Medida de equilibrio (Ullman):")
    print("-" * 60)
    for x in (0.0, 0.5, 0.9):
        print(f"  ρ({x}) = {ullman_density(model.p, x):.6f}")
    print(f"  ∫x² dμ = {equilibrium_moment(model.p, 1):.6f}")
    print()

    # Relación cuadrática
    print("🧮 Relación cuadrática de s_V:")
    print("-" * 60)
    z = 0.3 + 0.1j
    print(f"  |residuo| en z={z}: {quadratic_residual(model, z):.2e}")
    print()

    # TCL
    print("📊 Predicción del TCL para f = x²:")
    print("-" * 60)
    prediction = clt_prediction(model, get_test_function("x2"))
    print(f"  Media: {prediction.mean:.6f}")
    print(f"  Varianza: {prediction.variance:.6f}")
    print(f"  Momentos: {np.round(prediction.moments, 6).tolist()}")
    print()

    # Energía libre y Schatten
    print("🔥 Energía libre y bolas de Schatten:")
    print("-" * 60)
    expansion = free_energy_expansion(model.p, model.beta)
    coeffs = schatten_volume_coeffs(model.p, 2)
    print(f"  Término dominante: {expansion.leading:.6f}")
    print(f"  F^(-1): {expansion.f_minus1:.6f}  (gaussiano: {expansion.fg_minus1:.6f})")
    print(f"  Schatten a, b, c, d: {coeffs.a:.4f}, {coeffs.b:.4f}, {coeffs.c:.4f}, {coeffs.d:.4f}")
    print(f"  Cota KLS asintótica (r=2): {kls_asymptotic_bound(model.p, 2):.4f}")
    print()

    # Ecuación de lazo
    print("🎲 Ecuación de lazo (Monte Carlo, 40 réplicas):")
    print("-" * 60)
    report = run_loop_equation_experiment(model.with_N(8), [0.5 + 0.5j], replicas=40, sweeps=500, threads=1)
    for key, estimate in report.estimates.items():
        print(f"  {key}: {estimate.value:+.2e} ± {estimate.std_error:.1e} → {report.verdicts[key].value}")
    print()

    print("=" * 60)
    print(f"✅ Veredicto global: {report.overall().value}")
    print("=" * 60)


if __name__ == "__main__":
    main()
