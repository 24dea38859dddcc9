"""Seeded property battery: every conserved quantity and identity, checked.

Each check draws reproducible random problem instances (numpy
SeedSequence children of one root seed), computes a worst-case metric,
and compares it against the pinned threshold.  The CLI ``verify`` verb
runs the whole battery; the acceptance tests run the same functions at
their full pinned scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import (
    CriticalPointSpec,
    critical_point,
    differential_check,
    hamiltonian_rate,
    invariant_report,
)
from .fixed_domain import (
    evolve_direct,
    evolve_factorized,
    evolve_series,
)
from .linalg import adjoint_inverse, hermitian_part, unitary_exponential
from .moving_domain import (
    AmbientSpace,
    assemble_moving_solution,
    build_moving_solution,
    gauge_equivalence_check,
    image_projector,
    weak_residual,
)
from .scenario import FieldProfile, HamiltonianProfile, ScenarioConfig


@dataclass(frozen=True)
class CheckResult:
    name: str
    metric: float
    threshold: float
    comparison: str  # "<=" or ">="
    passed: bool

    def __str__(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.name}: {self.metric:.3e} "
                f"{self.comparison} {self.threshold:.3e}")


def _result(name: str, metric: float, threshold: float,
            comparison: str = "<=") -> CheckResult:
    if comparison == "<=":
        passed = metric <= threshold
    elif comparison == ">=":
        passed = metric >= threshold
    else:
        raise ValueError(f"unknown comparison {comparison!r}")
    return CheckResult(name=name, metric=float(metric), threshold=float(threshold),
                       comparison=comparison, passed=passed)


# ---------------------------------------------------------------------------
# Reproducible random instances


def crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(crandn(rng, n, n))
    d = np.diagonal(r)
    return q * (d.conj() / np.abs(d))


def random_hermitian(rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
    """Random Hermitian with eigenvalues drawn uniformly from [lo, hi]."""
    q = random_unitary(rng, n)
    w = rng.uniform(lo, hi, size=n)
    return hermitian_part((q * w) @ q.conj().T)


def random_full_rank(rng: np.random.Generator, n: int, smin: float,
                     smax: float) -> np.ndarray:
    """Random matrix with singular values drawn uniformly from [smin, smax]."""
    u = random_unitary(rng, n)
    v = random_unitary(rng, n)
    s = rng.uniform(smin, smax, size=n)
    return (u * s) @ v.conj().T


def random_orthonormal_columns(rng: np.random.Generator, rows: int,
                               cols: int) -> np.ndarray:
    q, r = np.linalg.qr(crandn(rng, rows, cols))
    d = np.diagonal(r)
    return q * (d.conj() / np.abs(d))


def random_scenario(rng: np.random.Generator, dim: int, t_end: float = 1.0,
                    dt: float = 1e-3, output_stride: int = 100) -> ScenarioConfig:
    """Time-dependent H (linear blend of two PD samples) and sinusoidal B.

    Magnitudes are kept at desk scale (||H|| <~ 2.5, ||H_B|| <~ 4) so the
    fixed-step integrators run well inside their accuracy budgets.
    """
    h0 = random_hermitian(rng, dim, 0.5, 2.5)
    h1 = hermitian_part(h0 + random_hermitian(rng, dim, -0.4, 0.4))
    hamiltonian = HamiltonianProfile.interpolated([0.0, t_end], [h0, h1])
    field = FieldProfile.sinusoid(
        amplitude=rng.uniform(0.2, 0.5),
        frequency=rng.uniform(0.1, 0.4),
        phase=rng.uniform(0.0, 2.0 * np.pi),
        offset=rng.uniform(0.5, 0.9),
    )
    k0 = random_full_rank(rng, dim, 0.7, 1.5)
    return ScenarioConfig(hbar=1.0, hamiltonian=hamiltonian, field=field,
                          initial_k=k0, t_end=t_end, dt=dt,
                          output_stride=output_stride)


def random_constant_scenario(rng: np.random.Generator, dim: int,
                             t_end: float = 0.5, dt: float = 1e-3,
                             output_stride: int = 100) -> ScenarioConfig:
    hamiltonian = HamiltonianProfile.constant(random_hermitian(rng, dim, 0.5, 2.5))
    field = FieldProfile.constant(rng.uniform(0.3, 1.0))
    k0 = random_full_rank(rng, dim, 0.8, 1.4)
    return ScenarioConfig(hbar=1.0, hamiltonian=hamiltonian, field=field,
                          initial_k=k0, t_end=t_end, dt=dt,
                          output_stride=output_stride)


def random_diagonal_scenario(rng: np.random.Generator, dim: int,
                             t_end: float = 1.0, dt: float = 1e-3,
                             output_stride: int = 10):
    """Diagonal constant H, constant B, diagonal K0; returns (cfg, r0, phi0)."""
    energies = np.sort(rng.uniform(0.5, 2.5, size=dim))
    hamiltonian = HamiltonianProfile.constant(np.diag(energies).astype(complex))
    field = FieldProfile.constant(rng.uniform(0.3, 1.0))
    r0 = rng.uniform(0.7, 1.4, size=dim)
    phi0 = rng.uniform(0.0, 2.0 * np.pi, size=dim)
    k0 = np.diag(r0 * np.exp(1j * phi0))
    cfg = ScenarioConfig(hbar=1.0, hamiltonian=hamiltonian, field=field,
                         initial_k=k0, t_end=t_end, dt=dt,
                         output_stride=output_stride)
    return cfg, r0, phi0


def _child_rngs(seed: int, count: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


# ---------------------------------------------------------------------------
# Checks


def check_conservation_and_agreement(seed: int, scenario_count: int) -> list:
    """Conservation of K K* for both solvers plus their final-state distance."""
    (rng,) = _child_rngs(seed, 1)
    worst_fact = 0.0
    worst_direct = 0.0
    worst_cross = 0.0
    for _ in range(scenario_count):
        dim = int(rng.integers(2, 6))
        cfg = random_scenario(rng, dim)
        fact = evolve_factorized(cfg)
        direct = evolve_direct(cfg)
        worst_fact = max(worst_fact,
                         invariant_report(fact, cfg).max_kk_star_drift())
        worst_direct = max(worst_direct,
                           invariant_report(direct, cfg).max_kk_star_drift())
        worst_cross = max(worst_cross, float(np.linalg.norm(
            fact.final.k - direct.final.k)))
    return [
        _result("conservation_factorized", worst_fact, 1e-10),
        _result("conservation_direct", worst_direct, 1e-8),
        _result("cross_solver_distance", worst_cross, 1e-6),
    ]


def check_series_agreement(seed: int, scenario_count: int, terms: int = 30) -> list:
    """Constant-coefficient series vs both solvers at t = 0.5."""
    (rng,) = _child_rngs(seed, 1)
    worst_fact = 0.0
    worst_direct = 0.0
    for _ in range(scenario_count):
        dim = int(rng.integers(2, 6))
        cfg = random_constant_scenario(rng, dim, t_end=0.5)
        series = evolve_series(cfg, terms)
        fact = evolve_factorized(cfg)
        direct = evolve_direct(cfg)
        for s_state, f_state, d_state in zip(series.states, fact.states,
                                             direct.states):
            worst_fact = max(worst_fact, float(np.linalg.norm(
                s_state.k - f_state.k)))
            worst_direct = max(worst_direct, float(np.linalg.norm(
                s_state.k - d_state.k)))
    return [
        _result("series_vs_factorized", worst_fact, 1e-9),
        _result("series_vs_direct", worst_direct, 1e-9),
    ]


def check_diagonal_closed_form(seed: int, scenario_count: int) -> list:
    """Closed-form diagonal trajectory vs both solvers on the output grid."""
    from .diagnostics import special_diagonal_solution

    (rng,) = _child_rngs(seed, 1)
    worst = 0.0
    for _ in range(scenario_count):
        dim = int(rng.integers(2, 5))
        cfg, r0, phi0 = random_diagonal_scenario(rng, dim)
        h0 = cfg.hamiltonian.sample(0.0)
        b = cfg.field.value
        fact = evolve_factorized(cfg)
        direct = evolve_direct(cfg)
        for f_state, d_state in zip(fact.states, direct.states):
            reference = special_diagonal_solution(h0, b, r0, phi0, f_state.t,
                                                  cfg.hbar)
            worst = max(worst, float(np.linalg.norm(f_state.k - reference)))
            worst = max(worst, float(np.linalg.norm(d_state.k - reference)))
    return [_result("diagonal_closed_form", worst, 1e-8)]


def check_critical_points(seed: int, draw_count: int = 10) -> list:
    """Construction residual and pure-phase evolution of critical points."""
    (rng,) = _child_rngs(seed, 1)
    worst_residual = 0.0
    worst_phase = 0.0
    for _ in range(draw_count):
        dim = int(rng.integers(2, 6))
        h = random_hermitian(rng, dim, 0.5, 2.5)
        nu = float(np.linalg.eigvalsh(h)[-1]) + rng.uniform(0.4, 0.9)
        b = rng.uniform(0.5, 1.2)
        u = random_unitary(rng, dim)
        k = critical_point(CriticalPointSpec(nu=nu, unitary=u, hamiltonian=h, b=b))
        residual = np.linalg.norm(
            k @ h + (b * b) * adjoint_inverse(k) - nu * k)
        worst_residual = max(worst_residual,
                             float(residual) / float(np.linalg.norm(k)))
        cfg = ScenarioConfig(hbar=1.0,
                             hamiltonian=HamiltonianProfile.constant(h),
                             field=FieldProfile.constant(b),
                             initial_k=k, t_end=1.0, dt=1e-3,
                             output_stride=1000)
        final = evolve_direct(cfg).final
        expected = np.exp(1j * nu * final.t) * k
        worst_phase = max(worst_phase, float(np.linalg.norm(final.k - expected)))
    return [
        _result("critical_point_residual", worst_residual, 1e-11),
        _result("critical_point_phase_rotation", worst_phase, 1e-8),
    ]


def check_differential_identity(seed: int, draw_count: int) -> list:
    """Finite-difference directional derivative vs the flow pairing."""
    (rng,) = _child_rngs(seed, 1)
    worst = 0.0
    for _ in range(draw_count):
        dim = int(rng.integers(2, 6))
        k = random_full_rank(rng, dim, 0.6, 1.6)
        h = random_hermitian(rng, dim, 0.3, 2.0)
        b = rng.uniform(0.0, 1.2)
        direction = crandn(rng, dim, dim)
        check = differential_check(k, h, b, direction)
        rel = abs(check.lhs - check.rhs) / (1.0 + abs(check.rhs))
        worst = max(worst, float(rel))
    return [_result("differential_identity", worst, 1e-6)]


def check_energy_rate_order(seed: int) -> list:
    """Predicted vs observed energy rate converges at second order in dt."""
    (rng,) = _child_rngs(seed, 1)
    base = random_scenario(rng, 3, t_end=1.0, dt=1e-2, output_stride=1)
    errors = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        cfg = ScenarioConfig(hbar=base.hbar, hamiltonian=base.hamiltonian,
                             field=base.field, initial_k=base.initial_k,
                             t_end=base.t_end, dt=dt, output_stride=1,
                             pd_floor=base.pd_floor)
        points = hamiltonian_rate(evolve_factorized(cfg), cfg)
        errors.append(max(abs(p.predicted - p.observed) for p in points))
    rates = [np.log2(errors[i] / errors[i + 1]) for i in range(len(errors) - 1)]
    return [_result("energy_rate_order", float(min(rates)), 1.9, ">=")]


def check_constant_h_invariant(seed: int, scenario_count: int) -> list:
    """trace(K H K*) is an integral of motion when H is constant."""
    (rng,) = _child_rngs(seed, 1)
    worst = 0.0
    for _ in range(scenario_count):
        dim = int(rng.integers(2, 6))
        hamiltonian = HamiltonianProfile.constant(random_hermitian(rng, dim, 0.5, 2.5))
        field = FieldProfile.sinusoid(amplitude=rng.uniform(0.2, 0.5),
                                      frequency=rng.uniform(0.1, 0.4),
                                      phase=rng.uniform(0.0, 2.0 * np.pi),
                                      offset=rng.uniform(0.5, 0.9))
        cfg = ScenarioConfig(hbar=1.0, hamiltonian=hamiltonian, field=field,
                             initial_k=random_full_rank(rng, dim, 0.7, 1.5),
                             t_end=1.0, dt=1e-3, output_stride=100)
        report = invariant_report(evolve_direct(cfg), cfg)
        worst = max(worst, report.max_trace_khk_drift())
    return [_result("constant_h_trace_invariant", worst, 1e-8)]


def _moving_setup(rng: np.random.Generator, dim_h1: int = 8, dim_h2: int = 5,
                  n: int = 3, t_end: float = 1.0):
    h0 = random_hermitian(rng, dim_h1, 0.5, 2.5)
    h1 = hermitian_part(h0 + random_hermitian(rng, dim_h1, -0.4, 0.4))
    space = AmbientSpace(
        dim_h1=dim_h1, dim_h2=dim_h2, n=n,
        ambient_hamiltonian=HamiltonianProfile.interpolated([0.0, t_end], [h0, h1]))
    psi0 = random_orthonormal_columns(rng, dim_h1, n)
    phi0 = random_orthonormal_columns(rng, dim_h2, n)
    a0 = random_full_rank(rng, n, 0.7, 1.4)
    field = FieldProfile.sinusoid(amplitude=rng.uniform(0.2, 0.5),
                                  frequency=rng.uniform(0.1, 0.4),
                                  phase=rng.uniform(0.0, 2.0 * np.pi),
                                  offset=rng.uniform(0.5, 0.9))
    return space, psi0, phi0, a0, field


def check_moving_domain(seed: int) -> list:
    """Image fixedness, radial conservation, weak-residual order, 1x1 form."""
    rng_main, rng_rank1 = _child_rngs(seed, 2)
    space, psi0, phi0, a0, field = _moving_setup(rng_main)
    solution = build_moving_solution(space, psi0, phi0, a0, field, hbar=1.0,
                                     t_end=1.0, dt=1e-3, output_stride=10)
    operators = assemble_moving_solution(space, solution.phi0,
                                         solution.samples(),
                                         solution.coefficient_samples())
    k0 = operators[0][1]
    p0 = image_projector(k0)
    gram0 = k0 @ k0.conj().T
    image_drift = 0.0
    radial_drift = 0.0
    for _, k in operators:
        image_drift = max(image_drift, float(np.linalg.norm(
            image_projector(k) - p0)))
        radial_drift = max(radial_drift, float(np.linalg.norm(
            k @ k.conj().T - gram0)))

    # Weak-residual order study on a refined grid.
    errors = []
    for dt in (4e-3, 2e-3, 1e-3):
        sol = build_moving_solution(space, psi0, phi0, a0, field, hbar=1.0,
                                    t_end=0.5, dt=dt, output_stride=1)
        ops = assemble_moving_solution(space, sol.phi0, sol.samples(),
                                       sol.coefficient_samples())
        residuals = weak_residual(ops, space, field, hbar=1.0)
        errors.append(max(r for _, r in residuals))
    rates = [np.log2(errors[i] / errors[i + 1]) for i in range(len(errors) - 1)]

    # Rank-one closed form: constant diagonal ambient H, constant B.
    dim = 6
    energies = np.sort(rng_rank1.uniform(0.5, 2.5, size=dim))
    space1 = AmbientSpace(
        dim_h1=dim, dim_h2=4, n=1,
        ambient_hamiltonian=HamiltonianProfile.constant(np.diag(energies).astype(complex)))
    psi1 = random_orthonormal_columns(rng_rank1, dim, 1)
    phi1 = random_orthonormal_columns(rng_rank1, 4, 1)
    r0 = float(rng_rank1.uniform(0.7, 1.4))
    phase0 = float(rng_rank1.uniform(0.0, 2.0 * np.pi))
    a1 = np.array([[r0 * np.exp(1j * phase0)]])
    b = float(rng_rank1.uniform(0.3, 1.0))
    sol1 = build_moving_solution(space1, psi1, phi1, a1,
                                 FieldProfile.constant(b), hbar=1.0,
                                 t_end=1.0, dt=1e-3, output_stride=100)
    ops1 = assemble_moving_solution(space1, sol1.phi0, sol1.samples(),
                                    sol1.coefficient_samples())
    h_ambient = space1.ambient_hamiltonian.sample(0.0)
    worst_rank1 = 0.0
    for t, k in ops1:
        psi_t = unitary_exponential(h_ambient, -t) @ psi1
        closed = (r0 * np.exp(1j * (phase0 + b * b * t / (r0 * r0)))
                  * (phi1 @ psi_t.conj().T))
        worst_rank1 = max(worst_rank1, float(np.linalg.norm(k - closed)))

    return [
        _result("moving_image_drift", image_drift, 1e-10),
        _result("moving_radial_drift", radial_drift, 1e-9),
        _result("weak_residual_order", float(min(rates)), 1.9, ">="),
        _result("moving_rank_one_closed_form", worst_rank1, 1e-10),
    ]


def check_gauge_equivalence(seed: int) -> list:
    """Two valid gauges of the same data produce the same physical operator."""
    (rng,) = _child_rngs(seed, 1)
    space, psi0, phi0, a0, field = _moving_setup(rng, dim_h1=6, dim_h2=5, n=2)
    distances = []
    for _ in range(2):
        c_prime = random_hermitian(rng, space.n, -0.8, 0.8)
        c_double = random_hermitian(rng, space.n, -0.8, 0.8)
        distances.append(gauge_equivalence_check(
            space, psi0, phi0, a0, field, hbar=1.0, t_end=1.0, dt=1e-3,
            c_prime=c_prime, c_double_prime=c_double))
    # Each gauged assembly is compared to the shared gauge-free one, so the
    # distance between the two gauged assemblies is bounded by the sum.
    return [_result("gauge_equivalence", float(sum(distances)), 1e-8)]


def check_rk4_order(seed: int) -> list:
    """Direct-solver self-convergence at fourth order (uniqueness regression)."""
    (rng,) = _child_rngs(seed, 1)
    base = random_scenario(rng, 3, t_end=1.0, dt=4e-3, output_stride=10 ** 9)
    finals = []
    for dt in (4e-3, 2e-3, 1e-3):
        cfg = ScenarioConfig(hbar=base.hbar, hamiltonian=base.hamiltonian,
                             field=base.field, initial_k=base.initial_k,
                             t_end=base.t_end, dt=dt, output_stride=10 ** 9,
                             pd_floor=base.pd_floor)
        finals.append(evolve_direct(cfg).final.k)
    d1 = float(np.linalg.norm(finals[0] - finals[1]))
    d2 = float(np.linalg.norm(finals[1] - finals[2]))
    rate = float(np.log2(d1 / d2))
    return [_result("rk4_self_convergence_order", rate, 3.5, ">=")]


def run_battery(seed: int = 42, scenario_count: int = 10, draw_count: int = 40,
                series_count: int = 5, diagonal_count: int = 5,
                constant_h_count: int = 5) -> list:
    """Run every check with child seeds derived from one root seed."""
    results = []
    results += check_conservation_and_agreement(seed + 1, scenario_count)
    results += check_series_agreement(seed + 2, series_count)
    results += check_diagonal_closed_form(seed + 3, diagonal_count)
    results += check_critical_points(seed + 4)
    results += check_differential_identity(seed + 5, draw_count)
    results += check_energy_rate_order(seed + 6)
    results += check_constant_h_invariant(seed + 7, constant_h_count)
    results += check_moving_domain(seed + 8)
    results += check_gauge_equivalence(seed + 9)
    results += check_rk4_order(seed + 10)
    return results
