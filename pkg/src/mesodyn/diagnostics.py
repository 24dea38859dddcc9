"""Conserved quantities, identities and special solutions.

Everything in here evaluates a trajectory (or a single operator) against
the structure the flow is supposed to preserve: the total energy
functional, its differential and time derivative, the conserved K K*,
the constant-H trace invariant, closed-form diagonal solutions, critical
points, and the flux-distribution postulate.

Finite-difference conventions, used everywhere: directional derivatives
use a centered step of 1e-5; time derivatives use the trajectory's own
sample spacing (centered inside, one-sided at the ends, so every report
entry is finite).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    InsufficientSamplesError,
    NearSingularError,
    NotDiagonalError,
    NuDoesNotDominateError,
    ZeroImageError,
)
from .fixed_domain import Trajectory
from .linalg import (
    adjoint_inverse,
    as_matrix,
    hermitian,
    hermitian_eigendecompose,
    hermitian_part,
    pairing,
    psd_inverse,
    psd_sqrt,
    require_square,
    require_unitary,
)
from .scenario import ScenarioConfig

DIRECTIONAL_STEP = 1e-5


def total_hamiltonian(k, h, b: float, pd_floor: float = 1e-12) -> float:
    """Total energy trace(K H K*) + B^2 log det(K K*).

    The log-determinant is evaluated as the sum of eigenvalue logs of
    K K*, which survives dimension growth without overflow.
    """
    a = require_square(k)
    hm = hermitian(h)
    gram = hermitian_part(a @ a.conj().T)
    w = np.linalg.eigvalsh(gram)
    if float(w[-1]) <= 0.0 or float(w[0]) <= (pd_floor * pd_floor) * float(w[-1]):
        raise NearSingularError(
            f"K K* eigenvalue ratio {float(w[0]):.3e}/{float(w[-1]):.3e} "
            f"crosses the floor")
    electronic = float(np.trace(a @ hm @ a.conj().T).real)
    entropy = float(np.sum(np.log(w)))
    return electronic + (b * b) * entropy


class DifferentialCheck(NamedTuple):
    """Finite-difference directional derivative vs the flow pairing.

    rhs is the first variation 2 Re trace((K H + B^2 (K*)^-1) L*);
    rhs_symplectic is the same value written through the symplectic form,
    2 w(i (K H + B^2 (K*)^-1), L).
    """

    lhs: float
    rhs: float
    rhs_symplectic: float


def differential_check(k, h, b: float, l, step: float = DIRECTIONAL_STEP,
                       pd_floor: float = 1e-12) -> DifferentialCheck:
    """Centered difference of the total energy along L vs its exact value.

    The real directional derivative of trace(K H K*) + B^2 log det(K K*)
    along L carries a factor 2 on both terms (each appears once
    holomorphically and once anti-holomorphically).
    """
    a = require_square(k)
    direction = as_matrix(l)
    flow = a @ hermitian(h) + (b * b) * adjoint_inverse(a, pd_floor)
    riem = 2.0 * pairing(flow, direction).riemannian
    sympl = 2.0 * pairing(1j * flow, direction).symplectic
    plus = total_hamiltonian(a + step * direction, h, b, pd_floor)
    minus = total_hamiltonian(a - step * direction, h, b, pd_floor)
    lhs = (plus - minus) / (2.0 * step)
    return DifferentialCheck(lhs=lhs, rhs=riem, rhs_symplectic=sympl)


class RatePoint(NamedTuple):
    t: float
    predicted: float
    observed: float


def _rate_arrays(times: np.ndarray, ks, cfg: ScenarioConfig):
    """Energy samples plus predicted and observed time derivatives."""
    h_samples = np.array([cfg.hamiltonian.sample(float(t)) for t in times])
    b_samples = np.array([cfg.field.sample(float(t)) for t in times])
    xi = np.array([
        total_hamiltonian(k, h_samples[i], float(b_samples[i]), cfg.pd_floor)
        for i, k in enumerate(ks)
    ])
    gram0 = hermitian_part(ks[0] @ ks[0].conj().T)
    logdet_r2 = float(np.sum(np.log(np.linalg.eigvalsh(gram0))))
    if cfg.hamiltonian.is_constant():
        h_dot = np.zeros_like(h_samples)
    else:
        h_dot = np.gradient(h_samples, times, axis=0)
    if cfg.field.kind == "constant":
        b_dot = np.zeros_like(b_samples)
    else:
        b_dot = np.gradient(b_samples, times)
    predicted = np.array([
        float(np.trace(ks[i] @ h_dot[i] @ ks[i].conj().T).real)
        + 2.0 * float(b_samples[i]) * float(b_dot[i]) * logdet_r2
        for i in range(len(ks))
    ])
    observed = np.gradient(xi, times)
    return xi, predicted, observed


def hamiltonian_rate(trajectory: Trajectory, cfg: ScenarioConfig) -> list:
    """Predicted vs observed d/dt of the total energy at interior samples.

    Predicted comes from trace(K dH/dt K*) + d(B^2)/dt log det(K0 K0*)
    with finite-difference profile derivatives; observed is the centered
    difference of the energy itself.  Both converge at second order in
    the sample spacing.
    """
    if len(trajectory.states) < 3:
        raise InsufficientSamplesError(
            f"need >= 3 samples, got {len(trajectory.states)}")
    times = trajectory.times
    ks = [s.k for s in trajectory.states]
    _, predicted, observed = _rate_arrays(times, ks, cfg)
    return [RatePoint(t=float(times[i]), predicted=float(predicted[i]),
                      observed=float(observed[i]))
            for i in range(1, len(times) - 1)]


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Per-sample invariants; trace_khk_drift is None for time-dependent H."""

    t: float
    xi: float
    xi_rate_predicted: float
    xi_rate_observed: float
    kk_star_drift: float
    trace_khk_drift: float | None
    unitarity_defect: float


@dataclass(frozen=True)
class DiagnosticsReport:
    records: tuple

    def max_kk_star_drift(self) -> float:
        return max(r.kk_star_drift for r in self.records)

    def max_trace_khk_drift(self) -> float | None:
        values = [r.trace_khk_drift for r in self.records
                  if r.trace_khk_drift is not None]
        return max(values) if values else None


def invariant_report(trajectory: Trajectory, cfg: ScenarioConfig) -> DiagnosticsReport:
    """Evaluate every conserved quantity along a trajectory.

    kk_star_drift is the relative Frobenius drift of K K*; the trace
    invariant is reported for constant-H scenarios only; the unitarity
    defect is that of the implied unitary factor R^-1 K with R fixed by
    the first sample.
    """
    if not trajectory.states:
        raise InsufficientSamplesError("empty trajectory")
    times = trajectory.times
    ks = [s.k for s in trajectory.states]
    gram0 = hermitian_part(ks[0] @ ks[0].conj().T)
    gram0_norm = float(np.linalg.norm(gram0))
    radial_inv = psd_inverse(psd_sqrt(gram0), floor=cfg.pd_floor)
    constant_h = cfg.hamiltonian.is_constant()
    if constant_h:
        h0 = cfg.hamiltonian.sample(0.0)
        trace0 = float(np.trace(ks[0] @ h0 @ ks[0].conj().T).real)
        trace_scale = max(abs(trace0), 1e-300)

    if len(ks) >= 2:
        xi, predicted, observed = _rate_arrays(times, ks, cfg)
    else:
        xi = np.array([total_hamiltonian(ks[0], cfg.hamiltonian.sample(0.0),
                                         cfg.field.sample(0.0), cfg.pd_floor)])
        predicted = np.zeros(1)
        observed = np.zeros(1)

    records = []
    for i, k in enumerate(ks):
        gram = hermitian_part(k @ k.conj().T)
        kk_drift = float(np.linalg.norm(gram - gram0)) / gram0_norm
        implied_u = radial_inv @ k
        defect = float(np.linalg.norm(
            implied_u.conj().T @ implied_u - np.eye(k.shape[1])))
        if constant_h:
            tr = float(np.trace(k @ h0 @ k.conj().T).real)
            trace_drift = abs(tr - trace0) / trace_scale
        else:
            trace_drift = None
        records.append(DiagnosticsRecord(
            t=float(times[i]), xi=float(xi[i]),
            xi_rate_predicted=float(predicted[i]),
            xi_rate_observed=float(observed[i]),
            kk_star_drift=kk_drift, trace_khk_drift=trace_drift,
            unitarity_defect=defect))
    return DiagnosticsReport(records=tuple(records))


@dataclass(frozen=True)
class CriticalPointSpec:
    """Data for the constrained critical point U B (nu - H)^(-1/2)."""

    nu: float
    unitary: np.ndarray
    hamiltonian: np.ndarray
    b: float


def critical_point(spec: CriticalPointSpec) -> np.ndarray:
    """Closed-form critical operator; solves K H + B^2 (K*)^-1 = nu K.

    The multiplier must strictly dominate every eigenvalue of H.
    """
    h = hermitian(spec.hamiltonian)
    u = require_unitary(spec.unitary)
    w = np.linalg.eigvalsh(h)
    if spec.nu <= float(w[-1]):
        raise NuDoesNotDominateError(
            f"nu={spec.nu} does not dominate the spectrum (max eigenvalue "
            f"{float(w[-1])})")
    shifted = spec.nu * np.eye(h.shape[0]) - h
    inv_sqrt = psd_inverse(psd_sqrt(shifted))
    return spec.b * (u @ inv_sqrt)


def special_diagonal_solution(h, b: float, r0, phi0, t: float,
                              hbar: float) -> np.ndarray:
    """Closed-form diagonal trajectory for constant diagonal H and constant B.

    Each mode keeps its radius and rotates with phase
    (E_n + B^2 / r0_n^2) t / hbar + phi0_n.
    """
    hm = require_square(h)
    off = hm - np.diag(np.diag(hm))
    scale = max(float(np.max(np.abs(hm))), 1.0)
    if float(np.max(np.abs(off))) > 1e-13 * scale:
        raise NotDiagonalError("hamiltonian must be diagonal")
    energies = np.diag(hm).real
    radii = np.asarray(r0, dtype=np.float64)
    phases0 = np.asarray(phi0, dtype=np.float64)
    if radii.shape != energies.shape or phases0.shape != energies.shape:
        raise ValueError("r0 and phi0 must have one entry per mode")
    if np.any(radii <= 0.0):
        raise ValueError("r0 entries must be positive")
    phases = (energies + (b * b) / (radii * radii)) * t / hbar + phases0
    return np.diag(radii * np.exp(1j * phases)).astype(np.complex128)


@dataclass(frozen=True)
class FluxInput:
    """Coherent state (sum of filled single-particle states) and total flux."""

    upsilon: np.ndarray
    total_flux: float


def flux_distribution(k, flux: FluxInput) -> np.ndarray:
    """Flux distribution Phi |K Y|^2, normalized so the entries sum to Phi."""
    a = as_matrix(k)
    y = np.asarray(flux.upsilon, dtype=np.complex128).reshape(-1)
    y_norm = float(np.linalg.norm(y))
    if y_norm == 0.0:
        raise ValueError("the coherent state must be nonzero")
    if a.shape[1] != y.shape[0]:
        raise ValueError(
            f"operator columns ({a.shape[1]}) do not match the state "
            f"dimension ({y.shape[0]})")
    image = a @ y
    weight = float(np.vdot(image, image).real)
    if weight <= (1e-15 * float(np.linalg.norm(a)) * y_norm) ** 2:
        raise ZeroImageError("the operator annihilates the coherent state")
    return flux.total_flux * (np.abs(image) ** 2) / weight


def trace_preserving_direction(k, l) -> np.ndarray:
    """Project L onto directions preserving trace(K K*) to first order."""
    a = as_matrix(k)
    d = as_matrix(l)
    overlap = pairing(a, d).riemannian
    norm2 = pairing(a, a).riemannian
    return d - (overlap / norm2) * a
