"""Fixed-domain solvers for the operator flow i*hbar*dK/dt = -K H - B^2 (K*)^-1.

Three independent routes to the same trajectory:

* ``evolve_factorized`` — the structure-preserving closed form
  K(t) = sqrt(K0 K0*) . exp((i/hbar) Int B^2 (K0 K0*)^-1 dt') . W(t),
  with the unitary W solving i*hbar*dW/dt = -W H(t).  The radial part is
  exact by construction, so this solver cannot hit the singularity.
* ``evolve_direct`` — classical fixed-step RK4 on the equation itself,
  re-checking the full-rank invariant at every stage.
* ``evolve_series`` — the binomial power series for constant H and B,
  truncated at a caller-chosen number of terms.

Fixed steps keep trajectories bit-reproducible; convergence studies
(dt, dt/2) replace adaptivity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceWarning,
    NearSingularError,
    RequiresConstantCoefficientsError,
    TruncationDominatesError,
)
from .linalg import (
    hermitian_part,
    psd_inverse,
    psd_sqrt,
    require_square,
    unitary_exponential,
)
from .scenario import ScenarioConfig, integrate_b_squared, step_plan

SERIES_RADIUS_LIMIT = 10.0
SERIES_TRUNCATION_RTOL = 1e-10


@dataclass(frozen=True)
class EvolutionState:
    """One time sample of the dynamic operator."""

    t: float
    k: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered samples plus provenance (solver tag, scenario digest)."""

    states: tuple
    solver_tag: str
    scenario_digest: str

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def final(self) -> EvolutionState:
        return self.states[-1]


@dataclass(frozen=True)
class FactorizedCache:
    """Time-independent pieces of the factorized solution.

    radial    = sqrt(K0 K0*), fixed for the whole evolution
    u0        = radial^-1 K0, the initial unitary factor
    h_b_base  = (K0 K0*)^-1, so the magnetic generator is B(t)^2 * h_b_base
    """

    radial: np.ndarray
    u0: np.ndarray
    h_b_base: np.ndarray


def polar_init(k0, pd_floor: float = 1e-12) -> FactorizedCache:
    """Split K0 = radial . u0 and cache (K0 K0*)^-1."""
    a = require_square(k0)
    gram = hermitian_part(a @ a.conj().T)
    radial = psd_sqrt(gram)
    # Eigenvalues of radial are the singular values of K0, so pd_floor
    # applies unchanged; the squared Gram needs the squared floor.
    radial_inv = psd_inverse(radial, floor=pd_floor)
    u0 = radial_inv @ a
    h_b_base = psd_inverse(gram, floor=pd_floor * pd_floor)
    return FactorizedCache(radial=radial, u0=u0, h_b_base=h_b_base)


def evolve_W(cache: FactorizedCache, cfg: ScenarioConfig) -> list:
    """Unitary factor W(t) solving i*hbar*dW/dt = -W H(t), W(0) = u0.

    Constant H uses W(t) = u0 exp(i H t / hbar) exactly; time-dependent H
    uses the midpoint-exponential product
    W(t+dt) = W(t) exp(i H(t+dt/2) dt / hbar), second-order accurate and
    exactly unitary at every step.

    Returns [(t, W)] on the scenario's output grid.
    """
    plan = step_plan(cfg.t_end, cfg.dt, cfg.output_stride)
    if cfg.hamiltonian.is_constant():
        h = cfg.hamiltonian.sample(0.0)
        return [(float(t), cache.u0 @ unitary_exponential(h, t / cfg.hbar))
                for t in plan.output_times]
    times = plan.times
    wanted = set(plan.output_indices)
    w = cache.u0.copy()
    out = [(float(times[0]), w.copy())] if 0 in wanted else []
    for i in range(len(times) - 1):
        dt = float(times[i + 1] - times[i])
        h_mid = cfg.hamiltonian.sample(float(times[i]) + 0.5 * dt)
        w = w @ unitary_exponential(h_mid, dt / cfg.hbar)
        if (i + 1) in wanted:
            out.append((float(times[i + 1]), w.copy()))
    return out


def evolve_V(cache: FactorizedCache, cfg: ScenarioConfig) -> list:
    """Magnetic factor V(t) = exp((i/hbar) Int_0^t B^2 dt' (K0 K0*)^-1).

    V commutes with h_b_base at all times (both are functions of the same
    Hermitian matrix) and V(0) = I.  The accumulated integral reuses each
    previous interval, one quadrature per output time.
    """
    plan = step_plan(cfg.t_end, cfg.dt, cfg.output_stride)
    out = []
    acc = 0.0
    prev_t = 0.0
    for t in plan.output_times:
        t = float(t)
        if t > prev_t:
            acc += integrate_b_squared(cfg.field, prev_t, t)
            prev_t = t
        out.append((t, unitary_exponential(cache.h_b_base, acc / cfg.hbar)))
    return out


def evolve_factorized(cfg: ScenarioConfig) -> Trajectory:
    """Closed-form trajectory K(t) = radial . V(t) . W(t)."""
    cache = polar_init(cfg.initial_k, cfg.pd_floor)
    ws = evolve_W(cache, cfg)
    vs = evolve_V(cache, cfg)
    states = tuple(
        EvolutionState(t=tw, k=cache.radial @ v @ w)
        for (tw, w), (_, v) in zip(ws, vs)
    )
    return Trajectory(states=states, solver_tag="factorized",
                      scenario_digest=cfg.digest())


def _direct_rhs(cfg: ScenarioConfig, t: float, k: np.ndarray) -> np.ndarray:
    h = cfg.hamiltonian.sample(t)
    b = cfg.field.sample(t)
    # Inline (K*)^-1 = U S^-1 V*; the SVD doubles as the per-stage
    # full-rank invariant check.
    u, s, vh = np.linalg.svd(k)
    if s[0] <= 0.0 or s[-1] <= cfg.pd_floor * s[0]:
        raise NearSingularError(
            f"singular value ratio {s[-1]:.3e}/{s[0]:.3e} crosses the floor "
            f"{cfg.pd_floor:.1e} at t={t}")
    return (1j / cfg.hbar) * (k @ h + (b * b) * ((u / s) @ vh))


def evolve_direct(cfg: ScenarioConfig) -> Trajectory:
    """Fixed-step RK4 on dK/dt = (i/hbar)(K H + B^2 (K*)^-1).

    On rank loss the solver stops with the last good state: the raised
    NearSingularError carries ``last_good_time`` and the partial
    trajectory emitted so far.
    """
    plan = step_plan(cfg.t_end, cfg.dt, cfg.output_stride)
    times = plan.times
    wanted = set(plan.output_indices)
    digest = cfg.digest()
    k = np.array(cfg.initial_k, dtype=np.complex128)
    states = [EvolutionState(t=float(times[0]), k=k.copy())] if 0 in wanted else []
    for i in range(len(times) - 1):
        t0 = float(times[i])
        h = float(times[i + 1] - times[i])
        tm = t0 + 0.5 * h
        try:
            s1 = _direct_rhs(cfg, t0, k)
            s2 = _direct_rhs(cfg, tm, k + (0.5 * h) * s1)
            s3 = _direct_rhs(cfg, tm, k + (0.5 * h) * s2)
            s4 = _direct_rhs(cfg, t0 + h, k + h * s3)
        except NearSingularError as exc:
            partial = Trajectory(states=tuple(states), solver_tag="direct",
                                 scenario_digest=digest)
            raise NearSingularError(
                f"rank loss inside step [{t0}, {t0 + h}]: {exc}",
                last_good_time=t0, partial=partial) from exc
        k = k + (h / 6.0) * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
        if (i + 1) in wanted:
            states.append(EvolutionState(t=float(times[i + 1]), k=k.copy()))
    return Trajectory(states=tuple(states), solver_tag="direct",
                      scenario_digest=digest)


def series_unitary(u0: np.ndarray, h: np.ndarray, h_b: np.ndarray, t: float,
                   hbar: float, terms: int):
    """Truncated series for the unitary factor with constant coefficients.

    Term k carries the binomial sum over C(k, j) h_b^j u0 h^(k-j), built by
    the recurrence S_{k+1} = h_b S_k + S_k h.  Returns (U, estimate) where
    the estimate is the Frobenius norm of the first omitted term.
    """
    if terms < 1:
        raise ValueError("terms must be >= 1")
    z = 1j * t / hbar
    s = u0.astype(np.complex128)
    u = s.copy()
    c = 1.0 + 0.0j
    for k in range(1, terms):
        s = h_b @ s + s @ h
        c = c * z / k
        u = u + c * s
    s_next = h_b @ s + s @ h
    c_next = c * z / terms
    estimate = abs(c_next) * float(np.linalg.norm(s_next))
    return u, estimate


def evolve_series(cfg: ScenarioConfig, terms: int,
                  check_truncation: bool = True) -> Trajectory:
    """Power-series trajectory K(t) = radial . U(t) for constant H and B.

    ``terms`` counts the series terms kept (k = 0 .. terms-1).  When
    ``check_truncation`` is set, a first-omitted-term estimate above
    1e-10 * ||U|| raises TruncationDominatesError; pass False for
    small-order structural studies where truncation is the point.
    """
    if not (cfg.hamiltonian.is_constant() and cfg.field.kind == "constant"):
        raise RequiresConstantCoefficientsError(
            "the series solver needs constant hamiltonian and field profiles")
    cache = polar_init(cfg.initial_k, cfg.pd_floor)
    h = cfg.hamiltonian.sample(0.0)
    b = cfg.field.value
    h_b = (b * b) * cache.h_b_base
    radius = float(np.linalg.norm(h + h_b)) * cfg.t_end / cfg.hbar
    if radius > SERIES_RADIUS_LIMIT:
        warnings.warn(
            f"series argument norm {radius:.2f} exceeds {SERIES_RADIUS_LIMIT}; "
            f"convergence will be slow", ConvergenceWarning, stacklevel=2)
    plan = step_plan(cfg.t_end, cfg.dt, cfg.output_stride)
    states = []
    for t in plan.output_times:
        t = float(t)
        u, estimate = series_unitary(cache.u0, h, h_b, t, cfg.hbar, terms)
        if check_truncation and estimate > SERIES_TRUNCATION_RTOL * float(np.linalg.norm(u)):
            raise TruncationDominatesError(
                f"first omitted term ({estimate:.3e}) dominates at t={t}; "
                f"increase terms")
        states.append(EvolutionState(t=t, k=cache.radial @ u))
    return Trajectory(states=tuple(states), solver_tag="series",
                      scenario_digest=cfg.digest())
