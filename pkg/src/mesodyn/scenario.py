"""Problem-instance definition: time profiles, initial data, quadrature.

A scenario bundles the magnetic-induction profile B(t), the Hamiltonian
profile H(t), the initial operator K0 and the integration controls.  All
profiles are immutable after construction and sampling them is pure, so
scenarios can be shared freely across threads.

Validation is deliberately separated from construction: building a
ScenarioConfig never fails on semantic grounds, and ``validate_scenario``
reports every violated invariant with a machine-readable code instead of
throwing.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import OutOfDomainError
from .linalg import (
    DEFAULT_PD_FLOOR,
    HERMITIAN_RTOL,
    as_matrix,
    hermitian_part,
    matrix_from_json,
    matrix_to_json,
    singular_extent,
)

FIELD_KINDS = ("constant", "sinusoid", "linear-ramp", "sampled-table")
HAMILTONIAN_KINDS = ("constant", "interpolated-sequence")

# Validation codes (machine readable).
BAD_HBAR = "BAD_HBAR"
BAD_TIME_GRID = "BAD_TIME_GRID"
BAD_STRIDE = "BAD_STRIDE"
BAD_PD_FLOOR = "BAD_PD_FLOOR"
BAD_FIELD = "BAD_FIELD"
BAD_TABLE = "BAD_TABLE"
BAD_HAMILTONIAN = "BAD_HAMILTONIAN"
NOT_HERMITIAN = "NOT_HERMITIAN"
NOT_POSITIVE_DEFINITE = "NOT_POSITIVE_DEFINITE"
NOT_SQUARE = "NOT_SQUARE"
NON_FINITE = "NON_FINITE"
DIMENSION_MISMATCH = "DIMENSION_MISMATCH"
NOT_FULL_RANK = "NOT_FULL_RANK"
OUT_OF_DOMAIN = "OUT_OF_DOMAIN"

_DOMAIN_SLACK = 1e-9


@dataclass(frozen=True)
class FieldProfile:
    """Real scalar profile B(t), tagged by kind.

    kinds: constant (value); sinusoid (offset + amplitude *
    sin(2*pi*frequency*t + phase)); linear-ramp (slope*t + intercept);
    sampled-table (linear interpolation between strictly increasing
    sample times).
    """

    kind: str
    value: float = 0.0
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0
    offset: float = 0.0
    slope: float = 0.0
    intercept: float = 0.0
    times: tuple = ()
    values: tuple = ()

    @staticmethod
    def constant(value: float) -> "FieldProfile":
        return FieldProfile(kind="constant", value=float(value))

    @staticmethod
    def sinusoid(amplitude: float, frequency: float, phase: float = 0.0,
                 offset: float = 0.0) -> "FieldProfile":
        return FieldProfile(kind="sinusoid", amplitude=float(amplitude),
                            frequency=float(frequency), phase=float(phase),
                            offset=float(offset))

    @staticmethod
    def linear_ramp(slope: float, intercept: float) -> "FieldProfile":
        return FieldProfile(kind="linear-ramp", slope=float(slope),
                            intercept=float(intercept))

    @staticmethod
    def sampled_table(times, values) -> "FieldProfile":
        return FieldProfile(kind="sampled-table",
                            times=tuple(float(t) for t in times),
                            values=tuple(float(v) for v in values))

    def domain(self) -> tuple[float, float]:
        if self.kind == "sampled-table":
            if not self.times:
                return (math.inf, -math.inf)
            return (self.times[0], self.times[-1])
        return (-math.inf, math.inf)

    def sample(self, t: float) -> float:
        lo, hi = self.domain()
        slack = _DOMAIN_SLACK * max(1.0, abs(lo) if math.isfinite(lo) else 0.0,
                                    abs(hi) if math.isfinite(hi) else 0.0)
        if t < lo - slack or t > hi + slack:
            raise OutOfDomainError(
                f"field sampled at t={t!r} outside its domain [{lo}, {hi}]"
            )
        if self.kind == "constant":
            return self.value
        if self.kind == "sinusoid":
            return self.offset + self.amplitude * math.sin(
                2.0 * math.pi * self.frequency * t + self.phase)
        if self.kind == "linear-ramp":
            return self.slope * t + self.intercept
        if self.kind == "sampled-table":
            return float(np.interp(min(max(t, lo), hi), self.times, self.values))
        raise ValueError(f"unknown field kind {self.kind!r}")


@dataclass(frozen=True)
class HamiltonianProfile:
    """Hermitian positive-definite matrix profile H(t), tagged by kind.

    Sampling always returns the symmetrized matrix (M + M*)/2, which is
    bit-for-bit equal to its own conjugate transpose.  For the
    interpolated-sequence kind, interpolation is entrywise linear in
    time followed by re-symmetrization.
    """

    kind: str
    matrix: np.ndarray | None = None
    times: tuple = ()
    matrices: tuple = ()

    @staticmethod
    def constant(matrix) -> "HamiltonianProfile":
        return HamiltonianProfile(kind="constant", matrix=as_matrix(matrix))

    @staticmethod
    def interpolated(times, matrices) -> "HamiltonianProfile":
        return HamiltonianProfile(
            kind="interpolated-sequence",
            times=tuple(float(t) for t in times),
            matrices=tuple(as_matrix(m) for m in matrices),
        )

    @property
    def dim(self) -> int:
        if self.kind == "constant":
            return 0 if self.matrix is None else self.matrix.shape[0]
        return self.matrices[0].shape[0] if self.matrices else 0

    def domain(self) -> tuple[float, float]:
        if self.kind == "interpolated-sequence":
            if not self.times:
                return (math.inf, -math.inf)
            return (self.times[0], self.times[-1])
        return (-math.inf, math.inf)

    def is_constant(self) -> bool:
        return self.kind == "constant"

    def sample(self, t: float) -> np.ndarray:
        if self.kind == "constant":
            return hermitian_part(self.matrix)
        if self.kind != "interpolated-sequence":
            raise ValueError(f"unknown hamiltonian kind {self.kind!r}")
        lo, hi = self.domain()
        slack = _DOMAIN_SLACK * max(1.0, abs(lo), abs(hi))
        if t < lo - slack or t > hi + slack:
            raise OutOfDomainError(
                f"hamiltonian sampled at t={t!r} outside its domain [{lo}, {hi}]"
            )
        t = min(max(t, lo), hi)
        ts = self.times
        j = int(np.searchsorted(ts, t, side="right"))
        if j <= 0:
            return hermitian_part(self.matrices[0])
        if j >= len(ts):
            return hermitian_part(self.matrices[-1])
        t0, t1 = ts[j - 1], ts[j]
        if t1 == t0:
            return hermitian_part(self.matrices[j])
        theta = (t - t0) / (t1 - t0)
        mixed = (1.0 - theta) * self.matrices[j - 1] + theta * self.matrices[j]
        return hermitian_part(mixed)


def sample_field(profile: FieldProfile, t: float) -> float:
    """B(t)."""
    return profile.sample(t)


def sample_hamiltonian(profile: HamiltonianProfile, t: float) -> np.ndarray:
    """H(t), symmetrized."""
    return profile.sample(t)


def _adaptive_simpson(f, a: float, b: float, tol: float, depth: int = 48) -> float:
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, m, b, fa, fm, fb, whole, tol, depth):
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return (recurse(a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1))

    return recurse(a, m, b, fa, fm, fb, whole, tol, depth)


def _simpson_exact(f, a: float, b: float) -> float:
    m = 0.5 * (a + b)
    return (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))


def integrate_b_squared(profile: FieldProfile, t0: float, t1: float) -> float:
    """Integral of B(t)^2 over [t0, t1].

    Constant profiles use the closed form B^2 (t1 - t0) exactly; sampled
    tables are integrated by Simpson per linear segment (exact for the
    piecewise-quadratic integrand); everything else goes through adaptive
    Simpson with absolute tolerance 1e-12 * (t1 - t0) * max B^2.
    """
    if t0 > t1:
        raise ValueError(f"t0={t0!r} must not exceed t1={t1!r}")
    lo, hi = profile.domain()
    slack = _DOMAIN_SLACK * max(1.0, abs(lo) if math.isfinite(lo) else 0.0,
                                abs(hi) if math.isfinite(hi) else 0.0)
    if t0 < lo - slack or t1 > hi + slack:
        raise OutOfDomainError(
            f"integration range [{t0}, {t1}] outside the profile domain [{lo}, {hi}]"
        )
    if t1 == t0:
        return 0.0
    if profile.kind == "constant":
        return profile.value * profile.value * (t1 - t0)

    def f(t: float) -> float:
        b = profile.sample(t)
        return b * b

    if profile.kind == "sampled-table":
        knots = [t0] + [t for t in profile.times if t0 < t < t1] + [t1]
        return sum(_simpson_exact(f, a, b) for a, b in zip(knots, knots[1:]))

    if profile.kind == "sinusoid":
        max_b2 = (abs(profile.amplitude) + abs(profile.offset)) ** 2
    else:  # linear-ramp peaks at an endpoint
        max_b2 = max(f(t0), f(t1))
    tol = max(1e-12 * (t1 - t0) * max_b2, 1e-30)
    return _adaptive_simpson(f, t0, t1, tol)


@dataclass(frozen=True)
class ScenarioConfig:
    """A runnable problem instance.

    hbar and the profiles are shared by every solver; dt is the fine step
    of the time grid and output_stride thins the emitted states.
    """

    hbar: float
    hamiltonian: HamiltonianProfile
    field: FieldProfile
    initial_k: np.ndarray
    t_end: float
    dt: float
    output_stride: int = 1
    pd_floor: float = DEFAULT_PD_FLOOR

    def digest(self) -> str:
        """Content hash of the scenario (sha256 of its canonical JSON)."""
        payload = json.dumps(scenario_to_json(self), sort_keys=True,
                             separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple = dataclass_field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.issues

    def codes(self) -> tuple:
        return tuple(issue.code for issue in self.issues)

    def __str__(self) -> str:
        if self.ok:
            return "scenario valid"
        return "; ".join(f"{i.code}: {i.message}" for i in self.issues)


def _check_field(profile: FieldProfile, t_end: float, issues: list) -> None:
    if profile.kind not in FIELD_KINDS:
        issues.append(ValidationIssue(BAD_FIELD, f"unknown field kind {profile.kind!r}"))
        return
    params = (profile.value, profile.amplitude, profile.frequency, profile.phase,
              profile.offset, profile.slope, profile.intercept)
    if not all(math.isfinite(p) for p in params):
        issues.append(ValidationIssue(NON_FINITE, "field parameters must be finite"))
        return
    if profile.kind == "sampled-table":
        times, values = profile.times, profile.values
        if len(times) < 2 or len(times) != len(values):
            issues.append(ValidationIssue(
                BAD_TABLE, "sampled-table needs >= 2 aligned (time, value) samples"))
            return
        if not all(math.isfinite(x) for x in times + values):
            issues.append(ValidationIssue(NON_FINITE, "table entries must be finite"))
            return
        if any(b <= a for a, b in zip(times, times[1:])):
            issues.append(ValidationIssue(BAD_TABLE, "table times must be strictly increasing"))
            return
    lo, hi = profile.domain()
    if lo > 0.0 or hi < t_end:
        issues.append(ValidationIssue(
            OUT_OF_DOMAIN, f"field domain [{lo}, {hi}] does not cover [0, {t_end}]"))


def _check_hamiltonian(profile: HamiltonianProfile, t_end: float, issues: list) -> int:
    """Append issues; return the profile dimension (0 when unusable)."""
    if profile.kind not in HAMILTONIAN_KINDS:
        issues.append(ValidationIssue(
            BAD_HAMILTONIAN, f"unknown hamiltonian kind {profile.kind!r}"))
        return 0
    if profile.kind == "constant":
        samples = () if profile.matrix is None else (profile.matrix,)
        if not samples:
            issues.append(ValidationIssue(BAD_HAMILTONIAN, "constant profile has no matrix"))
            return 0
    else:
        samples = profile.matrices
        if len(samples) < 1 or len(profile.times) != len(samples):
            issues.append(ValidationIssue(
                BAD_HAMILTONIAN, "interpolated-sequence needs aligned times and matrices"))
            return 0
        if any(b <= a for a, b in zip(profile.times, profile.times[1:])):
            issues.append(ValidationIssue(
                BAD_HAMILTONIAN, "sample times must be strictly increasing"))
            return 0
        lo, hi = profile.domain()
        if lo > 0.0 or hi < t_end:
            issues.append(ValidationIssue(
                OUT_OF_DOMAIN, f"hamiltonian domain [{lo}, {hi}] does not cover [0, {t_end}]"))
    dim = samples[0].shape[0]
    for idx, m in enumerate(samples):
        if m.shape[0] != m.shape[1]:
            issues.append(ValidationIssue(
                NOT_SQUARE, f"hamiltonian sample {idx} is not square: {m.shape}"))
            return 0
        if m.shape[0] != dim:
            issues.append(ValidationIssue(
                DIMENSION_MISMATCH, f"hamiltonian sample {idx} has dimension "
                f"{m.shape[0]}, expected {dim}"))
            return 0
        if not np.all(np.isfinite(m.real)) or not np.all(np.isfinite(m.imag)):
            issues.append(ValidationIssue(
                NON_FINITE, f"hamiltonian sample {idx} has non-finite entries"))
            return 0
        dev = float(np.max(np.abs(m - m.conj().T)))
        scale = max(float(np.max(np.abs(m))), 1.0)
        if dev > HERMITIAN_RTOL * scale:
            issues.append(ValidationIssue(
                NOT_HERMITIAN, f"hamiltonian sample {idx}: max |M - M*| = {dev:.3e}"))
        w = np.linalg.eigvalsh(hermitian_part(m))
        if float(w[0]) <= 0.0:
            issues.append(ValidationIssue(
                NOT_POSITIVE_DEFINITE,
                f"hamiltonian sample {idx} has min eigenvalue {float(w[0]):.3e}"))
    return dim


def validate_scenario(cfg: ScenarioConfig) -> ValidationReport:
    """Check every scenario invariant; never raises.

    An empty report means every solver precondition on the scenario holds
    at t = 0 and the profiles cover [0, t_end].
    """
    issues: list[ValidationIssue] = []

    if not (isinstance(cfg.hbar, (int, float)) and math.isfinite(cfg.hbar) and cfg.hbar > 0):
        issues.append(ValidationIssue(BAD_HBAR, f"hbar must be a positive real, got {cfg.hbar!r}"))
    if not (math.isfinite(cfg.t_end) and cfg.t_end > 0):
        issues.append(ValidationIssue(BAD_TIME_GRID, f"t_end must be positive, got {cfg.t_end!r}"))
    if not (math.isfinite(cfg.dt) and cfg.dt > 0):
        issues.append(ValidationIssue(BAD_TIME_GRID, f"dt must be positive, got {cfg.dt!r}"))
    elif math.isfinite(cfg.t_end) and cfg.dt >= cfg.t_end:
        issues.append(ValidationIssue(
            BAD_TIME_GRID, f"dt={cfg.dt!r} must be smaller than t_end={cfg.t_end!r}"))
    if int(cfg.output_stride) < 1:
        issues.append(ValidationIssue(BAD_STRIDE, "output_stride must be >= 1"))
    if not (0.0 < cfg.pd_floor < 1.0):
        issues.append(ValidationIssue(BAD_PD_FLOOR, "pd_floor must lie in (0, 1)"))

    t_end = cfg.t_end if (math.isfinite(cfg.t_end) and cfg.t_end > 0) else 0.0
    _check_field(cfg.field, t_end, issues)
    h_dim = _check_hamiltonian(cfg.hamiltonian, t_end, issues)

    k = np.asarray(cfg.initial_k, dtype=np.complex128)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        issues.append(ValidationIssue(NOT_SQUARE, f"initial_k must be square, got {k.shape}"))
    elif not np.all(np.isfinite(k.real)) or not np.all(np.isfinite(k.imag)):
        issues.append(ValidationIssue(NON_FINITE, "initial_k has non-finite entries"))
    else:
        if h_dim and k.shape[0] != h_dim:
            issues.append(ValidationIssue(
                DIMENSION_MISMATCH,
                f"initial_k dimension {k.shape[0]} != hamiltonian dimension {h_dim}"))
        smin, smax = singular_extent(k)
        floor = cfg.pd_floor if 0.0 < cfg.pd_floor < 1.0 else DEFAULT_PD_FLOOR
        if smax <= 0.0 or smin <= floor * smax:
            issues.append(ValidationIssue(
                NOT_FULL_RANK,
                f"initial_k singular-value ratio {smin:.3e}/{smax:.3e} "
                f"crosses pd_floor {floor:.1e}"))

    return ValidationReport(issues=tuple(issues))


@dataclass(frozen=True)
class StepPlan:
    """Fine step times (landing exactly on t_end) and output indices."""

    times: np.ndarray
    output_indices: tuple

    @property
    def output_times(self) -> np.ndarray:
        return self.times[list(self.output_indices)]


def step_plan(t_end: float, dt: float, output_stride: int = 1) -> StepPlan:
    n = int(math.floor(t_end / dt + 1e-9))
    times = dt * np.arange(n + 1, dtype=np.float64)
    if times[-1] > t_end or t_end - times[-1] <= 1e-12 * max(1.0, t_end):
        times[-1] = t_end
    else:
        times = np.append(times, t_end)
    stride = max(int(output_stride), 1)
    outputs = list(range(0, len(times), stride))
    if outputs[-1] != len(times) - 1:
        outputs.append(len(times) - 1)
    return StepPlan(times=times, output_indices=tuple(outputs))


def _field_to_json(profile: FieldProfile) -> dict:
    if profile.kind == "constant":
        return {"kind": "constant", "value": profile.value}
    if profile.kind == "sinusoid":
        return {"kind": "sinusoid", "amplitude": profile.amplitude,
                "frequency": profile.frequency, "phase": profile.phase,
                "offset": profile.offset}
    if profile.kind == "linear-ramp":
        return {"kind": "linear-ramp", "slope": profile.slope,
                "intercept": profile.intercept}
    if profile.kind == "sampled-table":
        return {"kind": "sampled-table", "times": list(profile.times),
                "values": list(profile.values)}
    raise ValueError(f"unknown field kind {profile.kind!r}")


def _field_from_json(obj) -> FieldProfile:
    kind = obj.get("kind")
    if kind == "constant":
        return FieldProfile.constant(obj["value"])
    if kind == "sinusoid":
        return FieldProfile.sinusoid(obj["amplitude"], obj["frequency"],
                                     obj.get("phase", 0.0), obj.get("offset", 0.0))
    if kind == "linear-ramp":
        return FieldProfile.linear_ramp(obj["slope"], obj["intercept"])
    if kind == "sampled-table":
        return FieldProfile.sampled_table(obj["times"], obj["values"])
    raise ValueError(f"unknown field kind {kind!r}")


def _hamiltonian_to_json(profile: HamiltonianProfile) -> dict:
    if profile.kind == "constant":
        return {"kind": "constant", "matrix": matrix_to_json(profile.matrix)}
    if profile.kind == "interpolated-sequence":
        return {"kind": "interpolated-sequence", "times": list(profile.times),
                "matrices": [matrix_to_json(m) for m in profile.matrices]}
    raise ValueError(f"unknown hamiltonian kind {profile.kind!r}")


def _hamiltonian_from_json(obj) -> HamiltonianProfile:
    kind = obj.get("kind")
    if kind == "constant":
        return HamiltonianProfile.constant(matrix_from_json(obj["matrix"]))
    if kind == "interpolated-sequence":
        return HamiltonianProfile.interpolated(
            obj["times"], [matrix_from_json(m) for m in obj["matrices"]])
    raise ValueError(f"unknown hamiltonian kind {kind!r}")


def scenario_to_json(cfg: ScenarioConfig) -> dict:
    return {
        "hbar": float(cfg.hbar),
        "hamiltonian": _hamiltonian_to_json(cfg.hamiltonian),
        "field": _field_to_json(cfg.field),
        "initial_k": matrix_to_json(cfg.initial_k),
        "t_end": float(cfg.t_end),
        "dt": float(cfg.dt),
        "output_stride": int(cfg.output_stride),
        "pd_floor": float(cfg.pd_floor),
    }


def scenario_from_json(obj) -> ScenarioConfig:
    """Build a ScenarioConfig from a parsed JSON object.

    Raises ValueError on structural problems (missing keys, malformed
    matrices); semantic checks belong to validate_scenario.
    """
    if not isinstance(obj, dict):
        raise ValueError("scenario document must be a JSON object")
    missing = {"hbar", "hamiltonian", "field", "initial_k", "t_end", "dt"} - set(obj)
    if missing:
        raise ValueError(f"scenario is missing keys {sorted(missing)}")
    return ScenarioConfig(
        hbar=float(obj["hbar"]),
        hamiltonian=_hamiltonian_from_json(obj["hamiltonian"]),
        field=_field_from_json(obj["field"]),
        initial_k=matrix_from_json(obj["initial_k"]),
        t_end=float(obj["t_end"]),
        dt=float(obj["dt"]),
        output_stride=int(obj.get("output_stride", 1)),
        pd_floor=float(obj.get("pd_floor", DEFAULT_PD_FLOOR)),
    )
