"""Solutions whose domain frame evolves inside an ambient space.

The dense domain of the (formally unbounded) ambient Hamiltonian is
modeled by a finite ambient dimension M; the operator keeps a fixed
rank-N image spanned by phi0 while the domain frame psi(t) evolves by
the one-particle Schroedinger propagator.  Stored frame columns are kets
satisfying i*hbar d/dt |psi'> = +H |psi'>, i.e. the conjugate of the bra
equation i*hbar d/dt <psi'| = -<psi'| H, so columns propagate by
exp(-i H t / hbar).

The assembled operator is K(t) = phi0 . A'(t) . psi(t)*, with the
coefficient matrix driven purely by the magnetic term:

    A'(t) = sqrt(A0 A0*) . exp((i/hbar) Int B^2 (A0 A0*)^-1 dt') . polar_unitary(A0)

The trailing polar-unitary factor preserves A'(0) = A0 for arbitrary
full-rank A0; the ``literal`` flag drops it, which is only correct for
positive-definite A0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientSamplesError,
    NotHermitianGaugeError,
    NotOrthonormalError,
    RankDeficientError,
    ShapeMismatchError,
)
from .linalg import (
    adjoint_inverse,
    adjoint_pseudo_inverse,
    as_matrix,
    hermitian_part,
    psd_inverse,
    psd_sqrt,
    unitary_exponential,
)
from .scenario import FieldProfile, HamiltonianProfile, integrate_b_squared, step_plan

FRAME_ORTHONORMAL_TOL = 1e-10
_GAUGE_HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class AmbientSpace:
    """Finite proxy for the two ambient Hilbert spaces.

    dim_h1 is the ambient domain dimension M, dim_h2 the ambient image
    dimension, n the rank of the operator, and ambient_hamiltonian the
    positive-definite profile acting on the domain space.
    """

    dim_h1: int
    dim_h2: int
    n: int
    ambient_hamiltonian: HamiltonianProfile

    def check(self) -> None:
        if self.n < 1 or self.dim_h1 < self.n or self.dim_h2 < self.n:
            raise ShapeMismatchError(
                f"need 1 <= n <= min(dim_h1, dim_h2), got n={self.n}, "
                f"dim_h1={self.dim_h1}, dim_h2={self.dim_h2}")
        if self.ambient_hamiltonian.dim != self.dim_h1:
            raise ShapeMismatchError(
                f"ambient hamiltonian dimension {self.ambient_hamiltonian.dim} "
                f"!= dim_h1 {self.dim_h1}")


def require_orthonormal_columns(m, tol: float = FRAME_ORTHONORMAL_TOL) -> np.ndarray:
    a = as_matrix(m)
    gram = a.conj().T @ a
    defect = float(np.linalg.norm(gram - np.eye(a.shape[1])))
    if defect > tol:
        raise NotOrthonormalError(
            f"columns are not orthonormal: ||psi* psi - I||_F = {defect:.3e}")
    return a


def evolve_frame_schrodinger(space: AmbientSpace, psi0, t_end: float, dt: float,
                             hbar: float, output_stride: int = 1) -> list:
    """Propagate the n frame kets by the midpoint-exponential product.

    Each step multiplies by exp(-i H(t+dt/2) dt / hbar), so orthonormality
    of the frame is preserved to roundoff.  Returns [(t, psi)] on the
    output grid.
    """
    space.check()
    psi = require_orthonormal_columns(psi0)
    if psi.shape != (space.dim_h1, space.n):
        raise ShapeMismatchError(
            f"psi0 must be {space.dim_h1} x {space.n}, got {psi.shape}")
    plan = step_plan(t_end, dt, output_stride)
    times = plan.times
    wanted = set(plan.output_indices)
    out = [(float(times[0]), psi.copy())] if 0 in wanted else []
    h_profile = space.ambient_hamiltonian
    for i in range(len(times) - 1):
        step = float(times[i + 1] - times[i])
        h_mid = h_profile.sample(float(times[i]) + 0.5 * step)
        psi = unitary_exponential(h_mid, -step / hbar) @ psi
        if (i + 1) in wanted:
            out.append((float(times[i + 1]), psi.copy()))
    return out


def coefficient_matrix_evolution(a0, field: FieldProfile, hbar: float, times,
                                 pd_floor: float = 1e-12,
                                 literal: bool = False) -> list:
    """Closed-form coefficient matrix A'(t) at the requested times.

    Satisfies i*hbar dA'/dt = -B^2 (A'*)^-1 with A'(0) = a0 and keeps
    A'(t) A'(t)* = a0 a0* for all t.  With ``literal=True`` the polar
    unitary of a0 is dropped (the printed closed form), which changes the
    initial value unless a0 is positive definite.
    """
    a = as_matrix(a0)
    if a.shape[0] != a.shape[1]:
        raise ShapeMismatchError(f"coefficient matrix must be square, got {a.shape}")
    gram = hermitian_part(a @ a.conj().T)
    radial = psd_sqrt(gram)
    generator = psd_inverse(gram, floor=pd_floor * pd_floor)
    tail = None
    if not literal:
        tail = psd_inverse(radial, floor=pd_floor) @ a
    out = []
    acc = 0.0
    prev_t = None
    for t in times:
        t = float(t)
        if prev_t is None:
            acc = integrate_b_squared(field, 0.0, t) if t > 0.0 else 0.0
        elif t > prev_t:
            acc += integrate_b_squared(field, prev_t, t)
        prev_t = t
        a_t = radial @ unitary_exponential(generator, acc / hbar)
        if tail is not None:
            a_t = a_t @ tail
        out.append((t, a_t))
    return out


def assemble_moving_solution(space: AmbientSpace, phi0, frames, coefficients) -> list:
    """Extended operators K(t) = phi0 . A'(t) . psi(t)* on the common grid.

    The image of every sample is span(phi0) and the rank is exactly n.
    """
    space.check()
    image = require_orthonormal_columns(phi0)
    if image.shape != (space.dim_h2, space.n):
        raise ShapeMismatchError(
            f"phi0 must be {space.dim_h2} x {space.n}, got {image.shape}")
    if len(frames) != len(coefficients):
        raise ShapeMismatchError(
            f"{len(frames)} frame samples vs {len(coefficients)} coefficient samples")
    out = []
    for (t_f, psi), (t_a, a) in zip(frames, coefficients):
        if abs(t_f - t_a) > 1e-12 * max(1.0, abs(t_f)):
            raise ShapeMismatchError(f"time grids differ: {t_f} vs {t_a}")
        if psi.shape != (space.dim_h1, space.n) or a.shape != (space.n, space.n):
            raise ShapeMismatchError(
                f"sample shapes {psi.shape}, {a.shape} do not match the space")
        out.append((float(t_f), image @ a @ psi.conj().T))
    return out


def image_projector(k, pd_floor: float = 1e-12) -> np.ndarray:
    """Orthogonal projector onto the image of K (rank from the floor)."""
    u, s, _ = np.linalg.svd(as_matrix(k), full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        return np.zeros((k.shape[0], k.shape[0]), dtype=np.complex128)
    cols = u[:, s > pd_floor * s[0]]
    return cols @ cols.conj().T


def weak_residual(samples, space: AmbientSpace, field: FieldProfile, hbar: float,
                  pd_floor: float = 1e-12) -> list:
    """Residual of the defining equation tested on the ambient basis.

    For each interior sample, dK/dt is the centered difference and
    (K*)^-1 the zero-extended pseudo-inverse at rank n; the returned value
    is max over ambient basis vectors of the residual column norm.  For
    assembled solutions this decays at second order in the sample spacing.
    """
    if len(samples) < 3:
        raise InsufficientSamplesError(
            f"need >= 3 samples for centered differences, got {len(samples)}")
    space.check()
    h_profile = space.ambient_hamiltonian
    out = []
    for i in range(1, len(samples) - 1):
        t_prev, k_prev = samples[i - 1]
        t, k = samples[i]
        t_next, k_next = samples[i + 1]
        kdot = (k_next - k_prev) / (t_next - t_prev)
        pinv, rank = adjoint_pseudo_inverse(k, pd_floor)
        if rank != space.n:
            raise RankDeficientError(
                f"sample at t={t} has rank {rank}, expected {space.n}")
        b = field.sample(t)
        h = h_profile.sample(t)
        residual = 1j * hbar * kdot + k @ h + (b * b) * pinv
        out.append((float(t), float(np.max(np.linalg.norm(residual, axis=0)))))
    return out


def _as_gauge(c, n: int):
    """Normalize a gauge spec (callable or constant matrix) to a sampler."""
    if callable(c):
        fn = c
    else:
        const = as_matrix(c)
        fn = lambda t: const  # noqa: E731

    def sample(t: float) -> np.ndarray:
        m = as_matrix(fn(t))
        if m.shape != (n, n):
            raise ShapeMismatchError(f"gauge sample at t={t} has shape {m.shape}, "
                                     f"expected {(n, n)}")
        dev = float(np.max(np.abs(m - m.conj().T)))
        if dev > _GAUGE_HERMITIAN_TOL * max(1.0, float(np.max(np.abs(m)))):
            raise NotHermitianGaugeError(
                f"gauge sample at t={t} is not Hermitian (max |C - C*| = {dev:.3e})")
        return hermitian_part(m)

    return sample


def gauge_propagators(c_prime, c_double_prime, n: int, t_end: float, dt: float,
                      hbar: float) -> list:
    """Unitary frame-change propagators for a Hermitian gauge pair.

    g1 solves i*hbar dg1/dt = g1 C'(t) so that the image basis evolves as
    phi(t) = phi0 g1(t); g2 solves i*hbar dg2/dt = -g2 C''(t) so that
    <psi'_n| = sum [g2]_nl <psi_l| turns the gauged domain frame back into
    the free one.  Both use midpoint-exponential products on the fine grid.

    Returns [(t, g1, g2)] including t = 0.
    """
    c1 = _as_gauge(c_prime, n)
    c2 = _as_gauge(c_double_prime, n)
    plan = step_plan(t_end, dt, 1)
    times = plan.times
    g1 = np.eye(n, dtype=np.complex128)
    g2 = np.eye(n, dtype=np.complex128)
    out = [(float(times[0]), g1.copy(), g2.copy())]
    for i in range(len(times) - 1):
        step = float(times[i + 1] - times[i])
        mid = float(times[i]) + 0.5 * step
        g1 = g1 @ unitary_exponential(c1(mid), -step / hbar)
        g2 = g2 @ unitary_exponential(c2(mid), +step / hbar)
        out.append((float(times[i + 1]), g1.copy(), g2.copy()))
    return out


def _integrate_gauged_coefficients(a0, c1, c2, field: FieldProfile, hbar: float,
                                   times, pd_floor: float) -> list:
    """RK4 for i*hbar dA/dt = -C' A - A C'' - B^2 (A*)^-1."""

    def rhs(t: float, a: np.ndarray) -> np.ndarray:
        inv = adjoint_inverse(a, pd_floor)
        b = field.sample(t)
        return (1j / hbar) * (c1(t) @ a + a @ c2(t) + (b * b) * inv)

    a = as_matrix(a0).copy()
    out = [(float(times[0]), a.copy())]
    for i in range(len(times) - 1):
        t0 = float(times[i])
        h = float(times[i + 1] - times[i])
        tm = t0 + 0.5 * h
        s1 = rhs(t0, a)
        s2 = rhs(tm, a + (0.5 * h) * s1)
        s3 = rhs(tm, a + (0.5 * h) * s2)
        s4 = rhs(t0 + h, a + h * s3)
        a = a + (h / 6.0) * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
        out.append((float(times[i + 1]), a.copy()))
    return out


def gauge_equivalence_check(space: AmbientSpace, psi0, phi0, a0,
                            field: FieldProfile, hbar: float, t_end: float,
                            dt: float, c_prime, c_double_prime,
                            pd_floor: float = 1e-12,
                            coefficient_route: str = "integrate") -> float:
    """Max distance between the gauged and the gauge-free assembled operator.

    The gauge-free (primed) solution uses the free frame and the closed
    coefficient form.  The gauged solution evolves the image basis
    phi0 g1(t), the domain frame psi'(t) g2(t), and the coefficient matrix
    either by integrating its gauged equation (``integrate``, the
    default) or by the frame-change transform A = g1* A' g2
    (``transform``).  Gauge invariance of the physical operator makes the
    distance vanish up to integration accuracy.
    """
    space.check()
    psi_free = evolve_frame_schrodinger(space, psi0, t_end, dt, hbar, 1)
    times = [t for t, _ in psi_free]
    a_primed = coefficient_matrix_evolution(a0, field, hbar, times, pd_floor)
    primed = assemble_moving_solution(space, phi0, psi_free, a_primed)

    props = gauge_propagators(c_prime, c_double_prime, space.n, t_end, dt, hbar)
    if coefficient_route == "integrate":
        c1 = _as_gauge(c_prime, space.n)
        c2 = _as_gauge(c_double_prime, space.n)
        a_gauged = _integrate_gauged_coefficients(a0, c1, c2, field, hbar,
                                                  times, pd_floor)
    elif coefficient_route == "transform":
        a_gauged = [(t, g1.conj().T @ ap @ g2)
                    for (t, g1, g2), (_, ap) in zip(props, a_primed)]
    else:
        raise ValueError(f"unknown coefficient_route {coefficient_route!r}")

    image = require_orthonormal_columns(phi0)
    worst = 0.0
    for (t, psi), (_, g1, g2), (_, a_g), (_, k_p) in zip(
            psi_free, props, a_gauged, primed):
        k_u = (image @ g1) @ a_g @ (psi @ g2).conj().T
        worst = max(worst, float(np.linalg.norm(k_u - k_p)))
    return worst


@dataclass(frozen=True)
class MovingSolution:
    """Frame trajectory, coefficient samples and the fixed image basis."""

    times: tuple
    frames: tuple
    coefficients: tuple
    phi0: np.ndarray
    a0: np.ndarray

    def samples(self):
        return list(zip(self.times, self.frames))

    def coefficient_samples(self):
        return list(zip(self.times, self.coefficients))


def build_moving_solution(space: AmbientSpace, psi0, phi0, a0,
                          field: FieldProfile, hbar: float, t_end: float,
                          dt: float, output_stride: int = 1,
                          pd_floor: float = 1e-12,
                          literal: bool = False) -> MovingSolution:
    """Evolve frame and coefficients on a common output grid."""
    frames = evolve_frame_schrodinger(space, psi0, t_end, dt, hbar, output_stride)
    times = [t for t, _ in frames]
    coeffs = coefficient_matrix_evolution(a0, field, hbar, times, pd_floor, literal)
    return MovingSolution(
        times=tuple(times),
        frames=tuple(psi for _, psi in frames),
        coefficients=tuple(a for _, a in coeffs),
        phi0=require_orthonormal_columns(phi0),
        a0=as_matrix(a0),
    )
