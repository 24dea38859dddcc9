import numpy as np
import pytest

from mesodyn.errors import (
    InsufficientSamplesError,
    NotHermitianGaugeError,
    NotOrthonormalError,
    RankDeficientError,
    ShapeMismatchError,
)
from mesodyn.fixed_domain import evolve_factorized
from mesodyn.linalg import unitary_exponential
from mesodyn.moving_domain import (
    AmbientSpace,
    assemble_moving_solution,
    build_moving_solution,
    coefficient_matrix_evolution,
    evolve_frame_schrodinger,
    gauge_equivalence_check,
    gauge_propagators,
    image_projector,
    weak_residual,
)
from mesodyn.scenario import FieldProfile, HamiltonianProfile, ScenarioConfig
from mesodyn.verification import (
    random_full_rank,
    random_hermitian,
    random_orthonormal_columns,
)


def frob(m):
    return float(np.linalg.norm(m))


def diag_space(energies, dim_h2=None, n=1):
    dim = len(energies)
    return AmbientSpace(
        dim_h1=dim, dim_h2=dim_h2 or dim, n=n,
        ambient_hamiltonian=HamiltonianProfile.constant(
            np.diag(energies).astype(complex)))


class TestFrameEvolution:
    def test_constant_diagonal_kets_rotate_clockwise(self):
        # kets obey i hbar d/dt psi = +H psi, so columns pick up e^{-i E t}
        energies = [1.0, 2.0, 3.0]
        space = diag_space(energies, n=2)
        psi0 = np.eye(3, dtype=complex)[:, :2]
        frames = evolve_frame_schrodinger(space, psi0, t_end=1.0, dt=1e-2,
                                          hbar=1.0, output_stride=25)
        for t, psi in frames:
            expected = psi0 * np.exp(-1j * np.array(energies)[:, None] * t)
            assert frob(psi - expected[:, :2]) <= 1e-12

    def test_zero_hamiltonian_freezes_frame(self, rng):
        space = AmbientSpace(
            dim_h1=4, dim_h2=4, n=2,
            ambient_hamiltonian=HamiltonianProfile.constant(np.zeros((4, 4))))
        psi0 = random_orthonormal_columns(rng, 4, 2)
        for _, psi in evolve_frame_schrodinger(space, psi0, 1.0, 1e-2, 1.0, 50):
            assert frob(psi - psi0) <= 1e-13

    def test_orthonormality_preserved(self, rng):
        h0 = random_hermitian(rng, 8, 0.5, 2.5)
        h1 = random_hermitian(rng, 8, 0.5, 2.5)
        space = AmbientSpace(
            dim_h1=8, dim_h2=8, n=3,
            ambient_hamiltonian=HamiltonianProfile.interpolated([0.0, 1.0], [h0, h1]))
        psi0 = random_orthonormal_columns(rng, 8, 3)
        for _, psi in evolve_frame_schrodinger(space, psi0, 1.0, 1e-3, 1.0, 100):
            assert frob(psi.conj().T @ psi - np.eye(3)) <= 1e-10

    def test_rejects_skewed_frame(self):
        space = diag_space([1.0, 2.0], n=2)
        bad = np.array([[1.0, 0.9], [0.0, 0.1]], dtype=complex)
        with pytest.raises(NotOrthonormalError):
            evolve_frame_schrodinger(space, bad, 1.0, 1e-2, 1.0)


class TestCoefficientEvolution:
    def test_scalar_unit_field(self):
        # a(t) = r0 e^{i phi0} e^{i t / r0^2} for B = 1, hbar = 1
        r0, phi0 = 1.4, 0.7
        a0 = np.array([[r0 * np.exp(1j * phi0)]])
        times = np.linspace(0.0, 1.0, 11)
        samples = coefficient_matrix_evolution(a0, FieldProfile.constant(1.0),
                                               1.0, times)
        for t, a in samples:
            expected = r0 * np.exp(1j * (phi0 + t / r0 ** 2))
            assert abs(a[0, 0] - expected) <= 1e-12

    def test_zero_field_freezes(self, rng):
        a0 = random_full_rank(rng, 3, 0.7, 1.4)
        samples = coefficient_matrix_evolution(a0, FieldProfile.constant(0.0),
                                               1.0, [0.0, 0.5, 1.0])
        for _, a in samples:
            assert frob(a - a0) <= 1e-13

    def test_initial_value_and_radial_conservation(self, rng):
        a0 = random_full_rank(rng, 3, 0.7, 1.4)
        field = FieldProfile.sinusoid(0.5, 0.3, 0.2, 0.7)
        samples = coefficient_matrix_evolution(a0, field, 1.0,
                                               np.linspace(0.0, 1.0, 21))
        assert frob(samples[0][1] - a0) <= 1e-12
        gram0 = a0 @ a0.conj().T
        for _, a in samples:
            assert frob(a @ a.conj().T - gram0) <= 1e-10

    def test_satisfies_equation_by_finite_differences(self, rng):
        a0 = random_full_rank(rng, 3, 0.7, 1.4)
        field = FieldProfile.sinusoid(0.5, 0.3, 0.2, 0.7)
        hbar = 1.0
        delta = 1e-5
        for t in (0.2, 0.6, 0.9):
            (_, before), (_, at), (_, after) = coefficient_matrix_evolution(
                a0, field, hbar, [t - delta, t, t + delta])
            a_dot = (after - before) / (2.0 * delta)
            b = field.sample(t)
            residual = (1j * hbar * a_dot
                        + (b * b) * np.linalg.inv(at.conj().T))
            assert frob(residual) <= 1e-8

    def test_literal_form_drops_initial_phase(self):
        # for non-positive-definite a0 the printed form starts at |a0|
        a0 = np.array([[1j]])
        times = [0.0, 0.5]
        literal = coefficient_matrix_evolution(a0, FieldProfile.constant(1.0),
                                               1.0, times, literal=True)
        assert abs(literal[0][1][0, 0] - 1.0) <= 1e-12  # not 1j
        corrected = coefficient_matrix_evolution(a0, FieldProfile.constant(1.0),
                                                 1.0, times)
        assert abs(corrected[0][1][0, 0] - 1j) <= 1e-12

    def test_literal_matches_corrected_for_positive_definite(self, rng):
        base = random_hermitian(rng, 2, 0.5, 1.5)
        field = FieldProfile.constant(0.8)
        times = np.linspace(0.0, 1.0, 5)
        lit = coefficient_matrix_evolution(base, field, 1.0, times, literal=True)
        cor = coefficient_matrix_evolution(base, field, 1.0, times)
        for (_, a), (_, b) in zip(lit, cor):
            assert frob(a - b) <= 1e-12


class TestAssembly:
    def test_reduces_to_product_at_start(self, rng):
        space = diag_space([1.0, 2.0, 3.0], n=3)
        psi0 = np.eye(3, dtype=complex)
        phi0 = np.eye(3, dtype=complex)
        a0 = random_full_rank(rng, 3, 0.7, 1.4)
        ops = assemble_moving_solution(space, phi0, [(0.0, psi0)], [(0.0, a0)])
        assert frob(ops[0][1] - phi0 @ a0) <= 1e-14

    def test_rank_one_closed_form_free_hamiltonian(self, rng):
        # H = 0: K(t) = r0 e^{i phi0} e^{i B^2 t/(hbar r0^2)} |phi><psi|
        space = AmbientSpace(
            dim_h1=5, dim_h2=4, n=1,
            ambient_hamiltonian=HamiltonianProfile.constant(np.zeros((5, 5))))
        psi0 = random_orthonormal_columns(rng, 5, 1)
        phi0 = random_orthonormal_columns(rng, 4, 1)
        r0, phase0, b, hbar = 1.2, 0.9, 0.8, 0.7
        a0 = np.array([[r0 * np.exp(1j * phase0)]])
        solution = build_moving_solution(space, psi0, phi0, a0,
                                         FieldProfile.constant(b), hbar,
                                         t_end=1.0, dt=1e-2, output_stride=20)
        ops = assemble_moving_solution(space, solution.phi0, solution.samples(),
                                       solution.coefficient_samples())
        for t, k in ops:
            phase = phase0 + b * b * t / (hbar * r0 ** 2)
            expected = r0 * np.exp(1j * phase) * (phi0 @ psi0.conj().T)
            assert frob(k - expected) <= 1e-10

    def test_rank_one_time_dependent_field(self, rng):
        space = AmbientSpace(
            dim_h1=4, dim_h2=4, n=1,
            ambient_hamiltonian=HamiltonianProfile.constant(np.zeros((4, 4))))
        psi0 = random_orthonormal_columns(rng, 4, 1)
        phi0 = random_orthonormal_columns(rng, 4, 1)
        r0, phase0 = 1.1, 0.3
        a0 = np.array([[r0 * np.exp(1j * phase0)]])
        field = FieldProfile.sinusoid(0.6, 0.3, 0.1, 0.5)
        solution = build_moving_solution(space, psi0, phi0, a0, field, 1.0,
                                         t_end=1.0, dt=1e-3, output_stride=200)
        ops = assemble_moving_solution(space, solution.phi0, solution.samples(),
                                       solution.coefficient_samples())
        from mesodyn.scenario import integrate_b_squared
        for t, k in ops:
            phase = phase0 + integrate_b_squared(field, 0.0, t) / r0 ** 2
            expected = r0 * np.exp(1j * phase) * (phi0 @ psi0.conj().T)
            assert frob(k - expected) <= 1e-8

    def test_image_projector_is_frozen(self, rng):
        h = random_hermitian(rng, 6, 0.5, 2.0)
        space = AmbientSpace(dim_h1=6, dim_h2=5, n=2,
                             ambient_hamiltonian=HamiltonianProfile.constant(h))
        psi0 = random_orthonormal_columns(rng, 6, 2)
        phi0 = random_orthonormal_columns(rng, 5, 2)
        a0 = random_full_rank(rng, 2, 0.7, 1.4)
        solution = build_moving_solution(space, psi0, phi0, a0,
                                         FieldProfile.constant(0.9), 1.0,
                                         t_end=1.0, dt=1e-2, output_stride=20)
        ops = assemble_moving_solution(space, solution.phi0, solution.samples(),
                                       solution.coefficient_samples())
        p0 = image_projector(ops[0][1])
        for _, k in ops:
            assert frob(image_projector(k) - p0) <= 1e-12

    def test_time_grid_mismatch_rejected(self, rng):
        space = diag_space([1.0, 2.0], n=1)
        psi0 = np.eye(2, dtype=complex)[:, :1]
        with pytest.raises(ShapeMismatchError):
            assemble_moving_solution(space, psi0, [(0.0, psi0)],
                                     [(0.5, np.eye(1, dtype=complex))])


class TestWeakResidual:
    def _assembled(self, rng, dt, t_end=0.5):
        h0 = random_hermitian(rng, 8, 0.5, 2.5)
        h1 = random_hermitian(rng, 8, 0.5, 2.5)
        space = AmbientSpace(
            dim_h1=8, dim_h2=5, n=3,
            ambient_hamiltonian=HamiltonianProfile.interpolated(
                [0.0, t_end], [h0, h1]))
        psi0 = random_orthonormal_columns(rng, 8, 3)
        phi0 = random_orthonormal_columns(rng, 5, 3)
        a0 = random_full_rank(rng, 3, 0.7, 1.4)
        field = FieldProfile.sinusoid(0.4, 0.3, 0.2, 0.7)
        solution = build_moving_solution(space, psi0, phi0, a0, field, 1.0,
                                         t_end=t_end, dt=dt, output_stride=1)
        ops = assemble_moving_solution(space, solution.phi0, solution.samples(),
                                       solution.coefficient_samples())
        return space, field, ops

    def test_small_for_assembled_solution(self, rng):
        space, field, ops = self._assembled(rng, dt=1e-3)
        residuals = weak_residual(ops, space, field, hbar=1.0)
        assert max(r for _, r in residuals) <= 1e-5

    def test_detects_corrupted_radial_part(self, rng):
        space, field, ops = self._assembled(rng, dt=1e-3)
        corrupted = [(t, (1.0 + 1e-3) * k) for t, k in ops]
        residuals = weak_residual(corrupted, space, field, hbar=1.0)
        assert max(r for _, r in residuals) >= 1e-4

    def test_embedded_fixed_domain_matches_factorized(self, rng):
        # full-rank square case: the assembled operator IS the factorized one
        h = random_hermitian(rng, 3, 0.5, 2.0)
        k0 = random_full_rank(rng, 3, 0.7, 1.4)
        field = FieldProfile.sinusoid(0.4, 0.3, 0.2, 0.7)
        space = AmbientSpace(dim_h1=3, dim_h2=3, n=3,
                             ambient_hamiltonian=HamiltonianProfile.constant(h))
        from mesodyn.fixed_domain import polar_init
        cache = polar_init(k0)
        phi0 = np.eye(3, dtype=complex)
        solution = build_moving_solution(space, phi0, phi0, k0, field, 1.0,
                                         t_end=1.0, dt=1e-3, output_stride=100)
        ops = assemble_moving_solution(space, solution.phi0, solution.samples(),
                                       solution.coefficient_samples())
        cfg = ScenarioConfig(hbar=1.0,
                             hamiltonian=HamiltonianProfile.constant(h),
                             field=field, initial_k=k0, t_end=1.0, dt=1e-3,
                             output_stride=100)
        fact = evolve_factorized(cfg)
        assert cache.radial.shape == (3, 3)
        for (t, k), state in zip(ops, fact.states):
            assert abs(t - state.t) <= 1e-12
            assert frob(k - state.k) <= 1e-9

    def test_rank_deficient_rejected(self, rng):
        space = diag_space([1.0, 2.0, 3.0], n=2)
        psi = random_orthonormal_columns(rng, 3, 1)
        phi = random_orthonormal_columns(rng, 3, 1)
        k = phi @ psi.conj().T  # rank 1, space expects 2
        samples = [(0.0, k), (0.1, k), (0.2, k)]
        with pytest.raises(RankDeficientError):
            weak_residual(samples, space, FieldProfile.constant(1.0), 1.0)

    def test_needs_three_samples(self, rng):
        space = diag_space([1.0, 2.0], n=1)
        k = np.eye(2, dtype=complex)[:, :1] @ np.ones((1, 2))
        with pytest.raises(InsufficientSamplesError):
            weak_residual([(0.0, k), (0.1, k)], space,
                          FieldProfile.constant(1.0), 1.0)


class TestGauge:
    def _setup(self, rng, n=2, dim=4):
        h = random_hermitian(rng, dim, 0.5, 2.0)
        space = AmbientSpace(dim_h1=dim, dim_h2=dim, n=n,
                             ambient_hamiltonian=HamiltonianProfile.constant(h))
        psi0 = random_orthonormal_columns(rng, dim, n)
        phi0 = random_orthonormal_columns(rng, dim, n)
        a0 = random_full_rank(rng, n, 0.7, 1.4)
        field = FieldProfile.sinusoid(0.4, 0.25, 0.1, 0.7)
        return space, psi0, phi0, a0, field

    def test_zero_gauges_are_exact(self, rng):
        space, psi0, phi0, a0, field = self._setup(rng)
        zero = np.zeros((2, 2))
        for _, g1, g2 in gauge_propagators(zero, zero, 2, 1.0, 0.25, 1.0):
            assert np.array_equal(g1, np.eye(2, dtype=complex))
            assert np.array_equal(g2, np.eye(2, dtype=complex))
        distance = gauge_equivalence_check(space, psi0, phi0, a0, field, 1.0,
                                           1.0, 1e-3, zero, zero)
        assert distance <= 1e-10
        exact = gauge_equivalence_check(space, psi0, phi0, a0, field, 1.0,
                                        1.0, 1e-2, zero, zero,
                                        coefficient_route="transform")
        assert exact <= 1e-13

    def test_scalar_gauge_phases(self):
        # constant scalar gauges reduce to pure phase shuffling
        c1, c2, hbar = 0.6, -0.9, 1.0
        props = gauge_propagators(np.array([[c1]]), np.array([[c2]]), 1, 1.0,
                                  1e-3, hbar)
        t, g1, g2 = props[-1]
        assert abs(g1[0, 0] - np.exp(-1j * c1 * t / hbar)) <= 1e-10
        assert abs(g2[0, 0] - np.exp(+1j * c2 * t / hbar)) <= 1e-10

    def test_scalar_gauge_invariance(self, rng):
        space, psi0, phi0, a0, field = self._setup(rng, n=1)
        c1 = np.array([[0.6]])
        c2 = np.array([[-0.9]])
        distance = gauge_equivalence_check(space, psi0, phi0, a0, field, 1.0,
                                           1.0, 1e-3, c1, c2)
        assert distance <= 1e-8

    def test_constant_matrix_gauges(self, rng):
        space, psi0, phi0, a0, field = self._setup(rng)
        c1 = random_hermitian(rng, 2, -0.8, 0.8)
        c2 = random_hermitian(rng, 2, -0.8, 0.8)
        distance = gauge_equivalence_check(space, psi0, phi0, a0, field, 1.0,
                                           1.0, 1e-3, c1, c2)
        assert distance <= 1e-8

    def test_transform_route_is_exact(self, rng):
        space, psi0, phi0, a0, field = self._setup(rng)
        c1 = random_hermitian(rng, 2, -0.8, 0.8)
        c2 = random_hermitian(rng, 2, -0.8, 0.8)
        distance = gauge_equivalence_check(space, psi0, phi0, a0, field, 1.0,
                                           1.0, 1e-2, c1, c2,
                                           coefficient_route="transform")
        assert distance <= 1e-12

    def test_time_dependent_gauges(self, rng):
        space, psi0, phi0, a0, field = self._setup(rng)
        base1 = random_hermitian(rng, 2, -0.7, 0.7)
        base2 = random_hermitian(rng, 2, -0.7, 0.7)
        c1 = lambda t: np.sin(2 * np.pi * 0.15 * t) * base1  # noqa: E731
        c2 = lambda t: np.cos(2 * np.pi * 0.15 * t) * base2  # noqa: E731
        distance = gauge_equivalence_check(space, psi0, phi0, a0, field, 1.0,
                                           1.0, 2.5e-4, c1, c2)
        assert distance <= 1e-8

    def test_non_hermitian_gauge_rejected(self, rng):
        space, psi0, phi0, a0, field = self._setup(rng)
        skew = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(NotHermitianGaugeError):
            gauge_equivalence_check(space, psi0, phi0, a0, field, 1.0,
                                    1.0, 1e-2, skew, skew)


class TestFrameSignConsistency:
    def test_embedding_reproduces_scalar_phase(self):
        # 1x1 embedding: assembled phase must match (E + B^2/r0^2) t / hbar,
        # which pins the bra/ket sign convention of the frame propagator.
        energy, b, r0, hbar = 1.0, 1.0, 1.0, 1.0
        space = AmbientSpace(
            dim_h1=1, dim_h2=1, n=1,
            ambient_hamiltonian=HamiltonianProfile.constant(
                np.array([[energy]], dtype=complex)))
        one = np.eye(1, dtype=complex)
        solution = build_moving_solution(space, one, one, r0 * one,
                                         FieldProfile.constant(b), hbar,
                                         t_end=1.0, dt=1e-2, output_stride=20)
        ops = assemble_moving_solution(space, solution.phi0, solution.samples(),
                                       solution.coefficient_samples())
        for t, k in ops:
            expected = r0 * np.exp(1j * (energy + b * b / r0 ** 2) * t / hbar)
            assert abs(k[0, 0] - expected) <= 1e-10

    def test_frame_matches_propagator(self, rng):
        h = random_hermitian(rng, 4, 0.5, 2.0)
        space = AmbientSpace(dim_h1=4, dim_h2=4, n=2,
                             ambient_hamiltonian=HamiltonianProfile.constant(h))
        psi0 = random_orthonormal_columns(rng, 4, 2)
        frames = evolve_frame_schrodinger(space, psi0, 1.0, 1e-3, 1.0, 500)
        for t, psi in frames:
            expected = unitary_exponential(h, -t) @ psi0
            assert frob(psi - expected) <= 1e-11
