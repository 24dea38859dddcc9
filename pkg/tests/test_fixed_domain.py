import numpy as np
import pytest

from mesodyn.errors import (
    ConvergenceWarning,
    NearSingularError,
    RequiresConstantCoefficientsError,
    TruncationDominatesError,
)
from mesodyn.fixed_domain import (
    evolve_V,
    evolve_W,
    evolve_direct,
    evolve_factorized,
    evolve_series,
    polar_init,
    series_unitary,
)
from mesodyn.scenario import FieldProfile, HamiltonianProfile, ScenarioConfig
from mesodyn.verification import (
    crandn,
    random_full_rank,
    random_hermitian,
    random_scenario,
)


def frob(m):
    return float(np.linalg.norm(m))


def constant_config(h, b, k0, t_end=1.0, dt=1e-3, stride=100, hbar=1.0):
    return ScenarioConfig(
        hbar=hbar,
        hamiltonian=HamiltonianProfile.constant(np.asarray(h, dtype=complex)),
        field=FieldProfile.constant(b),
        initial_k=np.asarray(k0, dtype=complex),
        t_end=t_end, dt=dt, output_stride=stride)


class TestPolarInit:
    def test_positive_diagonal(self):
        cache = polar_init(np.diag([2.0, 3.0]).astype(complex))
        assert np.allclose(cache.radial, np.diag([2.0, 3.0]))
        assert np.allclose(cache.u0, np.eye(2))
        assert np.allclose(cache.h_b_base, np.diag([0.25, 1.0 / 9.0]))

    def test_scalar_phase(self):
        cache = polar_init(np.array([[1j]]))
        assert np.allclose(cache.radial, [[1.0]])
        assert np.allclose(cache.u0, [[1j]])
        assert np.allclose(cache.h_b_base, [[1.0]])

    def test_reconstruction(self, rng):
        k0 = random_full_rank(rng, 4, 0.5, 2.0)
        cache = polar_init(k0)
        assert frob(cache.radial @ cache.u0 - k0) <= 1e-12 * frob(k0)
        assert frob(cache.radial @ cache.radial - k0 @ k0.conj().T) <= 1e-11
        gram = cache.u0.conj().T @ cache.u0
        assert frob(gram - np.eye(4)) <= 1e-12 * 2.0

    def test_near_singular(self):
        with pytest.raises(NearSingularError):
            polar_init(np.diag([1.0, 1e-14]).astype(complex))


class TestEvolveW:
    def test_constant_diagonal_phases(self):
        cfg = constant_config(np.diag([1.0, 2.0]), 0.0, np.eye(2), stride=500)
        cache = polar_init(cfg.initial_k)
        for t, w in evolve_W(cache, cfg):
            expected = np.diag(np.exp(1j * np.array([1.0, 2.0]) * t))
            assert frob(w - expected) <= 1e-12

    def test_zero_hamiltonian_freezes(self, rng):
        k0 = random_full_rank(rng, 3, 0.5, 1.5)
        cfg = constant_config(np.zeros((3, 3)), 1.0, k0, stride=250)
        cache = polar_init(k0)
        for _, w in evolve_W(cache, cfg):
            assert frob(w - cache.u0) <= 1e-12

    def test_self_convergence_second_order(self, rng):
        # time-dependent H: halving dt cuts the error about 4x
        h0 = random_hermitian(rng, 3, 0.5, 2.0)
        h1 = random_hermitian(rng, 3, 0.5, 2.0)
        profile = HamiltonianProfile.interpolated([0.0, 1.0], [h0, h1])
        k0 = random_full_rank(rng, 3, 0.7, 1.4)

        def final_w(dt):
            cfg = ScenarioConfig(hbar=1.0, hamiltonian=profile,
                                 field=FieldProfile.constant(0.0),
                                 initial_k=k0, t_end=1.0, dt=dt,
                                 output_stride=10 ** 9)
            return evolve_W(polar_init(k0), cfg)[-1][1]

        reference = final_w(1.25e-4)
        e_coarse = frob(final_w(2e-3) - reference)
        e_fine = frob(final_w(1e-3) - reference)
        assert 2.5 <= e_coarse / e_fine <= 6.0

    def test_unitary_along_the_way(self, rng):
        cfg = random_scenario(rng, 4, dt=2e-3, output_stride=50)
        cache = polar_init(cfg.initial_k)
        for _, w in evolve_W(cache, cfg):
            assert frob(w.conj().T @ w - np.eye(4)) <= 1e-12


class TestEvolveV:
    def test_zero_field_identity(self, rng):
        k0 = random_full_rank(rng, 3, 0.5, 1.5)
        cfg = constant_config(np.eye(3), 0.0, k0, stride=200)
        for _, v in evolve_V(polar_init(k0), cfg):
            assert frob(v - np.eye(3)) <= 1e-13

    def test_diagonal_phases_at_pi(self):
        # K0 K0* = diag(1, 4), B = 1: V(pi) = diag(e^{i pi}, e^{i pi/4})
        k0 = np.diag([1.0, 2.0]).astype(complex)
        cfg = constant_config(np.eye(2), 1.0, k0, t_end=np.pi, dt=np.pi / 100,
                              stride=10 ** 9)
        t, v = evolve_V(polar_init(k0), cfg)[-1]
        assert t == pytest.approx(np.pi)
        expected = np.diag([np.exp(1j * np.pi), np.exp(1j * np.pi / 4)])
        assert frob(v - expected) <= 1e-12

    def test_sine_field_scalar(self):
        # B = sin t on [0, pi], K0 = 1: V(pi) = exp(i pi/2) = i
        cfg = ScenarioConfig(
            hbar=1.0,
            hamiltonian=HamiltonianProfile.constant(np.eye(1, dtype=complex)),
            field=FieldProfile.sinusoid(1.0, 1.0 / (2 * np.pi)),
            initial_k=np.eye(1, dtype=complex),
            t_end=np.pi, dt=np.pi / 100, output_stride=10 ** 9)
        _, v = evolve_V(polar_init(cfg.initial_k), cfg)[-1]
        assert abs(v[0, 0] - 1j) <= 1e-10

    def test_commutes_with_generator(self, rng):
        cfg = random_scenario(rng, 3, dt=2e-3, output_stride=100)
        cache = polar_init(cfg.initial_k)
        for _, v in evolve_V(cache, cfg):
            comm = v @ cache.h_b_base - cache.h_b_base @ v
            assert frob(comm) <= 1e-12


class TestEvolveFactorized:
    def test_scalar_closed_form(self):
        # K0 = r0 e^{i phi0}, constant E and B:
        # K(t) = r0 exp(i[(E + B^2/r0^2) t / hbar + phi0])
        r0, phi0, energy, b, hbar = 1.3, 0.4, 1.2, 0.8, 0.9
        k0 = np.array([[r0 * np.exp(1j * phi0)]])
        cfg = constant_config([[energy]], b, k0, hbar=hbar, stride=100)
        for state in evolve_factorized(cfg).states:
            phase = (energy + b * b / r0 ** 2) * state.t / hbar + phi0
            assert abs(state.k[0, 0] - r0 * np.exp(1j * phase)) <= 1e-12

    def test_unit_scalar_gives_double_phase(self):
        # r0 = E = B = hbar = 1, phi0 = 0: K(t) = e^{2it}
        cfg = constant_config([[1.0]], 1.0, [[1.0]], stride=100)
        for state in evolve_factorized(cfg).states:
            assert abs(state.k[0, 0] - np.exp(2j * state.t)) <= 1e-12

    def test_free_case_is_frozen(self, rng):
        k0 = random_full_rank(rng, 3, 0.5, 1.5)
        cfg = constant_config(np.zeros((3, 3)), 0.0, k0, stride=100)
        for state in evolve_factorized(cfg).states:
            assert frob(state.k - k0) <= 1e-12

    def test_initial_condition_reproduced(self, rng):
        cfg = random_scenario(rng, 4)
        first = evolve_factorized(cfg).states[0]
        assert first.t == 0.0
        assert frob(first.k - cfg.initial_k) <= 1e-12 * frob(cfg.initial_k)

    def test_against_direct_solver(self, rng):
        h0 = random_hermitian(rng, 3, 0.5, 2.0)
        h1 = (h0 + random_hermitian(rng, 3, -0.4, 0.4) + h0.conj().T) / 2
        cfg = ScenarioConfig(
            hbar=1.0,
            hamiltonian=HamiltonianProfile.interpolated([0.0, 1.0], [h0, h1]),
            field=FieldProfile.sinusoid(0.4, 0.25, 0.3, 0.7),
            initial_k=random_full_rank(rng, 3, 0.7, 1.4),
            t_end=1.0, dt=1e-3, output_stride=10 ** 9)
        fact = evolve_factorized(cfg).final.k
        direct = evolve_direct(cfg).final.k
        assert frob(fact - direct) <= 1e-7


class TestEvolveDirect:
    def test_free_case_is_frozen(self, rng):
        k0 = random_full_rank(rng, 3, 0.5, 1.5)
        cfg = constant_config(np.zeros((3, 3)), 0.0, k0, stride=100)
        for state in evolve_direct(cfg).states:
            assert frob(state.k - k0) <= 1e-12

    def test_gram_conserved(self, rng):
        cfg = random_scenario(rng, 4, dt=1e-3, output_stride=100)
        gram0 = cfg.initial_k @ cfg.initial_k.conj().T
        for state in evolve_direct(cfg).states:
            drift = frob(state.k @ state.k.conj().T - gram0) / frob(gram0)
            assert drift <= 1e-8

    def test_near_singular_reports_last_good_time(self):
        # pd_floor above the actual singular-value ratio trips immediately
        cfg = ScenarioConfig(
            hbar=1.0,
            hamiltonian=HamiltonianProfile.constant(np.eye(2, dtype=complex)),
            field=FieldProfile.constant(1.0),
            initial_k=np.diag([1.0, 0.4]).astype(complex),
            t_end=1.0, dt=1e-2, output_stride=1, pd_floor=0.5)
        with pytest.raises(NearSingularError) as excinfo:
            evolve_direct(cfg)
        assert excinfo.value.last_good_time == 0.0
        partial = excinfo.value.partial
        assert partial is not None
        assert len(partial.states) == 1
        assert partial.solver_tag == "direct"

    def test_rk4_self_convergence(self, rng):
        base = random_scenario(rng, 3, dt=4e-3, output_stride=10 ** 9)
        finals = []
        for dt in (4e-3, 2e-3, 1e-3):
            cfg = ScenarioConfig(hbar=1.0, hamiltonian=base.hamiltonian,
                                 field=base.field, initial_k=base.initial_k,
                                 t_end=1.0, dt=dt, output_stride=10 ** 9)
            finals.append(evolve_direct(cfg).final.k)
        d1 = frob(finals[0] - finals[1])
        d2 = frob(finals[1] - finals[2])
        assert np.log2(d1 / d2) >= 3.5


class TestEvolveSeries:
    def test_requires_constant_coefficients(self, rng):
        cfg = random_scenario(rng, 2)
        with pytest.raises(RequiresConstantCoefficientsError):
            evolve_series(cfg, 10)

    def test_zero_time_returns_initial_unitary(self, rng):
        k0 = random_full_rank(rng, 3, 0.7, 1.4)
        cache = polar_init(k0)
        h = random_hermitian(rng, 3, 0.5, 2.0)
        h_b = polar_init(k0).h_b_base
        for terms in (1, 2, 7):
            u, estimate = series_unitary(cache.u0, h, h_b, 0.0, 1.0, terms)
            assert np.array_equal(u, cache.u0)
            assert estimate == 0.0

    def test_two_terms_is_first_order_accurate(self, rng):
        h = random_hermitian(rng, 2, 0.5, 2.0)
        b = 0.8
        k0 = random_full_rank(rng, 2, 0.8, 1.3)

        def truncation_error(dt):
            cfg = constant_config(h, b, k0, t_end=dt, dt=dt / 2, stride=10 ** 9)
            series = evolve_series(cfg, terms=2, check_truncation=False).final.k
            exact = evolve_factorized(cfg).final.k
            return frob(series - exact)

        ratio = truncation_error(2e-3) / truncation_error(1e-3)
        assert 2.5 <= ratio <= 6.0  # second-order remainder

    def test_thirty_terms_match_factorized(self, rng):
        h = random_hermitian(rng, 2, 0.5, 2.0)
        cfg = constant_config(h, 0.7, random_full_rank(rng, 2, 0.8, 1.3),
                              t_end=0.5, dt=1e-2, stride=10)
        series = evolve_series(cfg, terms=30)
        fact = evolve_factorized(cfg)
        for s, f in zip(series.states, fact.states):
            assert frob(s.k - f.k) <= 1e-9

    def test_truncation_guard_raises(self, rng):
        h = random_hermitian(rng, 2, 0.5, 2.0)
        cfg = constant_config(h, 0.7, random_full_rank(rng, 2, 0.8, 1.3),
                              t_end=0.5, dt=1e-2, stride=10)
        with pytest.raises(TruncationDominatesError):
            evolve_series(cfg, terms=2)

    def test_radius_warning(self, rng):
        h = random_hermitian(rng, 2, 4.0, 6.0)
        cfg = constant_config(h, 1.0, random_full_rank(rng, 2, 0.8, 1.3),
                              t_end=2.0, dt=0.5, stride=1)
        with pytest.warns(ConvergenceWarning):
            evolve_series(cfg, terms=60)


class TestTrajectoryMetadata:
    def test_digest_and_tags(self, rng):
        cfg = random_scenario(rng, 2, dt=1e-2, output_stride=10)
        fact = evolve_factorized(cfg)
        direct = evolve_direct(cfg)
        assert fact.solver_tag == "factorized"
        assert direct.solver_tag == "direct"
        assert fact.scenario_digest == direct.scenario_digest == cfg.digest()
        assert np.array_equal(fact.times, direct.times)

    def test_output_grid_includes_endpoint(self, rng):
        cfg = random_scenario(rng, 2, dt=1e-2, output_stride=7)
        times = evolve_factorized(cfg).times
        assert times[0] == 0.0
        assert times[-1] == cfg.t_end
