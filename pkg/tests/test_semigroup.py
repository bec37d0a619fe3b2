import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from hybridq.analysis import BinSpec
from hybridq.engine import NumericalError
from hybridq.models import ModelError, build_builtin
from hybridq.semigroup import (CheckReport, InstrumentError, Liouvillian, characteristic_composition_check,
                               characteristic_operator, classical_generator, constant, cosine, derived_seed,
                               estimate_instrument, gaussian, generator_consistency_check, hybrid_generator,
                               lindblad_solve, lindblad_trajectory, normalization_check, plane_wave, quadratic)
from hybridq.states import BELL, SX, SZ, maximally_mixed, projector, random_density, trace_distance


def random_liouvillian(n, d, l, rng):
    def mat():
        return (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(n)

    H = mat()
    return Liouvillian(H + H.conj().T, np.array([mat() for _ in range(d)]).reshape(d, n, n),
                       np.array([mat() for _ in range(l)]).reshape(l, n, n), rng.uniform(0.1, 2.0, l))


class TestLiouvillian:
    @settings(max_examples=30)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(0, 2), st.integers(0, 2))
    def test_trace_preserving(self, seed, n, d, l):
        rng = np.random.default_rng(seed)
        liou = random_liouvillian(n, d, l, rng)
        rho = random_density(n, rng)
        assert liou.trace_defect(rho) < 1e-10

    @settings(max_examples=20)
    @given(st.integers(0, 2**32 - 1))
    def test_superoperator_matches_apply(self, seed):
        rng = np.random.default_rng(seed)
        liou = random_liouvillian(3, 1, 2, rng)
        rho = random_density(3, rng)
        assert np.allclose(liou.superoperator() @ rho.reshape(-1), liou.apply(rho).reshape(-1), atol=1e-12)

    @settings(max_examples=20)
    @given(st.integers(0, 2**32 - 1))
    def test_adjoint_duality(self, seed):
        rng = np.random.default_rng(seed)
        liou = random_liouvillian(3, 2, 1, rng)
        rho = random_density(3, rng)
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        lhs = np.trace(liou.apply(rho) @ a)
        rhs = np.trace(rho @ liou.adjoint(a))
        assert lhs == pytest.approx(rhs, abs=1e-10)

    def test_norm_estimate(self):
        liou = random_liouvillian(2, 1, 1, np.random.default_rng(1))
        exact = np.linalg.norm(liou.superoperator(), 2)
        assert liou.norm_estimate(iters=300) == pytest.approx(exact, rel=1e-6)

    def test_x_dependent_model_refused(self):
        with pytest.raises(ModelError):
            Liouvillian.from_model(build_builtin("hidden_entanglement"))
        Liouvillian.from_model(build_builtin("hidden_entanglement"), x=[0.0])


class TestLindblad:
    def test_hamiltonian_only(self):
        H = 0.7 * SZ + 0.3 * SX
        liou = Liouvillian(H, np.zeros((0, 2, 2)), np.zeros((0, 2, 2)), np.zeros(0))
        rho = random_density(2, np.random.default_rng(0))
        U = expm(-1j * H * 1.5)
        assert np.allclose(lindblad_solve(liou, rho, 1.5), U @ rho @ U.conj().T, atol=1e-10)

    def test_no_generator_is_constant(self):
        z = np.zeros((2, 2))
        liou = Liouvillian(z, np.zeros((0, 2, 2)), np.zeros((0, 2, 2)), np.zeros(0))
        rho = random_density(2, np.random.default_rng(2))
        assert np.allclose(lindblad_solve(liou, rho, 3.0), rho)

    def test_matches_matrix_exponential(self):
        rng = np.random.default_rng(5)
        liou = random_liouvillian(3, 1, 2, rng)
        rho = random_density(3, rng)
        exact = (expm(liou.superoperator() * 0.8) @ rho.reshape(-1)).reshape(3, 3)
        assert np.allclose(lindblad_solve(liou, rho, 0.8), exact, atol=1e-9)

    def test_equilibrium_approach_is_monotone(self):
        model = build_builtin("unitary_local")
        liou = Liouvillian.from_model(model)
        times = np.linspace(0, 6, 13)
        traj = lindblad_trajectory(liou, projector(BELL["phi_plus"]), times)
        dist = [trace_distance(r, maximally_mixed(4)) for r in traj]
        assert np.all(np.diff(dist) <= 1e-12)

    def test_local_coherence_limits_equilibration(self):
        # a transverse single-qubit component relaxes no faster than lambda beta^2
        lam, beta = 1.0, 1.2
        model = build_builtin("unitary_local", lam=lam, beta=beta)
        plus = np.kron(np.array([1, 1]) / np.sqrt(2), np.array([1, 0]))
        T = 10 / (lam * beta**2)
        td = trace_distance(lindblad_solve(Liouvillian.from_model(model), projector(plus), T), maximally_mixed(4))
        assert 1e-6 < td < 2 * np.exp(-lam * beta**2 * T)
        rates = np.sort(-np.linalg.eigvals(Liouvillian.from_model(model).superoperator()).real)
        assert rates[1] == pytest.approx(lam * beta**2)

    def test_unstable_step_detected(self):
        liou = random_liouvillian(2, 1, 1, np.random.default_rng(0))
        liou = Liouvillian(liou.H * 1e3, liou.L * 40, liou.J, liou.rates)
        rho = random_density(2, np.random.default_rng(1))
        # h_max far beyond the stability region, norm-based cap bypassed by monkeypatching
        with pytest.raises(NumericalError):
            bad = Liouvillian(liou.H, liou.L, liou.J, liou.rates)
            object.__setattr__(bad, "norm_estimate", lambda: 0.0)
            lindblad_trajectory(bad, rho, [1.0], h_max=0.5)

    def test_negative_time(self):
        liou = random_liouvillian(2, 0, 0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            lindblad_solve(liou, np.eye(2) / 2, -1.0)


class TestTestFunctions:
    @pytest.mark.parametrize("F", [plane_wave([0.7, -0.4]), cosine([1.1, 0.3]), gaussian([0.2, 0.5], 0.8),
                                   quadratic([[1.0, 0.2], [0.0, 2.0]])], ids=lambda F: F.name)
    def test_derivatives_by_finite_differences(self, F):
        x = np.array([0.3, -0.6])
        h = 1e-5
        e = np.eye(2)
        g = np.array([(F.f(x + h * e[i]) - F.f(x - h * e[i])) / (2 * h) for i in range(2)])
        hs = np.array([[(F.grad(x + h * e[j])[i] - F.grad(x - h * e[j])[i]) / (2 * h) for j in range(2)]
                       for i in range(2)])
        assert np.allclose(F.grad(x), g, atol=1e-7)
        assert np.allclose(F.hess(x), hs, atol=1e-7)

    def test_vectorised(self):
        F = gaussian([0.0], 1.0)
        xs = np.linspace(-1, 1, 5)[:, None]
        assert F.f(xs).shape == (5,)
        assert F.hess(xs).shape == (5, 1, 1)


class TestGenerators:
    def test_constant_is_annihilated(self):
        for name in ("pure_classical", "point_mass", "pauli_walk"):
            model = build_builtin(name)
            x = np.zeros(model.s)
            assert classical_generator(model, constant(), x) == pytest.approx(0)

    def test_point_mass(self):
        model = build_builtin("point_mass", x0=1.0, lam=2.0)
        F = gaussian([0.0], 1.0)
        x = np.array([0.4])
        assert classical_generator(model, F, x) == pytest.approx(2.0 * (F.f([1.0]) - F.f(x)))

    def test_quadratic_jump_diffusion(self):
        c0, kappa, a, g, lam = 0.3, 0.5, 0.7, 1.5, 2.0
        model = build_builtin("pure_classical", c0=c0, kappa=kappa, a=a, g=g, lam=lam)
        x = 0.8
        expected = 2 * x * (c0 - kappa * x) + a**2 + lam * ((x + g) ** 2 - x**2)
        assert classical_generator(model, quadratic([[1.0]]), [x]) == pytest.approx(expected)

    def test_compensated_jump(self):
        model = build_builtin("pure_classical", g=1.5, lam=2.0, compensated=True, c0=0, kappa=0, a=0)
        x = 0.8
        assert classical_generator(model, quadratic([[1.0]]), [x]) == pytest.approx(2.0 * 1.5**2)

    @pytest.mark.parametrize("name", ["unitary_local", "unitary_nonlocal", "hidden_entanglement", "monitored_qubit"])
    def test_flat_function_gives_heisenberg_generator(self, name):
        model = build_builtin(name)
        rng = np.random.default_rng(3)
        rho = random_density(model.n, rng)
        a = rng.normal(size=(model.n, model.n)) + 1j * rng.normal(size=(model.n, model.n))
        x = np.full(model.s, 0.3)
        liou = Liouvillian.from_model(model, x)
        val = hybrid_generator(model, constant(1.0, a), rho, x)
        assert val == pytest.approx(np.trace(rho @ liou.adjoint(a)), abs=1e-10)

    @pytest.mark.parametrize("name", ["unitary_local", "unitary_nonlocal", "hidden_entanglement", "monitored_qubit"])
    def test_probability_conserved(self, name):
        model = build_builtin(name)
        rho = random_density(model.n, np.random.default_rng(4))
        assert hybrid_generator(model, constant(), rho, np.zeros(model.s)) == pytest.approx(0, abs=1e-12)

    def test_reduces_to_classical(self):
        model = build_builtin("pure_classical", ell=0.0, j=1.0, lam=1.5, g=0.4, a=0.9, kappa=0.2)
        F = cosine([1.3])
        for x in (-0.5, 0.0, 1.2):
            hg = hybrid_generator(model, F, np.eye(1), [x])
            assert hg == pytest.approx(classical_generator(model, F, [x]), abs=1e-12)

    def test_shape_errors(self):
        model = build_builtin("unitary_local")
        with pytest.raises(ValueError):
            hybrid_generator(model, constant(), np.eye(2), [0.0, 0.0])
        with pytest.raises(ValueError):
            hybrid_generator(model, constant(1.0, np.eye(2)), np.eye(4) / 4, [0.0, 0.0])


class TestMonteCarloChecks:
    @pytest.mark.parametrize("x", [-0.5, 0.0, 0.7])
    def test_generator_consistency_monitored(self, x):
        model = build_builtin("monitored_qubit")
        rho = random_density(2, np.random.default_rng(6))
        rep = generator_consistency_check(model, cosine([1.0], SZ), rho, [x], N=40_000, seed=1)
        assert rep.passed, rep.to_dict()

    def test_unbounded_function_rejected(self):
        model = build_builtin("point_mass")
        with pytest.raises(ValueError):
            generator_consistency_check(model, quadratic([[1.0]]), np.eye(1), [0.0], N=10)

    def test_instrument_at_time_zero(self):
        model = build_builtin("unitary_local")
        rho = projector(BELL["phi_plus"])
        bins = BinSpec.integer([0, 0], [1, 1])
        a = np.kron(SZ, SZ)
        est = estimate_instrument(model, [0.0, 0.0], 0.0, rho, a, bins, N=64)
        assert est.values[0] == pytest.approx(1.0)
        assert np.allclose(est.values[1:], 0)
        assert np.all(est.stderr < 1e-12)

    def test_overflow_raises(self):
        model = build_builtin("point_mass", x0=5.0, lam=5.0)
        with pytest.raises(InstrumentError):
            estimate_instrument(model, [0.0], 1.0, np.eye(1), bins=BinSpec.uniform(-1, 1, 4), N=256, dt=1e-2)

    def test_normalization(self):
        model = build_builtin("hidden_entanglement")
        rep = normalization_check(model, [0.0], 0.5, projector(BELL["phi_plus"]), bins=BinSpec.integer(0, 1),
                                  N=4000, dt=1e-2)
        assert rep.passed

    def test_characteristic_at_zero_wavevector(self):
        model = build_builtin("unitary_local")
        val, se = characteristic_operator(model, [0.0, 0.0], 0.5, maximally_mixed(4), k=0.0, N=4000, dt=1e-2)
        assert abs(val.real - 1) <= 4 * se.real
        assert val.imag == pytest.approx(0, abs=1e-12)

    def test_characteristic_composition(self):
        model = build_builtin("unitary_local")
        rep = characteristic_composition_check(model, 0.3, 0.3, projector(BELL["phi_plus"]), np.kron(SZ, SZ),
                                               k=[0.5, -0.3], N=8000, dt=1e-2)
        assert rep.passed, rep.to_dict()

    def test_characteristic_needs_translation_invariance(self):
        with pytest.raises(ModelError):
            characteristic_composition_check(build_builtin("point_mass"), 0.1, 0.1, np.eye(1), N=10)


class TestReports:
    def test_json_roundtrip(self):
        rep = CheckReport("x", 1 + 2j, np.array([0.1]), 0.3, True, {"n": np.int64(3), "inf": float("inf")})
        d = json.loads(rep.to_json())
        assert d["estimate"] == {"re": 1.0, "im": 2.0}
        assert d["pass"] is True and d["n"] == 3 and d["inf"] == "inf"

    def test_derived_seeds_distinct(self):
        seeds = {derived_seed(s, k) for s in range(20) for k in range(20)}
        assert len(seeds) == 400
