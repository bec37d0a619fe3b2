import pickle

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hybridq.models import (ModelError, ModelParams, build_builtin, check_model, eval_coefficients,
                            list_models, local_unitary, pauli_generator, pauli_walk, point_mass,
                            register_model)
from hybridq.states import I2, dagger

ALL = list_models()


@pytest.mark.parametrize("name", ALL)
def test_builtin_is_valid(name):
    m = build_builtin(name)
    check_model(m)
    co = eval_coefficients(m, np.zeros((3, m.s)))
    assert co.c.shape == (3, m.s)
    assert co.a.shape == (3, m.s, m.d)
    assert co.g.shape == (3, m.l, m.s)
    assert co.L.shape == (3, m.d, m.n, m.n)
    assert co.J.shape == (3, m.l, m.n, m.n)
    assert m.params.name == name


@pytest.mark.parametrize("name", ALL)
def test_builtin_pickles(name):
    m = build_builtin(name)
    m2 = pickle.loads(pickle.dumps(m))
    x = np.ones(m.s) * 0.3
    assert np.allclose(eval_coefficients(m, x).K, eval_coefficients(m2, x).K)


@pytest.mark.parametrize("name", ALL)
def test_x_independence_flag_is_honest(name):
    m = build_builtin(name)
    if m.quantum_depends_on_x:
        return
    lo, hi = (np.asarray(b) for b in m.x_box)
    xs = lo + (hi - lo) * np.random.default_rng(0).random((10, m.s))
    co = eval_coefficients(m, xs)
    for arr in (co.H, co.L, co.J):
        assert np.allclose(arr, arr[:1])


@pytest.mark.parametrize("name", ["unitary_local", "unitary_nonlocal"])
def test_unitary_jumps_have_constant_intensity(name):
    m = build_builtin(name, beta=1.3)
    co = eval_coefficients(m, np.zeros(m.s))
    for J in co.J:
        assert np.allclose(dagger(J) @ J, 1.3**2 * np.eye(4))


def test_hidden_entanglement_switches_off():
    m = build_builtin("hidden_entanglement")
    co = eval_coefficients(m, np.array([[0.0], [0.5], [1.0], [2.0]]))
    norms = np.linalg.norm(co.J[:, 0], 2, axis=(-2, -1))
    assert np.allclose(norms, [1.2, 0.6, 0.0, 0.0])


@given(st.floats(-np.pi, np.pi), st.floats(0.05, 1), st.floats(0.05, 1), st.floats(-1, 1))
def test_local_unitary_is_unitary(phi, a, b, c):
    axis = np.array([a, b, c]) / np.linalg.norm([a, b, c])
    u = local_unitary(phi, axis)
    assert np.allclose(u @ dagger(u), I2, atol=1e-12)


def test_local_unitary_axis_validation():
    with pytest.raises(ModelError):
        local_unitary(0.3, [1.0, 1.0, 0.0])


class TestRegistry:
    def test_unknown_name_lists_builtins(self):
        with pytest.raises(ModelError, match="unitary_local"):
            build_builtin("nope")

    def test_bad_parameters(self):
        with pytest.raises(ModelError):
            build_builtin("point_mass", wrong=1)
        with pytest.raises(ModelError):
            build_builtin("unitary_local", lam=-1)
        with pytest.raises(ModelError):
            build_builtin("point_mass", beta=0)

    def test_params_object(self):
        m = build_builtin(ModelParams("point_mass", {"x0": 2.0, "lam": 0.5}))
        assert m.rates[0] == 0.5

    def test_register(self):
        register_model("pm_copy", point_mass, overwrite=True)
        assert "pm_copy" in list_models()
        with pytest.raises(ModelError):
            register_model("pm_copy", point_mass)


class TestPauliWalk:
    def test_coverage_validation(self):
        with pytest.raises(ModelError, match="cover"):
            pauli_walk([[0.0], [1.0]], [{"sources": [0], "target": 1, "rate": 1.0}])

    def test_unknown_jump_key(self):
        with pytest.raises(ModelError):
            pauli_walk([[0.0]], [{"sources": [0], "target": 0, "rate": 1.0, "speed": 2}])

    def test_displacements_move_sources_to_target(self):
        m = pauli_walk()
        co = eval_coefficients(m, np.array([[0.0], [1.0], [2.0]]))
        dest = np.array([[0.0], [1.0], [2.0]])[:, None, :] + co.g
        # point 0 jumps to 1 by type 0; point 1 to 2 (type 1) or 0 (type 3); point 2 to 0 (type 2)
        assert dest[0, 0, 0] == 1.0 and dest[1, 1, 0] == 2.0 and dest[1, 3, 0] == 0.0 and dest[2, 2, 0] == 0.0
        assert np.all(co.g[0, 1:] == 0)

    def test_generator_rows_sum_to_zero(self):
        from hybridq.models import DEFAULT_WALK
        Q = pauli_generator(DEFAULT_WALK["points"], DEFAULT_WALK["jumps"])
        assert np.allclose(Q.sum(axis=1), 0)
