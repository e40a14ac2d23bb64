import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cfslab.core import (DiscreteSystem, InvalidSystem, MinimizeOptions, causal_action, chain_spectrum, classify,
                         classify_spectrum, constraint_report, demo_two_point_system, ell, ell_on_support,
                         fit_multipliers, lagrangian, lagrangian_from_moduli, minimize_action, random_system,
                         signature, with_fitted_multipliers)


def _brute_lagrangian(x, y, n, kappa):
    """Independent evaluation: full spectrum of xy, 2n largest moduli, explicit double sum."""
    a = sorted(np.abs(np.linalg.eigvals(x @ y)), reverse=True)[: 2 * n]
    a += [0.0] * (2 * n - len(a))
    return sum((ai - aj) ** 2 for ai in a for aj in a) / (4 * n) + kappa * sum(a) ** 2


def test_demo_system_classifies_every_pair_as_timelike():
    s = demo_two_point_system()
    kinds = {classify(s.points[i], s.points[j], 1) for i in range(2) for j in range(2)}
    assert kinds == {"timelike"}


def test_rotated_projector_pair_spectrum():
    theta = math.pi / 4
    x = np.diag([1.0, 0.0]).astype(complex)
    v = np.array([math.cos(theta), math.sin(theta)])
    y = np.outer(v, v).astype(complex)
    lam = chain_spectrum(x, y, 1).values
    assert np.allclose(sorted(lam.real), [0.0, 0.5], atol=1e-14)
    assert np.allclose(lam.imag, 0.0)


def test_indefinite_point_squared_spectrum():
    x = np.diag([2.0, -1.0]).astype(complex)
    lam = chain_spectrum(x, x, 1).values
    assert np.allclose(sorted(lam.real), [1.0, 4.0])
    assert classify(x, x, 1) == "timelike"


@pytest.mark.parametrize("lam, kind", [
    (np.array([1.0, 1.0]), "spacelike"),
    (np.array([0.0, 0.0]), "spacelike"),
    (np.array([1.0, 0.5]), "timelike"),
    (np.array([1 + 1j, 1 - 1j]), "spacelike"),
    (np.array([2 + 1j, 0.5 - 1j]), "lightlike"),
])
def test_classification_rules(lam, kind):
    assert classify_spectrum(lam) == kind


def test_lagrangian_of_projector_spectrum():
    assert lagrangian_from_moduli(np.array([1.0, 0.0]), 1, 0.1) == pytest.approx(0.6, abs=1e-15)


def test_action_of_single_projector():
    s = DiscreteSystem(n=1, points=[np.diag([1.0, 0.0])], weights=[1.0], times=[0.0], kappa=0.1)
    assert causal_action(s) == pytest.approx(0.6, abs=1e-14)


def test_constraints_of_demo_system():
    rep = constraint_report(demo_two_point_system())
    assert rep["volume"] == pytest.approx(1.0)
    assert rep["local_traces"] == pytest.approx([1.0, 1.0])
    assert rep["trace"] == pytest.approx(1.0)


def test_signature_rejection():
    with pytest.raises(InvalidSystem, match="signature"):
        DiscreteSystem(n=1, points=[np.diag([1.0, 1.0, 0.0])], weights=[1.0], times=[0.0])
    assert signature(np.diag([1.0, 1.0, -1.0])) == (2, 1)


@pytest.mark.parametrize("kwargs, match", [
    (dict(weights=[0.6, 0.6]), "volume"),
    (dict(weights=[1.5, -0.5]), "positive"),
    (dict(kappa=0.0), "kappa"),
    (dict(points=[np.array([[1.0, 1.0], [0.0, 0.0]]), np.eye(2) / 2]), "Hermitian"),
])
def test_invalid_systems(kwargs, match):
    base = dict(n=1, points=[np.diag([1.0, 0.0]), np.diag([0.0, 1.0])], weights=[0.5, 0.5], times=[0, 1])
    base.update(kwargs)
    with pytest.raises(InvalidSystem, match=match):
        DiscreteSystem(**base)


def test_serialization_round_trip(tmp_path, rng):
    s = random_system(rng, 4, 3, 1)
    path = tmp_path / "system.json"
    s.save(path)
    t = DiscreteSystem.load(path)
    assert np.array_equal(s.points, t.points)
    assert np.array_equal(s.weights, t.weights)
    assert t.dumps() == s.dumps()


def test_malformed_description():
    with pytest.raises(InvalidSystem, match="malformed"):
        DiscreteSystem.from_dict({"points": []})


def test_single_projector_is_already_critical():
    s = DiscreteSystem(n=1, points=[np.diag([1.0, 0.0])], weights=[1.0], times=[0.0], kappa=0.1)
    out = minimize_action(s)
    assert out.final_action == pytest.approx(0.6, abs=1e-12)
    assert out.fd_gradient_norm < 1e-6


def test_two_point_minimization_reaches_criticality(rng):
    out = minimize_action(random_system(rng, 2, 3, 1), MinimizeOptions(seed=1))
    assert out.final_action <= out.initial_action + 1e-12
    assert out.fd_gradient_norm < 1e-6
    assert out.el_residual < 1e-5
    assert np.allclose(np.trace(out.system.points, axis1=1, axis2=2).real, 1.0)
    assert out.system.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_fitted_multipliers_make_ell_vanish_on_two_point_critical_system(rng):
    out = minimize_action(random_system(rng, 2, 2, 1), MinimizeOptions(seed=3))
    r, s = fit_multipliers(out.system)
    assert out.system.r == pytest.approx(r)
    assert np.abs(ell_on_support(out.system)).max() < 1e-5
    assert ell(out.system.points[0], out.system) == pytest.approx(0.0, abs=1e-5)


@st.composite
def hermitian_pairs(draw):
    seed = draw(st.integers(0, 2**31 - 1))
    f = draw(st.integers(2, 5))
    rng = np.random.default_rng(seed)
    s = random_system(rng, 2, f, 1)
    return s.points[0], s.points[1], rng


@given(hermitian_pairs())
def test_lagrangian_symmetric_and_nonnegative(data):
    x, y, _ = data
    a, b = lagrangian(x, y, 1, 0.1), lagrangian(y, x, 1, 0.1)
    assert a >= 0
    assert a == pytest.approx(b, rel=1e-10)
    assert a == pytest.approx(_brute_lagrangian(x, y, 1, 0.1), rel=1e-10)


@given(hermitian_pairs())
def test_lagrangian_unitary_invariance(data):
    x, y, rng = data
    f = len(x)
    q, _ = np.linalg.qr(rng.normal(size=(f, f)) + 1j * rng.normal(size=(f, f)))
    xu, yu = q @ x @ q.conj().T, q @ y @ q.conj().T
    assert lagrangian(xu, yu, 1, 0.1) == pytest.approx(lagrangian(x, y, 1, 0.1), rel=1e-9)


@given(st.integers(0, 10_000))
def test_random_systems_satisfy_constraints(seed):
    s = random_system(np.random.default_rng(seed), 3, 4, 1)
    assert np.allclose(np.trace(s.points, axis1=1, axis2=2).real, 1.0)
    assert all(signature(x) == (1, 1) for x in s.points)
    s2 = with_fitted_multipliers(s)
    assert s2.weights @ ell_on_support(s2) == pytest.approx(0.0, abs=1e-12)
