import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfslab.core import random_system, with_fitted_multipliers
from cfslab.variations import q_kernel
from cfslab.wave import (InadmissibleInhomogeneity, LatticeModel, StripOperator, SupportError, TimeStrip,
                         appendix_a_check, build_extended_space, build_lattice, commutator_from_inhomogeneities,
                         commutator_inner, conservation_series, coupling_iteration, homogeneous_from_boundary,
                         kernel_hygiene, positive_subspace, positivity_perturbation, random_coupling,
                         sign_operator_check, solve_inhomogeneous)

GAMMA = (0.7, 0.45, 0.6, 0.3)


def _cvec(rng, n):
    return rng.normal(size=n) + 1j * rng.normal(size=n)


@pytest.fixture(scope="module")
def lattice():
    return build_lattice(gamma=GAMMA)


@pytest.fixture(scope="module")
def kernel_lattice():
    return build_lattice(gamma=GAMMA, kernel_mode=True)


@pytest.mark.parametrize("args", [(0, 2, 1, 5), (0, 1, 2, 2), (0, 1, 4, 5, 0.6)])
def test_time_strip_rejects_bad_markers(args):
    with pytest.raises(ValueError):
        TimeStrip(*args)


def test_time_strip_members():
    s = TimeStrip(1.0, 2.0, 3.0, 4.0)
    assert list(s.members([0, 1, 2.5, 4, 5])) == [1, 2, 3]


def test_single_point_strip(rng):
    s = with_fitted_multipliers(random_system(rng, 3, 3, 1))
    op = StripOperator(s, q_kernel(s), [1])
    assert op.dim == 2
    assert op.norm <= op.bound * (1 + 1e-9)
    assert np.allclose(op.H, op.H.conj().T)


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_strip_operator_is_symmetric_for_the_lagrangian_kernel(seed):
    s = with_fitted_multipliers(random_system(np.random.default_rng(seed), 4, 3, 1))
    op = StripOperator(s, q_kernel(s), range(4))
    assert op.symmetry_residual < 1e-10
    assert op.norm <= op.bound * (1 + 1e-6)


def test_solve_recovers_image(lattice, rng):
    op = lattice.op
    chi = _cvec(rng, op.dim)
    phi = op.apply(chi)
    out = solve_inhomogeneous(op, phi)
    assert out["residual"] < 1e-10
    assert np.allclose(op.apply(out["psi"]), phi)


def test_zero_inhomogeneity(lattice):
    out = solve_inhomogeneous(lattice.op, np.zeros(lattice.op.dim, complex))
    assert out["residual"] == 0.0 and not np.any(out["psi"])


def test_kernel_direction_is_inadmissible(kernel_lattice):
    op = kernel_lattice.op
    assert op.kernel_basis().shape[1] == 1
    e = op.evecs[:, np.argmin(np.abs(op.evals))]
    phi = op.sign * e / np.sqrt(op.gram)
    with pytest.raises(InadmissibleInhomogeneity):
        solve_inhomogeneous(op, phi)


def test_boundary_data_supports_are_checked(lattice, rng):
    op = lattice.op
    with pytest.raises(SupportError):
        homogeneous_from_boundary(op, np.zeros(op.dim, complex), _cvec(rng, op.dim), 1.0)


def test_future_only_data_gives_interior_homogeneous_solution(lattice, rng):
    op = lattice.op
    s = op.strip
    phi1 = _cvec(rng, op.dim) * op.mask(s.t_max, s.t1)
    out = homogeneous_from_boundary(op, phi1, np.zeros(op.dim, complex), 0.0)
    assert out["interior_residual"] < 1e-10


def test_commutator_inner_vanishes_before_the_strip(lattice, rng):
    op = lattice.op
    a, b = _cvec(rng, op.dim), _cvec(rng, op.dim)
    assert commutator_inner(op, a, b, -1.0) == 0.0
    assert commutator_inner(op, a, b, 100.0) == 0.0


@settings(max_examples=10)
@given(st.integers(0, 10_000), st.integers(0, 15))
def test_telescoped_formula_holds_for_arbitrary_vectors(lattice, seed, t):
    op = lattice.op
    rng = np.random.default_rng(seed)
    a, b = _cvec(rng, op.dim), _cvec(rng, op.dim)
    scale = np.linalg.norm(a) * np.linalg.norm(b) * op.norm / 16
    assert abs(commutator_inner(op, a, b, t) - commutator_from_inhomogeneities(op, a, b, t)) < 1e-12 * scale


def test_commutator_inner_is_hermitian(lattice, rng):
    op = lattice.op
    a, b = _cvec(rng, op.dim), _cvec(rng, op.dim)
    assert commutator_inner(op, a, b, 7) == pytest.approx(np.conj(commutator_inner(op, b, a, 7)))


def test_conservation_for_homogeneous_solutions(lattice, rng):
    op = lattice.op
    s = op.strip
    fut, past = op.mask(s.t_max, s.t1), op.mask(s.t0, s.t_min)
    psi = homogeneous_from_boundary(op, _cvec(rng, op.dim) * fut, _cvec(rng, op.dim) * past, 1.0)["psi"]
    ser = conservation_series(op, psi, psi)
    assert ser["relative_drift"] < 1e-10
    assert ser["formula_mismatch"] < 1e-10
    assert len(ser["t"]) >= 3


def test_positivity_sweep(lattice, rng):
    op = lattice.op
    s = op.strip
    psi0 = solve_inhomogeneous(op, _cvec(rng, op.dim) * op.mask(s.t_max, s.t1))["psi"]
    out = positivity_perturbation(op, psi0)
    assert out["relative_error"] < 1e-8
    assert out["remainder_vanishes"] and out["order_ok"]
    assert out["past_norm_sq"] > 0
    assert all(v > 0 for v in out["values"])


def test_positivity_of_zero_solution(lattice):
    out = positivity_perturbation(lattice.op, np.zeros(lattice.op.dim, complex))
    assert out["linear_coefficient"] == 0.0 and out["order_ok"]


def test_sign_operator_maps_spin_to_scalar_product(lattice, rng):
    assert sign_operator_check(lattice.op, rng) < 1e-12


def test_extended_space_without_hilbert_vectors(lattice, rng):
    ext = build_extended_space(lattice.op, [], 1e-2 * lattice.op.norm, rng)
    assert ext.fitted_c is None
    assert ext.min_eig >= -1e-10
    assert np.abs(ext.gram - ext.gram_later).max() < 1e-8 * np.abs(ext.gram).max()


def test_extended_space_with_kernel(kernel_lattice, rng):
    op = kernel_lattice.op
    Hf = positive_subspace(kernel_lattice)[:1]
    ext = build_extended_space(op, Hf, 1e-2 * op.norm, rng, kernel_vector=kernel_lattice.kernel_vector)
    d = ext.to_dict()
    assert ext.min_eig >= -1e-10
    assert d["kernel_neutrality"] is not None
    assert d["kernel_neutrality"] < 1e-10 * np.abs(ext.gram).max()
    assert ext.fitted_c > 0


def test_positive_subspace_is_commutator_positive(lattice):
    J = np.diag(lattice.cip_signature)
    for v in positive_subspace(lattice):
        assert (v.conj() @ J @ v).real == pytest.approx(1.0)


def test_coupling_zero_small_large(lattice, rng):
    op = lattice.op
    s = op.strip
    phi = _cvec(rng, op.dim) * op.mask(s.t_max, s.t1)
    zero = coupling_iteration(op, phi, np.zeros((2 * op.dim, 2 * op.dim)))
    assert zero.converged and zero.iterations == 1
    small = coupling_iteration(op, phi, random_coupling(op, 1e-3, rng))
    assert small.converged and not small.diverged
    large = coupling_iteration(op, phi, random_coupling(op, 10.0, rng))
    assert large.diverged and not large.converged


def test_trace_free_operator_degenerate_cases(rng):
    s = random_system(rng, 4, 3, 1)
    qk = q_kernel(s)
    out = appendix_a_check(s, qk, [0, 1], np.zeros(3))
    assert out["norm_C"] == 0.0 and out["quadratic"] == 0.0
    out = appendix_a_check(s, qk, range(4), _cvec(rng, 3))
    assert out["norm_C"] == 0.0 and out["cip"] == 0.0


def test_trace_free_operator_matches_commutator_product(rng):
    s = random_system(rng, 5, 3, 1)
    out = appendix_a_check(s, q_kernel(s), [0, 2], _cvec(rng, 3))
    assert out["trace_relative"] < 1e-10
    assert out["quadratic_match"] < 1e-4


def test_kernel_hygiene(lattice):
    s, qk = lattice.system, lattice.qk
    ok = kernel_hygiene(s, qk, 1.0, 1e6)
    assert ok["passed"]
    assert not kernel_hygiene(s, qk, 0.0, 1e6)["finite_range"]
    assert not kernel_hygiene(s, qk, 1.0, 1e-6)["bounded"]


def test_lattice_model_frequencies_and_limits():
    m = LatticeModel(8, GAMMA, 0.3)
    w, v = m.plane_waves()
    assert len(w) == 8 and len(set(np.round(w, 10))) == 8
    with pytest.raises(ValueError):
        LatticeModel(8, GAMMA, 5.0).frequencies()
    with pytest.raises(ValueError):
        LatticeModel(8, (0.7,), 0.3)
