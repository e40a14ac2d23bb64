import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfslab.core import (action_parts, causal_action, factors_from_points, lagrangian, random_system,
                         with_fitted_multipliers)
from cfslab.spin import fermionic_kernel, spin_adjoint, spin_bases
from cfslab.variations import (DegenerateSpectrum, abs_variation, decoupling_report, eigen_perturbation,
                               kernel_direction, lagrangian_gradient_x, phase_variation, q_kernel,
                               random_variation, restricted_el_residual, second_variation_action,
                               separated_support_check)


def test_eigen_perturbation_two_by_two_closed_form():
    # eigenvalues of [[1, e], [e, 3]] are 2 -+ sqrt(1 + e^2) = {1 - e^2/2, 3 + e^2/2} + O(e^4)
    ep = eigen_perturbation(np.diag([1.0, 3.0]), np.array([[0.0, 1.0], [1.0, 0.0]]))
    order = np.argsort(ep.lam0.real)
    assert np.allclose(ep.lam0[order], [1.0, 3.0])
    assert np.allclose(ep.lam1, 0.0)
    assert np.allclose(ep.lam2[order], [-0.5, 0.5])
    assert not ep.degenerate


def test_eigen_perturbation_along_the_matrix_itself(rng):
    A0 = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    ep = eigen_perturbation(A0, 0.7 * A0)
    assert np.allclose(ep.lam1, 0.7 * ep.lam0)
    assert np.allclose(ep.lam2, 0.0, atol=1e-12)
    assert np.allclose(ep.projectors.sum(0), np.eye(4))


def test_eigen_perturbation_flags_degenerate_spectrum():
    ep = eigen_perturbation(np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert ep.degenerate and ep.order == 0


@pytest.mark.parametrize("lam, dlam, d2lam, first, second", [
    (1.0, 1j, 0.0, 0.0, 1.0),
    (-2.0, 1.0, 0.0, -1.0, 0.0),
    (1j, 1.0, 2j, 0.0, 3.0),
])
def test_abs_variation_examples(lam, dlam, d2lam, first, second):
    out = abs_variation(lam, dlam, d2lam)
    assert out["first"] == pytest.approx(first, abs=1e-15)
    assert out["second"] == pytest.approx(second, abs=1e-15)


def test_abs_variation_rejects_zero_eigenvalue():
    with pytest.raises(DegenerateSpectrum):
        abs_variation(0.0, 1.0, 0.0)


def test_q_kernel_fast_matches_finite_differences(rng):
    s = random_system(rng, 4, 4, 1)
    qk = q_kernel(s, method="both")
    assert qk.agreement < 1e-5
    assert qk.symmetry_residual() < 1e-10


def test_q_kernel_defines_the_first_variation(rng):
    s = random_system(rng, 3, 3, 1)
    qk = q_kernel(s)
    bases = qk.bases
    K = fermionic_kernel(s, bases)
    dP = rng.normal(size=K[0, 1].shape) + 1j * rng.normal(size=K[0, 1].shape)
    h = 1e-6

    def L(t):
        A = (K[0, 1] + t * dP) @ spin_adjoint(K[0, 1] + t * dP, bases[0], bases[1])
        a = sorted(np.abs(np.linalg.eigvals(A)), reverse=True)[:2]
        a += [0.0] * (2 - len(a))
        return sum((x - y) ** 2 for x in a for y in a) / 4 + s.kappa * sum(a) ** 2

    fd = (L(h) - L(-h)) / (2 * h)
    pred = 2 * np.einsum("ab,ba->", qk[0, 1], spin_adjoint(dP, bases[0], bases[1])).real
    assert pred == pytest.approx(fd, rel=1e-6)


def test_separated_supports_have_vanishing_first_variation(rng):
    s = random_system(rng, 3, 4, 1)
    qk = q_kernel(s)
    phi = [rng.normal(size=b.dim) + 1j * rng.normal(size=b.dim) for b in qk.bases]
    res = separated_support_check(s, 0, 2, phi[0], phi[2], qk)
    assert res.first_analytic == 0.0
    assert abs(res.first_fd) < 1e-8 * abs(res.predicted) + 1e-12
    assert res.relative_error < 1e-8


@settings(max_examples=10)
@given(st.integers(0, 10_000), st.integers(1, 2))
def test_decomposition_identity(seed, n):
    rng = np.random.default_rng(seed)
    s = with_fitted_multipliers(random_system(rng, 3, 2 * n + 1, n))
    rep = second_variation_action(s, random_variation(s, rng))
    assert rep.relative_error < 1e-4
    assert rep.lfe_term >= -1e-14 * rep.scale
    assert rep.q_pair_check < 1e-8 * rep.scale


def test_zero_variation_gives_zero_terms(rng):
    s = with_fitted_multipliers(random_system(rng, 3, 3, 1))
    Phi = [np.zeros((b.dim, 3), complex) for b in spin_bases(s)]
    rep = second_variation_action(s, Phi)
    assert rep.total == 0.0 and rep.fd_total == 0.0


def test_phase_variation_is_a_zero_mode_of_the_second_variation(rng):
    s = with_fitted_multipliers(random_system(rng, 3, 3, 1))
    rep = second_variation_action(s, phase_variation(s))
    assert abs(rep.lfe_term) < 1e-12 * max(rep.scale, 1.0)
    # with the fitted multiplier r = 2 S the action is stationary to second order along the phase
    S = causal_action(s)
    assert abs(rep.total) < 1e-10 * S
    assert abs(rep.fd_total) < 1e-6 * S


def test_lagrangian_gradient_matches_analytic_factor_gradient(rng):
    s = random_system(rng, 2, 3, 1)
    x, y = s.points
    D1 = lagrangian_gradient_x(x, y, 1, s.kappa)
    B = factors_from_points(np.array(s.points), 1, s.tol.sigma)
    _, D1a = action_parts(B, 1, s.kappa)
    assert np.allclose(D1, D1a[0, 1], atol=1e-7 * np.abs(D1a[0, 1]).max())
    H = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    H = H + H.conj().T
    h = 1e-6
    fd = (lagrangian(x + h * H, y, 1, s.kappa) - lagrangian(x - h * H, y, 1, s.kappa)) / (2 * h)
    assert np.trace(H @ D1).real == pytest.approx(fd, rel=1e-6)


def test_restricted_el_residual_is_nonnegative(rng):
    s = with_fitted_multipliers(random_system(rng, 3, 3, 1))
    out = restricted_el_residual(s, [np.eye(3)[0], np.eye(3)[1]])
    assert len(out) == 2 and min(out) >= 0


def test_decoupling_zero_variation_rows(rng):
    s = with_fitted_multipliers(random_system(rng, 4, 3, 1))
    Phi = [np.zeros((b.dim, 3), complex) for b in spin_bases(s)]
    rep = decoupling_report(s, Phi, [(0, 1), (2, 3)])
    for row in rep.strips:
        assert row["lfe"] == row["q_form"] == row["boundary"] == row["residual"] == 0.0


def test_decoupling_whole_strip_consistency(rng):
    s = with_fitted_multipliers(random_system(rng, 4, 3, 1))
    Phi = random_variation(s, rng)
    full = second_variation_action(s, Phi, fd=False)
    rep = decoupling_report(s, Phi, [(-1, 10), (5, 6)])
    row = rep.strips[0]
    assert row["members"] == [0, 1, 2, 3]
    assert row["lfe"] == pytest.approx(abs(full.lfe_term), rel=1e-12)
    assert row["boundary"] == pytest.approx(0.0, abs=1e-12 * full.scale)
    assert row["residual"] == pytest.approx(abs(full.total), rel=1e-10)
    assert rep.strips[1]["members"] == []
    assert len(rep.slices) == 4


def test_kernel_direction_is_a_unit_eigenvector(rng):
    s = with_fitted_multipliers(random_system(rng, 2, 2, 1))
    Phi, ev, evmax = kernel_direction(s)
    norm2 = sum(np.linalg.norm(F) ** 2 for F in Phi)
    assert norm2 == pytest.approx(1.0)
    assert abs(ev) <= evmax
    assert second_variation_action(s, Phi, fd=False).total == pytest.approx(ev, abs=1e-9 * evmax)
