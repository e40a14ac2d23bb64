import numpy as np
import pytest
from hypothesis import given, strategies as st

from cfslab.core import random_system
from cfslab.spin import (NotInSpinSpace, fermionic_kernel, isospectrality_check, physical_wave_function,
                         projector, sign_operator, spin_adjoint, spin_basis, spin_bases, spin_products,
                         wave_evaluation)


def test_spin_products_of_indefinite_point():
    x = np.diag([1.0, -1.0])
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert spin_products(x, e1, e1) == {"spin_inner": -1.0, "spin_scalar": 1.0}
    assert spin_products(x, e2, e2) == {"spin_inner": 1.0, "spin_scalar": 1.0}
    assert spin_products(x, e1, e2)["spin_inner"] == 0.0


def test_vector_outside_spin_space_is_rejected():
    with pytest.raises(NotInSpinSpace):
        spin_products(np.diag([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 0.0]))


def test_sign_operator_relates_the_two_products():
    x = np.diag([2.0, -0.5, 0.0]).astype(complex)
    b = spin_basis(x)
    s = sign_operator(b)
    assert np.allclose(np.diag(s), [-1.0, 1.0])
    assert np.allclose(b.gram @ s, b.scalar_gram)


def test_kernel_diagonal_reproduces_point(rng):
    s = random_system(rng, 3, 4, 1)
    bases = spin_bases(s)
    P = fermionic_kernel(s, bases)
    for i, b in enumerate(bases):
        # P(x, x) acts on S_x as x itself, while x = -Psi(x)* Psi(x)
        assert np.allclose(b.E @ P[i, i] @ b.E.conj().T, s.points[i])
        assert np.allclose(-(b.psi_adjoint() @ b.psi), s.points[i])


def test_local_correlation_identity(rng):
    s = random_system(rng, 4, 5, 2)
    assert wave_evaluation(s).local_correlation_residual() < 1e-13


def test_projector_is_idempotent_and_hermitian(rng):
    x = random_system(rng, 1, 5, 2).points[0]
    pi = projector(x)
    assert np.allclose(pi @ pi, pi)
    assert np.allclose(pi, pi.conj().T)
    assert np.trace(pi).real == pytest.approx(4.0)


def test_physical_wave_function_is_projection(rng):
    s = random_system(rng, 3, 4, 1)
    u = rng.normal(size=4) + 1j * rng.normal(size=4)
    bases = spin_bases(s)
    psi = physical_wave_function(s, u, bases)
    for b, v in zip(bases, psi.ambient(bases)):
        assert np.allclose(v, projector(s.points[b.index]) @ u)


@given(st.integers(0, 10_000), st.integers(1, 2))
def test_closed_chain_isospectral_to_point_product(seed, n):
    rng = np.random.default_rng(seed)
    s = random_system(rng, 3, 2 * n + 2, n)
    P = fermionic_kernel(s)
    for i in range(3):
        for j in range(3):
            assert isospectrality_check(s, i, j, P)["mismatch"] < 1e-10


@given(st.integers(0, 10_000))
def test_kernel_is_spin_symmetric(seed):
    s = random_system(np.random.default_rng(seed), 3, 4, 1)
    P = fermionic_kernel(s)
    assert P.symmetry_residual() < 1e-10


@given(st.integers(0, 10_000))
def test_spin_adjoint_is_an_involution(seed):
    rng = np.random.default_rng(seed)
    s = random_system(rng, 2, 4, 1)
    bx, by = spin_bases(s)
    A = rng.normal(size=(bx.dim, by.dim)) + 1j * rng.normal(size=(bx.dim, by.dim))
    back = spin_adjoint(spin_adjoint(A, bx, by), by, bx)
    assert np.allclose(back, A)
