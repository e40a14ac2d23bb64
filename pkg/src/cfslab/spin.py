"""Spin spaces, spin inner products, wave functions and the kernel P(x, y).

Coordinates: the spin space of ``x`` is ``range(x)`` with the orthonormal
eigenbasis ``E`` (columns, eigenvalues ``mu`` sorted descending).  In these
coordinates the spin inner product has Gram matrix ``-diag(mu)`` and the
positive spin scalar product has Gram matrix ``diag(|mu|)``.  The wave
evaluation operator is ``Psi(x) = E^H`` and its spin adjoint is
``Psi^H G``, so that ``x = -Psi* Psi``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import DiscreteSystem
from .tolerances import DEFAULT


class NotInSpinSpace(ValueError):
    pass


@dataclass(frozen=True)
class SpinBasis:
    index: int
    E: np.ndarray    # f x d, orthonormal columns spanning range(x)
    mu: np.ndarray   # d nonzero eigenvalues, descending

    @property
    def dim(self) -> int:
        return len(self.mu)

    @property
    def gram(self) -> np.ndarray:
        """Spin inner product in basis coordinates."""
        return -np.diag(self.mu)

    @property
    def scalar_gram(self) -> np.ndarray:
        return np.diag(np.abs(self.mu))

    @property
    def sign(self) -> np.ndarray:
        """Diagonal of the Euclidean sign operator (maps spin to scalar product)."""
        return -np.sign(self.mu)

    @property
    def psi(self) -> np.ndarray:
        """Wave evaluation operator H -> S_x in basis coordinates."""
        return self.E.conj().T

    def psi_adjoint(self) -> np.ndarray:
        return self.E * (-self.mu)[None, :]

    def ambient(self, coords: np.ndarray) -> np.ndarray:
        return self.E @ coords


def spin_basis(x: np.ndarray, index: int = 0, sigma: float = DEFAULT.sigma) -> SpinBasis:
    mu, V = np.linalg.eigh((x + x.conj().T) / 2)
    keep = np.abs(mu) > sigma * max(np.abs(mu).max(initial=0.0), 1e-300)
    order = np.argsort(-mu[keep], kind="stable")
    return SpinBasis(index, V[:, keep][:, order], mu[keep][order])


def spin_bases(system: DiscreteSystem) -> list[SpinBasis]:
    return [spin_basis(x, i, system.tol.sigma) for i, x in enumerate(system.points)]


def projector(x: np.ndarray, sigma: float = DEFAULT.sigma) -> np.ndarray:
    E = spin_basis(x, sigma=sigma).E
    return E @ E.conj().T


def spin_products(x, u, v, tol: float = 1e-10) -> dict:
    """Spin inner product and spin scalar product of ambient vectors in S_x."""
    x = np.asarray(x, dtype=complex)
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    pi = projector(x)
    for name, w in (("u", u), ("v", v)):
        if np.linalg.norm(pi @ w - w) > tol * max(np.linalg.norm(w), 1e-300):
            raise NotInSpinSpace(f"{name} is not in the spin space (residual {np.linalg.norm(pi @ w - w):.3e})")
    mu, V = np.linalg.eigh(x)
    absx = (V * np.abs(mu)) @ V.conj().T
    return {"spin_inner": complex(-(u.conj() @ x @ v)), "spin_scalar": complex(u.conj() @ absx @ v)}


def sign_operator(basis: SpinBasis) -> np.ndarray:
    """s_x with spin_inner(u, s v) = spin_scalar(u, v); equals -x |x|^{-1} on S_x."""
    return np.diag(basis.sign).astype(complex)


@dataclass(frozen=True)
class WaveFunction:
    """Per-point coordinates in the spin bases."""
    coords: tuple

    def ambient(self, bases: list[SpinBasis]) -> list[np.ndarray]:
        return [b.ambient(c) for b, c in zip(bases, self.coords)]

    def to_dict(self) -> dict:
        return {str(i): [[float(z.real), float(z.imag)] for z in c] for i, c in enumerate(self.coords)}

    def flat(self) -> np.ndarray:
        return np.concatenate(self.coords) if self.coords else np.zeros(0, complex)


def physical_wave_function(system: DiscreteSystem, u, bases=None) -> WaveFunction:
    """psi^u(x_i): orthogonal projection of u onto each spin space."""
    bases = bases or spin_bases(system)
    u = np.asarray(u, dtype=complex)
    return WaveFunction(tuple(b.psi @ u for b in bases))


@dataclass(frozen=True)
class WaveEvaluation:
    bases: tuple

    @property
    def psis(self) -> list[np.ndarray]:
        return [b.psi for b in self.bases]

    def local_correlation_residual(self) -> float:
        worst = 0.0
        for b in self.bases:
            x = b.E @ np.diag(b.mu) @ b.E.conj().T
            rec = -(b.psi_adjoint() @ b.psi)
            worst = max(worst, float(np.linalg.norm(x - rec) / max(np.linalg.norm(x), 1e-300)))
        return worst


def wave_evaluation(system: DiscreteSystem) -> WaveEvaluation:
    return WaveEvaluation(tuple(spin_bases(system)))


def spin_adjoint(A: np.ndarray, bx: SpinBasis, by: SpinBasis) -> np.ndarray:
    """Adjoint of A: S_y -> S_x with respect to the spin inner products."""
    return (A.conj().T * (-bx.mu)[None, :]) / (-by.mu)[:, None]


def kernel_block(bx: SpinBasis, by: SpinBasis) -> np.ndarray:
    """P(x, y) = -Psi(x) Psi(y)*  as a d_x by d_y matrix."""
    return (bx.E.conj().T @ by.E) * by.mu[None, :]


@dataclass(frozen=True)
class FermionicKernel:
    bases: tuple
    blocks: tuple  # blocks[i][j] = P(x_i, x_j)

    def __getitem__(self, ij):
        i, j = ij
        return self.blocks[i][j]

    def closed_chain(self, i, j) -> np.ndarray:
        return self.blocks[i][j] @ self.blocks[j][i]

    def symmetry_residual(self) -> float:
        worst = 0.0
        N = len(self.bases)
        for i in range(N):
            for j in range(N):
                P = self.blocks[i][j]
                if P.size == 0:
                    continue
                adj = spin_adjoint(self.blocks[j][i], self.bases[j], self.bases[i])
                scale = max(np.abs(P).max(), 1e-300)
                worst = max(worst, float(np.abs(P - adj).max() / scale))
        return worst


def fermionic_kernel(system: DiscreteSystem, bases=None) -> FermionicKernel:
    bases = tuple(bases or spin_bases(system))
    blocks = tuple(tuple(kernel_block(bx, by) for by in bases) for bx in bases)
    return FermionicKernel(bases, blocks)


def _nonzero_padded(ev: np.ndarray, n: int, cut: float) -> np.ndarray:
    ev = ev[np.argsort(-np.abs(ev), kind="stable")][: 2 * n]
    ev = np.where(np.abs(ev) > cut, ev, 0.0)
    return np.concatenate([ev, np.zeros(2 * n - len(ev))])


def isospectrality_check(system: DiscreteSystem, i: int, j: int, kernel: FermionicKernel | None = None) -> dict:
    """Compare the spectrum of x_i x_j with that of the closed chain P(x,y)P(y,x)."""
    kernel = kernel or fermionic_kernel(system)
    n = system.n
    x, y = system.points[i], system.points[j]
    cut = system.tol.sigma * np.linalg.norm(x, 2) * np.linalg.norm(y, 2)
    big = _nonzero_padded(np.linalg.eigvals(x @ y), n, cut)
    A = kernel.closed_chain(i, j)
    small = _nonzero_padded(np.linalg.eigvals(A) if A.size else np.zeros(0), n, cut)
    cost = np.abs(big[:, None] - small[None, :])
    r, c = linear_sum_assignment(cost)
    return {
        "pair": [i, j],
        "ambient": [[float(z.real), float(z.imag)] for z in big],
        "closed_chain": [[float(z.real), float(z.imag)] for z in small],
        "mismatch": float(cost[r, c].max()) if len(r) else 0.0,
    }
