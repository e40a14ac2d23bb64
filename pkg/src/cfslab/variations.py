"""Variations of closed-chain eigenvalues, the Q kernel and the second
variation of the effective action split into its three parts.

Conventions used throughout (``Phi_i`` is a ``d_i x f`` matrix, the variation of
the wave evaluation operator at point ``i``)::

    dP(x, y)  = -Phi_x Psi_y* - Psi_x Phi_y*          (first derivative)
    d2P(x, y) = -2 Phi_x Phi_y*                        (second derivative)
    dL        = 2 Re Tr(Q(x, y) dP(x, y)*)             (defines Q)

All second-order quantities are genuine second derivatives along the path
``tau -> Psi + tau Phi``; the Taylor coefficient is half of that.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DiscreteSystem, lagrangian_from_moduli, pair_lagrangians
from .spin import SpinBasis, fermionic_kernel, physical_wave_function, spin_adjoint, spin_bases
from .tolerances import DEFAULT


class DegenerateSpectrum(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# spectral helpers

def _eig_biorthogonal(A: np.ndarray):
    lam, V = np.linalg.eig(A)
    W = np.linalg.inv(V)  # rows are left eigenvectors with W V = 1
    return lam, V, W


def _spectral_gap_ok(lam: np.ndarray, degen: float) -> bool:
    if len(lam) < 2:
        return True
    scale = max(np.abs(lam).max(), 1e-300)
    d = np.abs(lam[:, None] - lam[None, :])
    np.fill_diagonal(d, np.inf)
    return bool(d.min() > degen * scale)


def _pad(v: np.ndarray, n: int) -> np.ndarray:
    return np.concatenate([v, np.zeros(2 * n - len(v), dtype=v.dtype)])


def _dL_da(a_pad: np.ndarray, n: int, kappa: float) -> np.ndarray:
    tot = a_pad.sum()
    return (2 * n * a_pad - tot) / n + 2 * kappa * tot


@dataclass(frozen=True)
class EigenPerturbation:
    lam0: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray
    projectors: np.ndarray
    order: int
    degenerate: bool


def eigen_perturbation(A0, dA, order: int = 2, degen: float = DEFAULT.degen) -> EigenPerturbation:
    """Taylor coefficients of the eigenvalues of ``A0 + eps dA``.

    Non-degenerate perturbation theory with left/right eigenvectors:
    ``lam1_k = Tr(Lam_k dA)`` and
    ``lam2_k = sum_{l != k} Tr(Lam_k dA Lam_l dA) / (lam_k - lam_l)``.
    """
    A0 = np.asarray(A0, dtype=complex)
    dA = np.asarray(dA, dtype=complex)
    lam, V, W = _eig_biorthogonal(A0)
    proj = np.einsum("ak,kb->kab", V, W)
    if not _spectral_gap_ok(lam, degen):
        z = np.zeros_like(lam)
        return EigenPerturbation(lam, z, z.copy(), proj, 0, True)
    Dt = W @ dA @ V  # matrix elements in the eigenbasis
    lam1 = np.diag(Dt).copy()
    lam2 = np.zeros_like(lam)
    if order >= 2:
        diff = lam[:, None] - lam[None, :]
        np.fill_diagonal(diff, np.inf)
        lam2 = (Dt * Dt.T / diff).sum(1)
    else:
        lam2 = np.zeros_like(lam)
    return EigenPerturbation(lam, lam1, lam2, proj, min(order, 2), False)


def abs_variation(lam: complex, dlam: complex, d2lam: complex, degen: float = DEFAULT.degen) -> dict:
    """First and second derivative of ``|lambda(tau)|`` from derivatives of lambda."""
    a = abs(lam)
    if a <= degen:
        raise DegenerateSpectrum("modulus is not differentiable at lambda = 0")
    ph = np.conj(lam) / a
    first = float((ph * dlam).real)
    convex = (abs(dlam) ** 2 - first**2) / a
    return {"first": first, "second": float((ph * d2lam).real + convex), "convexity": float(convex)}


# ---------------------------------------------------------------------------
# Q kernel

def _chain_lagrangian(P: np.ndarray, bx: SpinBasis, by: SpinBasis, n: int, kappa: float) -> float:
    A = P @ spin_adjoint(P, bx, by)
    lam = np.linalg.eigvals(A) if A.size else np.zeros(0, complex)
    return float(lagrangian_from_moduli(_pad(np.abs(lam), n), n, kappa))


def q_block_fd(bx: SpinBasis, by: SpinBasis, P: np.ndarray, n: int, kappa: float, rel_step: float = 1e-5) -> np.ndarray:
    """Reference Q(x, y) from Wirtinger finite differences of L in the entries of P."""
    h = rel_step * max(np.abs(P).max(initial=0.0), 1e-300)
    W = np.zeros(P.shape, dtype=complex)
    for a in range(P.shape[0]):
        for b in range(P.shape[1]):
            E = np.zeros(P.shape, dtype=complex)
            E[a, b] = h
            dre = (_chain_lagrangian(P + E, bx, by, n, kappa) - _chain_lagrangian(P - E, bx, by, n, kappa)) / (2 * h)
            dim = (_chain_lagrangian(P + 1j * E, bx, by, n, kappa) - _chain_lagrangian(P - 1j * E, bx, by, n, kappa)) / (2 * h)
            W[a, b] = 0.5 * (dre + 1j * dim)
    # 2 Re Tr(Q dP*) = 2 Re sum W conj(dP)  =>  Q = Gx^{-1} W Gy
    return (W * (-by.mu)[None, :]) / (-bx.mu)[:, None]


def q_block_fast(bx: SpinBasis, by: SpinBasis, P: np.ndarray, Pyx: np.ndarray, n: int, kappa: float,
                 degen: float = DEFAULT.degen):
    """Spectral formula ``Q = [sum_k c_k conj(lam_k)/|lam_k| Lam_k] P``.

    Returns ``(Q, ok)``; ``ok`` is False when the closed chain has a
    degenerate or vanishing eigenvalue, where the formula does not apply.
    """
    A = P @ Pyx
    if A.size == 0:
        return np.zeros(P.shape, dtype=complex), True
    lam, V, W = _eig_biorthogonal(A)
    a = np.abs(lam)
    scale = a.max(initial=0.0)
    if scale == 0:
        return np.zeros(P.shape, dtype=complex), True
    if not _spectral_gap_ok(lam, degen) or a.min() <= degen * scale:
        return None, False
    c = _dL_da(_pad(a, n), n, kappa)[: len(a)]
    M = (V * (c * np.conj(lam) / a)) @ W
    return M @ P, True


@dataclass
class QKernel:
    """Blocks ``Q[i][j]: S_j -> S_i``.

    ``source`` is ``"lagrangian"`` for kernels derived from the causal
    Lagrangian and ``"model"`` for synthetic kernels used by the lattice
    model of the wave solver.
    """

    bases: list
    blocks: list
    source: str = "lagrangian"
    fd_pairs: list = field(default_factory=list)
    agreement: float | None = None

    def __getitem__(self, ij):
        i, j = ij
        return self.blocks[i][j]

    @property
    def N(self) -> int:
        return len(self.blocks)

    def symmetry_residual(self) -> float:
        worst, scale = 0.0, 1e-300
        for i in range(self.N):
            for j in range(self.N):
                Q = self.blocks[i][j]
                if Q.size:
                    scale = max(scale, np.abs(Q).max())
                    adj = spin_adjoint(self.blocks[j][i], self.bases[j], self.bases[i])
                    worst = max(worst, float(np.abs(Q - adj).max()))
        return worst / scale

    def apply(self, weights: np.ndarray, psi: list) -> list:
        """(Q psi)_i = sum_j rho_j Q(x_i, x_j) psi_j for spin-coordinate arrays."""
        out = []
        for i in range(self.N):
            acc = np.zeros((self.bases[i].dim,) + np.shape(psi[0])[1:], dtype=complex)
            for j in range(self.N):
                if self.blocks[i][j].size:
                    acc = acc + weights[j] * (self.blocks[i][j] @ psi[j])
            out.append(acc)
        return out


def q_kernel(system: DiscreteSystem, method: str = "fast", bases=None) -> QKernel:
    """Q kernel of all pairs; ``method`` is "fast", "fd" or "both".

    The fast path falls back to the finite-difference oracle for pairs with a
    degenerate closed-chain spectrum and records them in ``fd_pairs``.  With
    ``both`` the maximal relative disagreement over non-degenerate pairs is
    stored in ``agreement``.
    """
    if method not in ("fast", "fd", "both"):
        raise ValueError(f"unknown method {method!r}")
    bases = list(bases or spin_bases(system))
    K = fermionic_kernel(system, bases)
    n, kappa, degen = system.n, system.kappa, system.tol.degen
    N = len(bases)
    blocks = [[None] * N for _ in range(N)]
    fd_pairs, worst = [], 0.0
    for i in range(N):
        for j in range(i, N):
            P, Pyx = K[i, j], K[j, i]
            Qf, ok = (None, False)
            if method in ("fast", "both"):
                Qf, ok = q_block_fast(bases[i], bases[j], P, Pyx, n, kappa, degen)
            if method == "fd" or not ok:
                Q = q_block_fd(bases[i], bases[j], P, n, kappa, system.tol.fd)
                if method != "fd":
                    fd_pairs.append((i, j))
            else:
                Q = Qf
            if method == "both" and ok and P.size:
                Qd = q_block_fd(bases[i], bases[j], P, n, kappa, system.tol.fd)
                scale = max(np.abs(Qd).max(), np.abs(Qf).max(), 1e-300)
                worst = max(worst, float(np.abs(Qd - Qf).max() / scale))
            if i == j:
                Q = (Q + spin_adjoint(Q, bases[i], bases[i])) / 2
                blocks[i][i] = Q
            else:
                blocks[i][j] = Q
                blocks[j][i] = spin_adjoint(Q, bases[i], bases[j])
    return QKernel(bases, blocks, "lagrangian", fd_pairs, worst if method == "both" else None)


def lagrangian_gradient_x(x, y, n: int, kappa: float, rel_step: float = 1e-5,
                          sigma: float = DEFAULT.sigma) -> np.ndarray:
    """Hermitian D1 with d/dt L(x + t H, y) = tr(H D1), by central differences."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    f = x.shape[0]
    h = rel_step * max(np.linalg.norm(x, 2), 1e-300)
    basis = []
    for k in range(f):
        e = np.zeros((f, f), complex)
        e[k, k] = 1
        basis.append(e)
    for k in range(f):
        for l in range(k + 1, f):
            e = np.zeros((f, f), complex)
            e[k, l] = e[l, k] = 1 / np.sqrt(2)
            basis.append(e)
            e = np.zeros((f, f), complex)
            e[k, l], e[l, k] = 1j / np.sqrt(2), -1j / np.sqrt(2)
            basis.append(e)
    stack = np.array([x + h * b for b in basis] + [x - h * b for b in basis])
    ys = np.broadcast_to(y, stack.shape)
    vals = _lagrangians_of_pairs(stack, ys, n, kappa, sigma)
    m = len(basis)
    coef = (vals[:m] - vals[m:]) / (2 * h)
    D1 = np.einsum("b,bij->ij", coef, np.array(basis))
    return (D1 + D1.conj().T) / 2


def _lagrangians_of_pairs(xs, ys, n, kappa, sigma):
    ev = np.linalg.eigvals(np.einsum("kab,kbc->kac", xs, ys))
    ev = np.take_along_axis(ev, np.argsort(-np.abs(ev), axis=-1), axis=-1)[:, : 2 * n]
    cut = sigma * np.linalg.norm(xs, 2, axis=(1, 2)) * np.linalg.norm(ys, 2, axis=(1, 2))
    a = np.where(np.abs(ev) > cut[:, None], np.abs(ev), 0.0)
    if a.shape[-1] < 2 * n:
        a = np.concatenate([a, np.zeros((a.shape[0], 2 * n - a.shape[-1]))], axis=-1)
    return lagrangian_from_moduli(a, n, kappa)


def restricted_el_residual(system: DiscreteSystem, vectors, qk: QKernel | None = None) -> list[float]:
    """max_i of the spin-scalar norm of (Q psi^u - r psi^u)(x_i) for each u."""
    qk = qk or q_kernel(system)
    out = []
    for u in vectors:
        psi = list(physical_wave_function(system, u, qk.bases).coords)
        Qpsi = qk.apply(system.weights, psi)
        worst = 0.0
        for b, q, p in zip(qk.bases, Qpsi, psi):
            res = q - system.r * p
            worst = max(worst, float(np.sqrt(max((res.conj() * np.abs(b.mu) * res).sum().real, 0.0))))
        out.append(worst)
    return out


# ---------------------------------------------------------------------------
# second variation of one pair

@dataclass(frozen=True)
class PairTerms:
    lfe: float
    q: float
    remainder: float
    degenerate: bool = False

    @property
    def total(self) -> float:
        return self.lfe + self.q + self.remainder


def second_variation_pair(P, Pyx, dP, dPyx, d2P, d2Pyx, n: int, kappa: float,
                          degen: float = DEFAULT.degen) -> PairTerms:
    """Split d^2 L(x, y) along a quadratic path of P into lfe + q + remainder.

    ``lfe`` is the Hessian of L in the eigenvalue moduli applied to their first
    variations (nonnegative), ``q`` collects the terms linear in the second
    variation of P (this is ``2 Re Tr(Q d2P*)``), and the remainder holds the
    quadratic cross terms of the eigenvalue perturbation series together with
    the convexity correction of the modulus.
    """
    A = P @ Pyx
    d = A.shape[0]
    if d == 0:
        return PairTerms(0.0, 0.0, 0.0)
    lam, V, W = _eig_biorthogonal(A)
    a = np.abs(lam)
    scale = a.max(initial=0.0)
    if scale == 0:
        return PairTerms(0.0, 0.0, 0.0)
    if not _spectral_gap_ok(lam, degen) or a.min() <= degen * scale:
        return _second_variation_pair_fd(P, Pyx, dP, dPyx, d2P, d2Pyx, n, kappa)
    A1 = dP @ Pyx + P @ dPyx
    A2lin = d2P @ Pyx + P @ d2Pyx
    A2quad = 2 * dP @ dPyx
    T1 = W @ A1 @ V
    lam1 = np.diag(T1)
    diff = lam[:, None] - lam[None, :]
    np.fill_diagonal(diff, np.inf)
    cross = 2 * (T1 * T1.T / diff).sum(1)
    ph = np.conj(lam) / a
    da = (ph * lam1).real
    c = _dL_da(_pad(a, n), n, kappa)[:d]
    dap = _pad(da, n)
    lfe = float(((dap[:, None] - dap[None, :]) ** 2).sum() / (2 * n) + 2 * kappa * dap.sum() ** 2)
    lin = np.einsum("kk->k", W @ A2lin @ V)
    quad = np.einsum("kk->k", W @ A2quad @ V)
    q = float((c * (ph * lin).real).sum())
    rem = float((c * ((ph * (quad + cross)).real + (np.abs(lam1) ** 2 - da**2) / a)).sum())
    return PairTerms(lfe, q, rem)


def _second_variation_pair_fd(P, Pyx, dP, dPyx, d2P, d2Pyx, n, kappa, rel_step=1e-4) -> PairTerms:
    """Fallback at degenerate spectra: finite differences of the sorted moduli."""
    def moduli(tau):
        Pt = P + tau * dP + 0.5 * tau**2 * d2P
        Qt = Pyx + tau * dPyx + 0.5 * tau**2 * d2Pyx
        return _pad(np.sort(np.abs(np.linalg.eigvals(Pt @ Qt)))[::-1], n)

    scale = max(np.abs(P).max(), 1e-300) / max(np.abs(dP).max(), np.sqrt(np.abs(d2P).max()), 1e-300)
    h = rel_step * scale
    da = (moduli(h) - moduli(-h)) / (2 * h)
    lfe = float(((da[:, None] - da[None, :]) ** 2).sum() / (2 * n) + 2 * kappa * da.sum() ** 2)
    Lh = [lagrangian_from_moduli(moduli(k * h), n, kappa) for k in (-2, -1, 0, 1, 2)]
    total = (-Lh[0] + 16 * Lh[1] - 30 * Lh[2] + 16 * Lh[3] - Lh[4]) / (12 * h * h)
    # linear response to d2P through the first-order formula at a shifted path
    def lin_mod(tau):
        Pt, Qt = P + tau * d2P, Pyx + tau * d2Pyx
        return lagrangian_from_moduli(_pad(np.abs(np.linalg.eigvals(Pt @ Qt)), n), n, kappa)
    q = float((lin_mod(h) - lin_mod(-h)) / (2 * h))
    return PairTerms(lfe, q, float(total - lfe - q), degenerate=True)


# ---------------------------------------------------------------------------
# second variation of the action

@dataclass
class SecondVariationReport:
    lfe_term: float
    q_term: float
    remainder: float
    fd_total: float | None
    pairs: list
    local: list
    degenerate_pairs: list
    scale: float
    q_pair_check: float

    @property
    def total(self) -> float:
        return self.lfe_term + self.q_term + self.remainder

    @property
    def relative_error(self) -> float | None:
        if self.fd_total is None:
            return None
        return abs(self.total - self.fd_total) / max(self.scale, 1e-300)

    def margins(self) -> dict:
        s = max(self.scale, 1e-300)
        return {"lfe": self.lfe_term / s, "q": self.q_term / s}

    def to_dict(self) -> dict:
        return {
            "lfe_term": self.lfe_term,
            "q_term": self.q_term,
            "remainder": self.remainder,
            "total": self.total,
            "fd_total": self.fd_total,
            "relative_error": self.relative_error,
            "scale": self.scale,
            "margins": self.margins(),
            "degenerate_pairs": [list(p) for p in self.degenerate_pairs],
            "q_pair_check": self.q_pair_check,
        }

    def csv_rows(self) -> tuple[list[str], list[list]]:
        header = ["i", "j", "lfe", "q", "remainder", "total"]
        rows = [[p["i"], p["j"], p["lfe"], p["q"], p["remainder"], p["lfe"] + p["q"] + p["remainder"]]
                for p in self.pairs]
        rows.append(["total", "", self.lfe_term, self.q_term, self.remainder, self.total])
        return header, rows


def variation_kernels(bases, Phi):
    """dP and d2P for all pairs induced by the variation Phi."""
    N = len(bases)
    psi = [b.psi for b in bases]
    psi_adj = [b.psi_adjoint() for b in bases]
    phi_adj = [Phi[j].conj().T * (-bases[j].mu)[None, :] for j in range(N)]
    dP = [[-Phi[i] @ psi_adj[j] - psi[i] @ phi_adj[j] for j in range(N)] for i in range(N)]
    d2P = [[-2 * Phi[i] @ phi_adj[j] for j in range(N)] for i in range(N)]
    return dP, d2P


def pair_tables(system: DiscreteSystem, Phi, bases=None):
    bases = list(bases or spin_bases(system))
    K = fermionic_kernel(system, bases)
    dP, d2P = variation_kernels(bases, Phi)
    N = len(bases)
    table = {}
    for i in range(N):
        for j in range(N):
            table[i, j] = second_variation_pair(K[i, j], K[j, i], dP[i][j], dP[j][i], d2P[i][j], d2P[j][i],
                                                system.n, system.kappa, system.tol.degen)
    return table


def _local_terms(system, bases, Phi):
    # contribution of -2 r sum rho tr(x): its second derivative is 4 r tr(Phi* Phi)
    return [4 * system.r * float(np.einsum("ab,a,ab->", Phi[i].conj(), -bases[i].mu, Phi[i]).real)
            for i in range(len(bases))]


def effective_action_path(system: DiscreteSystem, Phi, tau: float, bases=None) -> float:
    """S_eff along Psi + tau Phi, evaluated from ambient f x f operators."""
    bases = list(bases or spin_bases(system))
    pts = []
    for b, F in zip(bases, Phi):
        M = b.psi + tau * F
        pts.append(-(M.conj().T * (-b.mu)[None, :]) @ M)
    pts = np.array(pts)
    L = pair_lagrangians(pts, system.n, system.kappa, system.tol.sigma)
    w = system.weights
    return float(w @ L @ w - 2 * system.r * (w @ np.trace(pts, axis1=1, axis2=2).real))


def fd_second_derivative(fun, h: float) -> float:
    v = [fun(k * h) for k in (-2, -1, 0, 1, 2)]
    return (-v[0] + 16 * v[1] - 30 * v[2] + 16 * v[3] - v[4]) / (12 * h * h)


def fd_second_derivative6(fun, h: float) -> float:
    """Sixth-order central stencil; allows a larger step and hence less roundoff."""
    c = (2, -27, 270, -490, 270, -27, 2)
    return sum(ck * fun(k * h) for ck, k in zip(c, range(-3, 4))) / (180 * h * h)


def _fd_step(bases, Phi, rel=1e-3) -> float:
    nphi = max(max(np.linalg.norm(F) for F in Phi), 1e-300)
    npsi = max(np.linalg.norm(b.psi) for b in bases)
    return rel * npsi / nphi


def second_variation_action(system: DiscreteSystem, Phi, qk: QKernel | None = None, fd: bool = True,
                            bases=None) -> SecondVariationReport:
    """Second variation of S_eff along ``Psi + tau Phi`` and its decomposition."""
    bases = list(bases or (qk.bases if qk else spin_bases(system)))
    Phi = [np.asarray(F, dtype=complex) for F in Phi]
    qk = qk or q_kernel(system, bases=bases)
    w = system.weights
    table = pair_tables(system, Phi, bases)
    N = len(bases)
    lfe = sum(w[i] * w[j] * t.lfe for (i, j), t in table.items())
    rem = sum(w[i] * w[j] * t.remainder for (i, j), t in table.items())
    qpairs = sum(w[i] * w[j] * t.q for (i, j), t in table.items())
    local = _local_terms(system, bases, Phi)
    # wave-level form: -4 sum rho Re tr(Phi* ((Q - r) Phi))
    QPhi = qk.apply(w, Phi)
    qform = 0.0
    for i in range(N):
        inner = np.einsum("ab,a,ab->", Phi[i].conj(), -bases[i].mu, QPhi[i] - system.r * Phi[i])
        qform += -4 * w[i] * inner.real
    q_term = float(qform)
    q_check = abs(q_term - (qpairs + float(np.dot(w, local))))
    fd_total = None
    if fd:
        if all(np.abs(F).max(initial=0.0) == 0 for F in Phi):
            fd_total = 0.0
        else:
            h = _fd_step(bases, Phi)
            fd_total = fd_second_derivative(lambda t: effective_action_path(system, Phi, t, bases), h)
    pairs = [{"i": i, "j": j, "lfe": t.lfe, "q": t.q, "remainder": t.remainder, "degenerate": t.degenerate}
             for (i, j), t in sorted(table.items())]
    degenerate = [(i, j) for (i, j), t in sorted(table.items()) if t.degenerate]
    scale = abs(lfe) + abs(q_term) + abs(rem)
    return SecondVariationReport(float(lfe), q_term, float(rem), fd_total, pairs, local, degenerate,
                                 scale, float(q_check))


def random_variation(system: DiscreteSystem, rng: np.random.Generator, bases=None) -> list:
    bases = list(bases or spin_bases(system))
    return [rng.normal(size=(b.dim, system.f)) + 1j * rng.normal(size=(b.dim, system.f)) for b in bases]


def phase_variation(system: DiscreteSystem, bases=None) -> list:
    """Phi = i Psi: the global phase direction, for which dP vanishes identically."""
    bases = list(bases or spin_bases(system))
    return [1j * b.psi for b in bases]


# ---------------------------------------------------------------------------
# separated supports

@dataclass(frozen=True)
class SeparatedSupportResult:
    first_analytic: float
    first_fd: float
    second_fd_half: float
    predicted: float
    relative_error: float


def separated_support_check(system: DiscreteSystem, i: int, j: int, phi_i, phi_j,
                            qk: QKernel | None = None) -> SeparatedSupportResult:
    """Vary the pair (x_i, x_j) in a direction that leaves P(x, y) fixed to first order.

    The Hilbert space is enlarged by one dimension spanned by ``u``; the
    variation ``Phi = phi (x) <u|`` then has ``dP = 0`` identically while
    ``d2P = -2 |phi_i><phi_j|``.  Half the second derivative of L is compared
    with ``-2 Re <phi_i | Q(x_i, x_j) phi_j>``.
    """
    qk = qk or q_kernel(system)
    bx, by = qk.bases[i], qk.bases[j]
    f = system.f
    n, kappa = system.n, system.kappa
    phi_i = np.asarray(phi_i, dtype=complex)
    phi_j = np.asarray(phi_j, dtype=complex)

    def extend(b):
        return np.hstack([b.psi, np.zeros((b.dim, 1))])

    u = np.zeros(f + 1)
    u[f] = 1.0
    Fx, Fy = np.outer(phi_i, u), np.outer(phi_j, u)
    Px, Py = extend(bx), extend(by)

    def point(M, b):
        return -(M.conj().T * (-b.mu)[None, :]) @ M

    def L(tau):
        x = point(Px + tau * Fx, bx)
        y = point(Py + tau * Fy, by)
        return float(_lagrangians_of_pairs(x[None], y[None], n, kappa, system.tol.sigma)[0])

    # analytic first variation: dP(x, y) from the enlarged operators
    adj = lambda M, b: M.conj().T * (-b.mu)[None, :]  # noqa: E731
    dP = -Fx @ adj(Py, by) - Px @ adj(Fy, by)
    first = float(2 * np.einsum("ab,ba->", qk[i, j], spin_adjoint(dP, bx, by)).real)
    scale = max(np.linalg.norm(Px), np.linalg.norm(Py)) / max(np.linalg.norm(Fx), np.linalg.norm(Fy), 1e-300)
    h1 = 1e-5 * scale
    first_fd = (L(h1) - L(-h1)) / (2 * h1)
    half_second = 0.5 * fd_second_derivative6(L, 1e-2 * scale)
    inner = phi_i.conj() @ (-bx.mu * (qk[i, j] @ phi_j))
    pred = float(-2 * inner.real)
    err = abs(half_second - pred) / max(abs(pred), 1e-300)
    return SeparatedSupportResult(first, float(first_fd), float(half_second), pred, float(err))


# ---------------------------------------------------------------------------
# decoupling diagnostics

def _flatten(Phi):
    z = np.concatenate([F.ravel() for F in Phi])
    return np.concatenate([z.real, z.imag])


def _unflatten(v, bases, f):
    m = len(v) // 2
    z = v[:m] + 1j * v[m:]
    out, k = [], 0
    for b in bases:
        out.append(z[k: k + b.dim * f].reshape(b.dim, f))
        k += b.dim * f
    return out


def total_form(system: DiscreteSystem, Phi, qk: QKernel) -> float:
    return second_variation_action(system, Phi, qk, fd=False).total


def hessian_of_total(system: DiscreteSystem, qk: QKernel) -> np.ndarray:
    """Real symmetric matrix of the total second variation (a quadratic form in Phi)."""
    bases = qk.bases
    f = system.f
    m = 2 * f * sum(b.dim for b in bases)
    diag = np.empty(m)
    basis = np.eye(m)
    for a in range(m):
        diag[a] = total_form(system, _unflatten(basis[a], bases, f), qk)
    H = np.diag(diag)
    for a in range(m):
        for b in range(a + 1, m):
            v = total_form(system, _unflatten(basis[a] + basis[b], bases, f), qk)
            H[a, b] = H[b, a] = 0.5 * (v - diag[a] - diag[b])
    return H


def kernel_direction(system: DiscreteSystem, qk: QKernel | None = None):
    """Variation in the numerical kernel of the total quadratic form."""
    qk = qk or q_kernel(system)
    H = hessian_of_total(system, qk)
    ev, V = np.linalg.eigh(H)
    k = int(np.argmin(np.abs(ev)))
    return _unflatten(V[:, k], qk.bases, system.f), float(ev[k]), float(np.abs(ev).max())


@dataclass
class DecouplingReport:
    strips: list
    slices: list
    scale: float
    slack: float

    @property
    def holds(self) -> bool:
        return all(r["margin_lfe"] >= -self.slack and r["margin_q"] >= -self.slack for r in self.strips)

    def to_dict(self) -> dict:
        return {"strips": self.strips, "slices": self.slices, "scale": self.scale,
                "slack": self.slack, "holds": self.holds}


def decoupling_report(system: DiscreteSystem, Phi, strips, qk: QKernel | None = None,
                      slack_rel: float | None = None) -> DecouplingReport:
    """Strip-restricted second-variation integrals and the two inequality margins.

    For a strip ``Omega`` write ``a = chi_Omega Phi`` and ``b = Phi - a``.  The
    strip integrals of lfe, the Q-form and R sum to ``F(a)``, and
    ``F(a) = -B(a, b) + B(Phi, a)`` with the cross bilinear form ``B``.  The
    boundary coupling ``|B(a, b)|`` and the linearized-equation residual
    ``|B(Phi, a)|`` enter the margins alongside ``|R|``.
    """
    qk = qk or q_kernel(system)
    bases = qk.bases
    w = system.weights
    Phi = [np.asarray(F, dtype=complex) for F in Phi]
    table = pair_tables(system, Phi, bases)
    local = _local_terms(system, bases, Phi)
    QPhi = qk.apply(w, Phi)
    trloc = [float(np.einsum("ab,a,ab->", Phi[i].conj(), -bases[i].mu, QPhi[i] - system.r * Phi[i]).real)
             for i in range(len(bases))]
    full = second_variation_action(system, Phi, qk, fd=False)
    scale = max(full.scale, 1e-300)
    slack = (slack_rel if slack_rel is not None else system.tol.pos) * scale
    N = len(bases)
    times = system.times

    def F(mask):
        sub = [Phi[i] if mask[i] else np.zeros_like(Phi[i]) for i in range(N)]
        return second_variation_action(system, sub, qk, fd=False).total

    Fv = full.total
    rows = []
    for (t0, t1) in strips:
        mask = (times >= t0) & (times <= t1)
        idx = np.flatnonzero(mask)
        if len(idx) == 0:
            rows.append({"interval": [float(t0), float(t1)], "members": [], "lfe": 0.0, "q_form": 0.0,
                         "remainder": 0.0, "boundary": 0.0, "residual": 0.0,
                         "margin_lfe": 0.0, "margin_q": 0.0})
            continue
        lfe = sum(w[i] * w[j] * table[i, j].lfe for i in idx for j in idx)
        rem = sum(w[i] * w[j] * table[i, j].remainder for i in idx for j in idx)
        # tr(dPsi* (Q - r) dPsi) restricted to the strip in both arguments
        qf = 0.0
        for i in idx:
            acc = sum(w[j] * (qk[i, j] @ Phi[j]) for j in idx) - system.r * Phi[i]
            qf += w[i] * float(np.einsum("ab,a,ab->", Phi[i].conj(), -bases[i].mu, acc).real)
        Fa = F(mask)
        Fb = F(~mask)
        cross = 0.5 * (Fv - Fa - Fb)     # B(a, b)
        resid = Fa + cross               # B(Phi, a)
        err = abs(rem) + abs(cross) + abs(resid)
        rows.append({
            "interval": [float(t0), float(t1)],
            "members": [int(i) for i in idx],
            "lfe": float(abs(lfe)),
            "q_form": float(abs(qf)),
            "remainder": float(abs(rem)),
            "boundary": float(abs(cross)),
            "residual": float(abs(resid)),
            "margin_lfe": float(err - abs(lfe)),
            "margin_q": float(err / 4 - abs(qf)),
        })
    slices = []
    for t in np.unique(times):
        idx = np.flatnonzero(times == t)
        lfe = sum(w[i] * w[j] * table[i, j].lfe for i in idx for j in range(N))
        rem = sum(w[i] * w[j] * table[i, j].remainder for i in idx for j in range(N))
        tot = sum(w[i] * w[j] * table[i, j].total for i in idx for j in range(N)) + sum(w[i] * local[i] for i in idx)
        qf = sum(w[i] * trloc[i] for i in idx)
        slices.append({"time": float(t), "lfe": float(abs(lfe)), "q_form": float(abs(qf)),
                       "remainder": float(abs(rem)), "slice_total": float(tot),
                       "margin_lfe": float(abs(rem) + abs(tot) - abs(lfe)),
                       "margin_q": float((abs(rem) + abs(tot)) / 4 - abs(qf))})
    return DecouplingReport(rows, slices, float(scale), float(slack))
