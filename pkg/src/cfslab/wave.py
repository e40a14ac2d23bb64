"""Time strips, the strip operator of the dynamical wave equation, the
commutator inner product and the extended Hilbert space.

Wave functions on a strip are flat complex vectors concatenating the spin
coordinates of the member points.  The wave equation is posed at wave level,
``(Q - r) psi = phi`` with ``((Q - r) psi)_i = sum_j rho_j Q_ij psi_j - r psi_i``.
This operator is symmetric for the spin inner product; composing with the
Euclidean sign operator gives ``s (Q - r)``, which is symmetric for the strip
scalar product ``<psi|phi>_Omega = sum_i rho_i <<psi_i|phi_i>>``.  Spectra,
norms and pseudo-inverses are taken from that representative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import DiscreteSystem
from .spin import SpinBasis, physical_wave_function, spin_bases
from .tolerances import DEFAULT, Tolerances
from .variations import QKernel, lagrangian_gradient_x, second_variation_action


class InadmissibleInhomogeneity(ValueError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class SupportError(ValueError):
    pass


class StripSymmetryError(RuntimeError):
    pass


class IndefiniteGram(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# strips

@dataclass(frozen=True)
class TimeStrip:
    t0: float
    t_min: float
    t_max: float
    t1: float
    delta: float = 0.0

    def __post_init__(self):
        if not (self.t0 < self.t_min < self.t_max < self.t1):
            raise ValueError("strip markers must satisfy t0 < t_min < t_max < t1")
        if self.delta < 0:
            raise ValueError("range parameter must be nonnegative")
        if not (self.t1 - self.t_max > 2 * self.delta and self.t_min - self.t0 > 2 * self.delta):
            raise ValueError("boundary strips must be wider than twice the range parameter")

    def members(self, times) -> np.ndarray:
        t = np.asarray(times)
        return np.flatnonzero((t >= self.t0) & (t <= self.t1))

    def to_dict(self) -> dict:
        return {"t0": self.t0, "t_min": self.t_min, "t_max": self.t_max, "t1": self.t1, "delta": self.delta}


def block_norm(Q: np.ndarray, bx: SpinBasis, by: SpinBasis) -> float:
    """Operator norm of Q: S_y -> S_x for the spin scalar products."""
    if Q.size == 0:
        return 0.0
    M = np.sqrt(np.abs(bx.mu))[:, None] * Q / np.sqrt(np.abs(by.mu))[None, :]
    return float(np.linalg.norm(M, 2))


def windowed_kernel(qk: QKernel, times, delta: float) -> QKernel:
    """Hard time window: blocks with |t_i - t_j| > delta are set to zero."""
    t = np.asarray(times)
    blocks = [[qk[i, j] if abs(t[i] - t[j]) <= delta else np.zeros_like(qk[i, j])
               for j in range(qk.N)] for i in range(qk.N)]
    return QKernel(qk.bases, blocks, qk.source, list(qk.fd_pairs), qk.agreement)


def kernel_hygiene(system: DiscreteSystem, qk: QKernel, delta: float, c: float) -> dict:
    """L1 boundedness with constant c and finite time range delta."""
    w, t = system.weights, system.times
    rows = [sum(w[j] * block_norm(qk[i, j], qk.bases[i], qk.bases[j]) for j in range(qk.N))
            for i in range(qk.N)]
    tol = system.tol.range_tol
    far = [(i, j) for i in range(qk.N) for j in range(qk.N)
           if abs(t[i] - t[j]) > delta and block_norm(qk[i, j], qk.bases[i], qk.bases[j]) > tol]
    bad = [i for i, v in enumerate(rows) if not v < c]
    return {
        "c": float(c),
        "sup_row_norm": float(max(rows, default=0.0)),
        "bounded": not bad,
        "violating_indices": bad,
        "delta": float(delta),
        "finite_range": not far,
        "range_violations": [list(p) for p in far],
        "passed": not bad and not far,
    }


# ---------------------------------------------------------------------------
# strip operator

class StripOperator:
    """The operator (Q - r) on the strip space of a set of member points."""

    def __init__(self, system: DiscreteSystem, qk: QKernel, members: Sequence[int], r: float | None = None,
                 tol: Tolerances | None = None, strip: TimeStrip | None = None):
        self.system = system
        self.qk = qk
        self.tol = tol or system.tol
        self.strip = strip
        self.idx = np.asarray(members, dtype=int)
        self.r = system.r if r is None else float(r)
        self.bases = [qk.bases[i] for i in self.idx]
        dims = [b.dim for b in self.bases]
        self.offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)
        D = int(self.offsets[-1])
        self.dim = D
        w = system.weights
        M = np.zeros((D, D), dtype=complex)
        for a, i in enumerate(self.idx):
            sa = slice(self.offsets[a], self.offsets[a + 1])
            for b, j in enumerate(self.idx):
                sb = slice(self.offsets[b], self.offsets[b + 1])
                if qk[i, j].size:
                    M[sa, sb] = w[j] * qk[i, j]
            M[sa, sa] -= self.r * np.eye(dims[a])
        self.M = M
        self.sign = np.concatenate([b.sign for b in self.bases]) if D else np.zeros(0)
        self.gram = np.concatenate([w[i] * np.abs(b.mu) for i, b in zip(self.idx, self.bases)]) if D else np.zeros(0)
        self.spin_gram = np.concatenate([w[i] * (-b.mu) for i, b in zip(self.idx, self.bases)]) if D else np.zeros(0)
        self.times = np.concatenate([np.full(b.dim, system.times[i]) for i, b in zip(self.idx, self.bases)]) \
            if D else np.zeros(0)
        sq = np.sqrt(self.gram)
        Hm = sq[:, None] * (self.sign[:, None] * M) / sq[None, :] if D else np.zeros((0, 0))
        nrm = np.abs(Hm).max(initial=0.0)
        self.symmetry_residual = float(np.abs(Hm - Hm.conj().T).max(initial=0.0) / max(nrm, 1e-300))
        if self.symmetry_residual > 1e-10:
            raise StripSymmetryError(f"strip operator is not symmetric (residual {self.symmetry_residual:.3e})")
        self.H = (Hm + Hm.conj().T) / 2
        self.evals, self.evecs = np.linalg.eigh(self.H) if D else (np.zeros(0), np.zeros((0, 0)))
        self.norm = float(np.abs(self.evals).max(initial=0.0))
        # Schur-test bound from the L1 row norms of the kernel
        rows = [sum(w[j] * block_norm(qk[i, j], qk.bases[i], qk.bases[j]) for j in self.idx) for i in self.idx]
        self.bound = float(max(rows, default=0.0) + abs(self.r))
        if self.norm > self.bound * (1 + 1e-6) + 1e-14:
            raise StripSymmetryError("spectral norm exceeds the Schur-test bound")
        self._cut = self.tol.rank * max(self.norm, 1e-300)

    # vectors -------------------------------------------------------------
    def block(self, v: np.ndarray, a: int) -> np.ndarray:
        return v[self.offsets[a]: self.offsets[a + 1]]

    def from_points(self, coords: Sequence[np.ndarray]) -> np.ndarray:
        """Flatten per-point spin coordinates (indexed by system point) onto the strip."""
        return np.concatenate([np.asarray(coords[i], dtype=complex) for i in self.idx]) if self.dim else \
            np.zeros(0, complex)

    def to_points(self, v: np.ndarray) -> list:
        out = [np.zeros(b.dim, dtype=complex) for b in self.qk.bases]
        for a, i in enumerate(self.idx):
            out[i] = self.block(v, a).copy()
        return out

    def mask(self, lo: float = -np.inf, hi: float = np.inf, open_: bool = False) -> np.ndarray:
        if open_:
            return (self.times > lo) & (self.times < hi)
        return (self.times >= lo) & (self.times <= hi)

    def inner(self, a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> complex:
        g = self.gram if mask is None else self.gram * mask
        return complex(np.vdot(a, g * b))

    def spin_inner(self, a, b, mask=None) -> complex:
        g = self.spin_gram if mask is None else self.spin_gram * mask
        return complex(np.vdot(a, g * b))

    def omega_norm(self, v, mask=None) -> float:
        return math.sqrt(max(self.inner(v, v, mask).real, 0.0))

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.M @ v

    def symmetric_apply(self, v: np.ndarray) -> np.ndarray:
        return self.sign * (self.M @ v)

    # spectral data --------------------------------------------------------
    def kernel_basis(self) -> np.ndarray:
        """Columns spanning the numerical kernel (ambient strip coordinates)."""
        keep = np.abs(self.evals) <= self._cut
        return self.evecs[:, keep] / np.sqrt(self.gram)[:, None]

    @property
    def rank(self) -> int:
        return int((np.abs(self.evals) > self._cut).sum())

    def range_defect(self, phi: np.ndarray) -> float:
        """Relative Omega-norm of the part of phi outside the range of (Q - r)."""
        y = np.sqrt(self.gram) * (self.sign * phi)
        keep = np.abs(self.evals) <= self._cut
        comp = self.evecs[:, keep].conj().T @ y
        return float(np.linalg.norm(comp) / max(np.linalg.norm(y), 1e-300))

    def pinv_apply(self, phi: np.ndarray) -> np.ndarray:
        y = np.sqrt(self.gram) * (self.sign * phi)
        keep = np.abs(self.evals) > self._cut
        coef = (self.evecs[:, keep].conj().T @ y) / self.evals[keep]
        return (self.evecs[:, keep] @ coef) / np.sqrt(self.gram)

    def report(self) -> dict:
        return {
            "dimension": self.dim,
            "members": [int(i) for i in self.idx],
            "r": self.r,
            "norm": self.norm,
            "schur_bound": self.bound,
            "symmetry_residual": self.symmetry_residual,
            "rank": self.rank,
            "min_eig": float(self.evals.min()) if self.dim else 0.0,
            "max_eig": float(self.evals.max()) if self.dim else 0.0,
        }


def assemble_strip_operator(system: DiscreteSystem, qk: QKernel, strip: TimeStrip | None = None,
                            members: Sequence[int] | None = None, window: bool = False) -> StripOperator:
    if members is None:
        members = strip.members(system.times) if strip is not None else np.arange(system.N)
    if window and strip is not None:
        qk = windowed_kernel(qk, system.times, strip.delta)
    return StripOperator(system, qk, members, strip=strip)


def solve_inhomogeneous(op: StripOperator, phi: np.ndarray) -> dict:
    """Minimal-norm solution of (Q - r) psi = phi on the strip."""
    phi = np.asarray(phi, dtype=complex)
    nphi = op.omega_norm(phi)
    if nphi == 0:
        return {"psi": np.zeros(op.dim, complex), "residual": 0.0, "defect": 0.0}
    defect = op.range_defect(phi)
    if defect > op.tol.admissible:
        raise InadmissibleInhomogeneity(
            f"inhomogeneity is not in the range of the strip operator (relative defect {defect:.3e})", defect)
    psi = op.pinv_apply(phi)
    res = op.omega_norm(op.apply(psi) - phi) / nphi
    return {"psi": psi, "residual": float(res), "defect": float(defect)}


def homogeneous_from_boundary(op: StripOperator, phi1: np.ndarray, phi0: np.ndarray, lam: float) -> dict:
    """Solve with inhomogeneity lam phi0 + phi1, phi0 in the past and phi1 in the future strip."""
    s = op.strip
    if s is None:
        raise SupportError("strip markers are required")
    past = op.mask(s.t0, s.t_min)
    future = op.mask(s.t_max, s.t1)
    if np.abs(phi0[~past]).max(initial=0.0) > 0:
        raise SupportError("phi0 must be supported in the past boundary strip")
    if np.abs(phi1[~future]).max(initial=0.0) > 0:
        raise SupportError("phi1 must be supported in the future boundary strip")
    sol = solve_inhomogeneous(op, lam * phi0 + phi1)
    psi = sol["psi"]
    interior = op.mask(s.t_min, s.t_max, open_=True) if lam != 0 else op.mask(-np.inf, s.t_max) & ~op.mask(s.t_max, np.inf)
    r = op.apply(psi)
    scale = max(op.omega_norm(lam * phi0 + phi1), 1e-300)
    hom = op.omega_norm(r, interior) / scale
    return {"psi": psi, "residual": sol["residual"], "interior_residual": float(hom)}


# ---------------------------------------------------------------------------
# commutator inner product

def commutator_inner(op: StripOperator, psi: np.ndarray, phi: np.ndarray, t: float) -> complex:
    """-2i [sum_{t_x <= t < t_y} - sum_{t_y <= t < t_x}] rho rho <psi(x)|Q(x,y) phi(y)>."""
    w = op.system.weights
    times = op.system.times
    total = 0.0 + 0.0j
    for a, i in enumerate(op.idx):
        pa = op.block(psi, a)
        if not np.any(pa):
            continue
        Gi = -op.bases[a].mu
        for b, j in enumerate(op.idx):
            past_i, past_j = times[i] <= t, times[j] <= t
            if past_i == past_j:
                continue
            Qij = op.qk[i, j]
            if Qij.size == 0:
                continue
            val = w[i] * w[j] * np.vdot(pa, Gi * (Qij @ op.block(phi, b)))
            total += val if past_i else -val
    return complex(-2j * total)


def commutator_from_inhomogeneities(op: StripOperator, psi, phi, t: float) -> complex:
    """Telescoped form -2i sum_{t_x <= t} rho [<psi|(Q-r)phi> - <(Q-r)psi|phi>]."""
    m = op.mask(-np.inf, t)
    return complex(-2j * (op.spin_inner(psi, op.apply(phi), m) - op.spin_inner(op.apply(psi), phi, m)))


def interior_times(op: StripOperator) -> np.ndarray:
    s = op.strip
    t = np.unique(op.times)
    return t[(t > s.t_min + s.delta) & (t < s.t_max - s.delta)]


def conservation_series(op: StripOperator, psi, phi, grid=None) -> dict:
    grid = interior_times(op) if grid is None else np.asarray(grid, float)
    vals = np.array([commutator_inner(op, psi, phi, t) for t in grid])
    pred = np.array([commutator_from_inhomogeneities(op, psi, phi, t) for t in grid])
    scale = max(op.omega_norm(psi) * op.omega_norm(phi) * max(op.norm, 1e-300), 1e-300)
    drift = float(np.abs(vals - vals[0]).max(initial=0.0)) if len(vals) else 0.0
    return {
        "t": grid,
        "values": vals,
        "drift": drift,
        "scale": float(scale),
        "relative_drift": drift / scale,
        "formula_mismatch": float(np.abs(vals - pred).max(initial=0.0) / scale),
    }


# ---------------------------------------------------------------------------
# positivity of the perturbed commutator inner product

def default_perturbation_profile(op: StripOperator, psi0: np.ndarray) -> np.ndarray:
    """(i/4) s psi0 on the past boundary strip."""
    s = op.strip
    return 0.25j * op.sign * psi0 * op.mask(s.t0, s.t_min)


def positivity_perturbation(op: StripOperator, psi0: np.ndarray, lams=None,
                            profile: Callable | None = None) -> dict:
    """Perturb a future-driven solution by a past inhomogeneity and sweep lambda.

    With ``phi0 = lam (i/4) s psi0`` on the past strip the commutator norm of
    ``psi0 + lam psi1`` at interior times is
    ``lam ||psi0||^2_past + lam^2 Re <psi1|psi0>_past`` exactly.
    """
    s = op.strip
    past = op.mask(s.t0, s.t_min)
    profile = profile or default_perturbation_profile
    target = op.inner(psi0, psi0, past).real
    if not np.any(psi0):
        return {"lambda": [], "values": [], "linear_coefficient": 0.0, "past_norm_sq": 0.0,
                "relative_error": 0.0, "remainder_slope": None, "remainder_vanishes": True, "order_ok": True,
                "psi1": np.zeros(op.dim, complex)}
    base = max(op.norm, 1e-300)
    lams = np.asarray(lams if lams is not None else base * np.array([1e-1, 1e-2, 1e-3]), float)
    try:
        psi1 = solve_inhomogeneous(op, profile(op, psi0))["psi"]
    except InadmissibleInhomogeneity as exc:
        raise InadmissibleInhomogeneity("perturbation profile is inadmissible; enlarge the past boundary strip",
                                        exc.residual) from None
    t_eval = interior_times(op)
    t_star = t_eval[len(t_eval) // 2] if len(t_eval) else 0.5 * (s.t_min + s.t_max)
    vals = np.array([commutator_inner(op, psi0 + l * psi1, psi0 + l * psi1, t_star).real for l in lams])
    # Richardson: vals / lam = a + b lam
    A = np.vstack([np.ones_like(lams), lams]).T
    a, b = np.linalg.lstsq(A, vals / lams, rcond=None)[0]
    rem = np.abs(vals - target * lams)
    # the lambda^2 term is the commutator norm of a past-driven solution, which
    # vanishes identically; a remainder at roundoff level is reported as such
    floor = op.tol.solve * np.abs(vals)
    vanishes = bool(np.all(rem <= floor))
    ok = rem > floor
    slope = float(np.polyfit(np.log(lams[ok]), np.log(rem[ok]), 1)[0]) if ok.sum() >= 2 else None
    return {
        "lambda": lams.tolist(),
        "values": vals.tolist(),
        "t": float(t_star),
        "linear_coefficient": float(a),
        "quadratic_coefficient": float(b),
        "past_norm_sq": float(target),
        "relative_error": float(abs(a - target) / max(abs(target), 1e-300)),
        "remainder_slope": slope,
        "remainder_max_relative": float((rem / np.maximum(np.abs(vals), 1e-300)).max()),
        "remainder_vanishes": vanishes,
        "order_ok": vanishes or (slope is not None and slope >= 1.8),
        "psi1": psi1,
    }


def sign_operator_check(op: StripOperator, rng: np.random.Generator) -> float:
    """max |<u|s v> - <<u|v>>| over a random block pair."""
    worst = 0.0
    for a, b in enumerate(op.bases):
        u = rng.normal(size=b.dim) + 1j * rng.normal(size=b.dim)
        v = rng.normal(size=b.dim) + 1j * rng.normal(size=b.dim)
        spin = np.vdot(u, -b.mu * (b.sign * v))
        scal = np.vdot(u, np.abs(b.mu) * v)
        worst = max(worst, abs(spin - scal) / max(abs(scal), 1e-300))
    return float(worst)


# ---------------------------------------------------------------------------
# lattice model with a finite-range kernel

@dataclass(frozen=True)
class LatticeModel:
    """One point per time slice, nearest-neighbour kernel in a 2m-component frame.

    In the model frame with Gram ``G = diag(1, -1, 1, -1, ...)`` the kernel
    blocks are ``G K_{+1} = (c/2) G + (1/2i) diag(g_k)`` and ``K_{-1}`` its spin
    adjoint.  With ``rho c = 1`` and ``gamma_k = rho g_k`` component k has the
    plane-wave relation ``cos w - G_kk gamma_k sin w = r``, so there are two
    real roots per component when ``|r| < sqrt(1 + gamma_k^2)``.  Distinct
    couplings keep the lattice spectrum simple.  An optional pseudo-unitary
    boost mixes each (+, -) pair of components.
    """

    T: int
    gamma: tuple = (0.7, 0.45)
    r: float = 0.3
    boost: float = 0.0

    def __post_init__(self):
        if len(self.gamma) % 2 or not self.gamma:
            raise ValueError("gamma needs an even number of components")

    @property
    def rho(self) -> float:
        return 1.0 / self.T

    @property
    def components(self) -> int:
        return len(self.gamma)

    @property
    def r_limit(self) -> float:
        return math.sqrt(1.0 + min(g * g for g in self.gamma))

    @property
    def gram(self) -> np.ndarray:
        return np.diag([(-1.0) ** k for k in range(self.components)]).astype(complex)

    def frame(self):
        G = self.gram
        m = self.components
        ch, sh = math.cosh(self.boost), math.sinh(self.boost)
        Lam = np.kron(np.eye(m // 2), np.array([[ch, sh], [sh, ch]])).astype(complex)  # Lam^H G Lam = G
        c = 1.0 / self.rho
        g = np.asarray(self.gamma, float) / self.rho
        GKp = 0.5 * c * G + np.diag(g) / 2j
        Kp = np.linalg.solve(G, GKp)
        Km = np.linalg.solve(G, GKp.conj().T)
        Li = np.linalg.inv(Lam)
        return G, Li @ Kp @ Lam, Li @ Km @ Lam

    def strip_matrix(self) -> np.ndarray:
        """Wave-level matrix of Q (without r) on the whole lattice, model frame."""
        _, Kp, Km = self.frame()
        T, m = self.T, self.components
        M = np.zeros((m * T, m * T), dtype=complex)
        for t in range(T):
            if t + 1 < T:
                M[m * t: m * t + m, m * t + m: m * t + 2 * m] = self.rho * Kp
            if t > 0:
                M[m * t: m * t + m, m * t - m: m * t] = self.rho * Km
        return M

    def frequencies(self) -> np.ndarray:
        """The 2m real plane-wave frequencies on (-pi, pi]."""
        if not abs(self.r) < self.r_limit:
            raise ValueError("|r| must be below sqrt(1 + gamma^2) for all-real roots")
        w = []
        for k, g in enumerate(self.gamma):
            b, a = math.acos(self.r / math.hypot(1.0, g)), math.atan(g)
            sgn = 1.0 if k % 2 == 0 else -1.0
            w += [b - sgn * a, -b - sgn * a]
        return np.angle(np.exp(1j * np.array(w)))

    def plane_waves(self) -> tuple[np.ndarray, np.ndarray]:
        """Frequencies and model-frame polarization vectors of the four solutions."""
        G, Kp, Km = self.frame()
        out_w, out_v = [], []
        for w in self.frequencies():
            S = self.rho * (Kp * np.exp(-1j * w) + Km * np.exp(1j * w)) - self.r * np.eye(self.components)
            _, sv, Vh = np.linalg.svd(S)
            if sv[-1] > 1e-10 * max(sv[0], 1.0):
                raise ValueError("plane-wave symbol is not singular at the computed root")
            out_w.append(w)
            out_v.append(Vh[-1].conj())
        return np.array(out_w), np.array(out_v)


@dataclass
class LatticeSetup:
    model: LatticeModel
    system: DiscreteSystem
    qk: QKernel
    strip: TimeStrip
    op: StripOperator
    psi_model: np.ndarray   # (T, 2, 4): wave evaluation in the model frame
    cip_signature: np.ndarray
    kernel_vector: np.ndarray | None = None
    kernel_u: np.ndarray | None = None


def tune_r_to_bound_state(model: LatticeModel, prefer: float = 0.0) -> float:
    """A real eigenvalue of the lattice Q operator, closest to ``prefer``."""
    ev = np.linalg.eigvals(model.strip_matrix())
    R = model.r_limit
    real = ev[(np.abs(ev.imag) < 1e-9 * np.abs(ev).max()) & (np.abs(ev.real) < 0.95 * R)].real
    if len(real) == 0:
        raise ValueError("lattice operator has no admissible real eigenvalue")
    return float(real[np.argmin(np.abs(real - prefer))])


def build_lattice(T: int = 16, gamma: tuple = (0.7, 0.45), r: float = 0.3, boost: float = 0.2,
                  t_min: float | None = None, t_max: float | None = None,
                  tol: Tolerances = DEFAULT, kernel_mode: bool = False) -> LatticeSetup:
    """Causal-fermion-type system on C^(2m) generated by the lattice model.

    The Hilbert space is spanned by the 2m plane-wave solutions, normalized so
    that their commutator Gram matrix is diag(+-1).  Points are the local
    correlation operators ``x_t = -Psi_t* Psi_t`` and the kernel is transported
    from the model frame to the spin bases of these points.
    """
    if kernel_mode:
        r = tune_r_to_bound_state(LatticeModel(T, tuple(gamma), r, boost), prefer=r)
    model = LatticeModel(T, tuple(gamma), r, boost)
    G, Kp, Km = model.frame()
    ws, vs = model.plane_waves()
    ts = np.arange(T, dtype=float)
    chi = np.einsum("tk,ka->tak", np.exp(-1j * np.outer(ts, ws)), vs)  # (T, m, 2m)
    f = chi.shape[2]
    # commutator Gram of the plane waves at an interior time (finite range 1)
    tm = T // 2
    Cg = np.zeros((f, f), complex)
    for k in range(f):
        for l in range(f):
            val = 0.0j
            # -2i [ <chi_k(t)|K+ chi_l(t+1)> - <chi_k(t+1)|K- chi_l(t)> ] rho^2
            val += np.vdot(chi[tm, :, k], G @ Kp @ chi[tm + 1, :, l])
            val -= np.vdot(chi[tm + 1, :, k], G @ Km @ chi[tm, :, l])
            Cg[k, l] = -2j * model.rho**2 * val
    Cg = (Cg + Cg.conj().T) / 2
    ev, U = np.linalg.eigh(Cg)
    if np.abs(ev).min() < 1e-12 * np.abs(ev).max():
        raise ValueError("degenerate commutator Gram for the plane waves")
    order = np.argsort(-ev)
    ev, U = ev[order], U[:, order]
    Psi = np.einsum("tak,kl->tal", chi, U / np.sqrt(np.abs(ev))[None, :])  # (T, m, 2m)
    sig = np.sign(ev)
    pts = np.array([-(P.conj().T @ G @ P) for P in Psi])
    pts = (pts + pts.conj().transpose(0, 2, 1)) / 2
    system = DiscreteSystem(n=model.components // 2, points=pts, weights=np.full(T, 1.0 / T), times=ts, kappa=1.0, r=r,
                            s=0.0, tol=tol)
    bases = spin_bases(system)
    Ts = [b.E.conj().T @ np.linalg.pinv(P) for b, P in zip(bases, Psi)]
    Tinv = [np.linalg.inv(Tt) for Tt in Ts]
    N = T
    blocks = [[np.zeros((bases[i].dim, bases[j].dim), complex) for j in range(N)] for i in range(N)]
    for t in range(N):
        if t + 1 < N:
            blocks[t][t + 1] = Ts[t] @ Kp @ Tinv[t + 1]
        if t > 0:
            blocks[t][t - 1] = Ts[t] @ Km @ Tinv[t - 1]
    qk = QKernel(bases, blocks, source="model")
    if t_min is None:
        t_min = 3.0
    if t_max is None:
        t_max = T - 4.0
    strip = TimeStrip(0.0, float(t_min), float(t_max), float(T - 1), 1.0)
    op = StripOperator(system, qk, np.arange(T), strip=strip)
    setup = LatticeSetup(model, system, qk, strip, op, Psi, sig)
    if kernel_mode:
        K = op.kernel_basis()
        if K.shape[1] == 0:
            raise ValueError("tuned r did not produce a kernel vector")
        k = K[:, 0]
        # express the kernel vector as a physical wave function psi^u
        A = np.vstack([bases[t].E.conj().T for t in range(N)])
        u = np.linalg.lstsq(A, k, rcond=None)[0]
        setup.kernel_vector = k / op.omega_norm(k)
        setup.kernel_u = u / op.omega_norm(k)
    return setup


def positive_subspace(setup: LatticeSetup) -> list[np.ndarray]:
    """Hilbert vectors spanning the positive part of the commutator form.

    If the strip operator has a kernel vector ``psi^{u_k}``, the subspace is
    restricted to vectors commutator-orthogonal to ``u_k``.
    """
    J = np.diag(setup.cip_signature)
    f = len(setup.cip_signature)
    pos = [np.eye(f)[:, k].astype(complex) for k in range(f) if setup.cip_signature[k] > 0]
    if setup.kernel_u is None:
        return pos
    uk = setup.kernel_u
    # restrict J to the J-orthogonal complement of u_k, keep its positive part
    c = J @ uk
    basis = np.linalg.svd(c.conj()[None, :])[2][1:].conj().T  # columns orthogonal to J u_k
    Jr = basis.conj().T @ J @ basis
    ev, V = np.linalg.eigh((Jr + Jr.conj().T) / 2)
    out = []
    for k in np.flatnonzero(ev > 1e-8):
        v = basis @ V[:, k]
        out.append(v / math.sqrt((v.conj() @ J @ v).real))
    return out


# ---------------------------------------------------------------------------
# extended Hilbert space

def ramp_profiles(strip: TimeStrip) -> tuple[Callable, Callable]:
    """Piecewise-linear cutoffs: eta0 switches on after t0, eta1 switches off before t1."""
    d = max(strip.delta, 1e-300)

    def eta0(t):
        return np.clip((np.asarray(t) - strip.t0) / d, 0.0, 1.0)

    def eta1(t):
        return np.clip((strip.t1 - np.asarray(t)) / d, 0.0, 1.0)

    return eta0, eta1


@dataclass
class ExtendedSpace:
    gram: np.ndarray
    gram_later: np.ndarray
    gram_with_kernel: np.ndarray | None
    kernel_dim: int
    min_eig: float
    fitted_c: float | None
    ccond_residuals: list
    decomposition_residuals: list
    admissibility: list
    times: tuple
    labels: list
    lam: float
    past_null_samples: int = 0

    def to_dict(self) -> dict:
        z = lambda A: [[[float(v.real), float(v.imag)] for v in row] for row in A]  # noqa: E731
        return {
            "gram": z(self.gram),
            "kernel_dim": self.kernel_dim,
            "min_eig": self.min_eig,
            "fitted_c": self.fitted_c,
            "ccond_residuals": self.ccond_residuals,
            "decomposition_residuals": self.decomposition_residuals,
            "admissibility": self.admissibility,
            "times": list(self.times),
            "labels": self.labels,
            "lambda": self.lam,
            "past_null_samples": self.past_null_samples,
            "time_invariance": float(np.abs(self.gram - self.gram_later).max(initial=0.0)),
            "kernel_neutrality": None if self.gram_with_kernel is None else
            float(np.abs(self.gram - self.gram_with_kernel).max(initial=0.0)),
        }


def _future_samples(op: StripOperator, rng: np.random.Generator, m: int) -> np.ndarray:
    s = op.strip
    fut = op.mask(s.t_max, s.t1).astype(float)
    return (rng.normal(size=(op.dim, m)) + 1j * rng.normal(size=(op.dim, m))) * fut[:, None]


def build_extended_space(op: StripOperator, Hf: Sequence[np.ndarray], lam: float, rng: np.random.Generator,
                         n_samples: int = 6, profile: tuple[Callable, Callable] | None = None,
                         kernel_vector: np.ndarray | None = None) -> ExtendedSpace:
    """Gram matrix of embedded wave functions and perturbed boundary-driven pairs.

    Elements are ``(psi0, psi1)``: either ``(iota u, 0)`` for ``u`` in ``Hf`` or
    a future-driven solution ``psi0`` paired with its past correction ``psi1``.
    The product is the part of ``<psi0 + lam psi1 | phi0 + lam phi1>^t`` up to
    first order in ``lam``.
    """
    s = op.strip
    system = op.system
    past = op.mask(s.t0, s.t_min)
    future = op.mask(s.t_max, s.t1)
    eta0, eta1 = profile or ramp_profiles(s)
    e0, e1 = eta0(op.times), eta1(op.times)
    tol = op.tol
    kernel = op.kernel_basis()
    labels = []
    psi0s, psi1s = [], []
    admiss, decomp = [], []
    iota = []
    for k, u in enumerate(Hf):
        psiu = op.from_points(physical_wave_function(system, u, op.qk.bases).coords)
        phi0 = past * op.apply(e0 * psiu)
        phi1 = future * op.apply(e1 * psiu)
        d0, d1 = op.range_defect(phi0), op.range_defect(phi1)
        admiss.append({"u": k, "defect_past": d0, "defect_future": d1})
        if max(d0, d1) > tol.admissible:
            raise InadmissibleInhomogeneity(f"cutoff images of Hf vector {k} are not admissible", max(d0, d1))
        p0 = op.pinv_apply(phi0)
        p1 = op.pinv_apply(phi1)
        target = e0 * e1 * psiu
        diff = p0 + p1 - target
        if kernel.shape[1]:
            # remove the kernel component before comparing
            g = op.gram
            coef = np.linalg.lstsq(np.sqrt(g)[:, None] * kernel, np.sqrt(g) * diff, rcond=None)[0]
            diff = diff - kernel @ coef
        decomp.append(op.omega_norm(diff) / max(op.omega_norm(target), 1e-300))
        iota.append(target)
        labels.append(f"hf{k}")
    # future-driven samples, admissible and commutator-orthogonal to iota(Hf)
    F = _future_samples(op, rng, n_samples + len(Hf) + (kernel.shape[1] * 2))
    if kernel.shape[1]:
        for kv in kernel.T:
            w = op.sign * kv * future
            for c in range(F.shape[1]):
                F[:, c] -= op.spin_inner(kv, F[:, c]) / op.spin_inner(kv, w) * w
    psi0_all = np.column_stack([op.pinv_apply(F[:, c]) for c in range(F.shape[1])])
    cons = []
    t_ref = interior_times(op)
    t_a = float(t_ref[0])
    for vec in iota:
        cons.append([commutator_inner(op, vec, psi0_all[:, c], t_a) for c in range(F.shape[1])])
    for kv in kernel.T:
        cons.append([op.inner(kv, psi0_all[:, c], past) for c in range(F.shape[1])])
    if cons:
        C = np.array(cons)
        null = np.linalg.svd(C)[2][C.shape[0]:].conj().T
    else:
        null = np.eye(F.shape[1])
    psi0_samples = psi0_all @ null
    psi0_samples = psi0_samples / np.array([max(op.omega_norm(c), 1e-300) for c in psi0_samples.T])[None, :]
    # keep combinations with a genuine past part (diagonalize the past Gram)
    Gp = np.array([[op.inner(a, b, past) for b in psi0_samples.T] for a in psi0_samples.T])
    ev_p, V_p = np.linalg.eigh((Gp + Gp.conj().T) / 2) if len(Gp) else (np.zeros(0), np.zeros((0, 0)))
    good = np.flatnonzero(ev_p > 1e-10)[::-1][:n_samples]
    dropped = int(psi0_samples.shape[1] - len(good))
    psi0_samples = psi0_samples @ V_p[:, good]
    for c in range(psi0_samples.shape[1]):
        p0 = psi0_samples[:, c]
        p0 = p0 / max(op.omega_norm(p0), 1e-300)
        p1 = solve_inhomogeneous(op, default_perturbation_profile(op, p0))["psi"]
        psi0s.append(p0)
        psi1s.append(p1)
        labels.append(f"pair{c}")
    elems = [(v, np.zeros_like(v)) for v in iota] + list(zip(psi0s, psi1s))

    def gram_at(t, shift=None):
        m = len(elems)
        Gm = np.zeros((m, m), complex)
        E = elems if shift is None else [(a + shift, b + shift) for a, b in elems]
        for a in range(m):
            for b in range(m):
                x0, x1 = E[a]
                y0, y1 = E[b]
                Gm[a, b] = commutator_inner(op, x0, y0, t) + lam * (
                    commutator_inner(op, x0, y1, t) + commutator_inner(op, x1, y0, t))
        return Gm

    t_b = float(t_ref[-1])
    G1 = gram_at(t_a)
    G2 = gram_at(t_b)
    Gk = gram_at(t_a, kernel[:, 0]) if kernel.shape[1] else None
    Gh = (G1 + G1.conj().T) / 2
    ev = np.linalg.eigvalsh(Gh) if len(Gh) else np.zeros(0)
    scale = max(np.abs(ev).max(initial=0.0), 1e-300)
    kernel_dim = int((np.abs(ev) <= tol.psd * scale).sum())
    min_eig = float(ev.min() / scale) if len(ev) else 0.0
    if min_eig < -tol.psd:
        raise IndefiniteGram(f"extended-space Gram is indefinite (relative min eigenvalue {min_eig:.3e}); "
                             "reduce lambda or check criticality")
    fitted_c, ccond = None, []
    if iota:
        nf = len(iota)
        Gf = G1[:nf, :nf]
        Hg = np.array([[np.vdot(u, v) for v in Hf] for u in Hf])
        fitted_c = float((np.vdot(Hg, Gf) / np.vdot(Hg, Hg)).real)
        ccond = [float(np.abs(Gf[k] - fitted_c * Hg[k]).max() / max(abs(fitted_c), 1e-300)) for k in range(nf)]
    return ExtendedSpace(G1, G2, Gk, kernel_dim, min_eig, fitted_c, ccond, [float(v) for v in decomp],
                         admiss, (t_a, t_b), labels, float(lam), dropped)


# ---------------------------------------------------------------------------
# perturbative coupling

@dataclass
class CouplingResult:
    iterates: list
    inhomogeneity_norms: list
    ratios: list
    converged: bool
    diverged: bool
    iterations: int

    def to_dict(self) -> dict:
        return {"inhomogeneity_norms": self.inhomogeneity_norms, "ratios": self.ratios,
                "converged": self.converged, "diverged": self.diverged, "iterations": self.iterations}


def real_coordinates(op: StripOperator) -> tuple[Callable, Callable]:
    """Maps between strip vectors and real Omega-orthonormal coordinates."""
    sq = np.sqrt(op.gram)

    def to_real(v):
        z = sq * v
        return np.concatenate([z.real, z.imag])

    def from_real(x):
        m = len(x) // 2
        return (x[:m] + 1j * x[m:]) / sq

    return to_real, from_real


def wave_form_matrix(op: StripOperator, weight: float = 1.0) -> np.ndarray:
    """Real symmetric matrix of psi -> -4 weight Re <psi|s(Q - r) psi>_Omega."""
    H = -4 * weight * op.H
    return np.block([[H.real, -H.imag], [H.imag, H.real]])


def random_coupling(op: StripOperator, scale: float, rng: np.random.Generator, weight: float = 1.0) -> np.ndarray:
    """Random symmetric coupling whose iteration matrix has spectral radius ``scale``."""
    Hq = wave_form_matrix(op, weight)
    m = Hq.shape[0]
    X = rng.normal(size=(m, m))
    C = (X + X.T) / 2
    rho = np.abs(np.linalg.eigvals(np.linalg.pinv(Hq, rcond=op.tol.rank) @ C)).max()
    return scale * C / rho


def coupling_from_system(op: StripOperator, u: np.ndarray) -> np.ndarray:
    """Real matrix of the lfe + remainder form for variations Phi = psi (x) <u|."""
    system = op.system
    to_real, from_real = real_coordinates(op)
    m = 2 * op.dim
    u = np.asarray(u, dtype=complex)
    qk = op.qk

    def form(x):
        psi = op.to_points(from_real(x))
        Phi = [np.outer(p, u.conj()) for p in psi]
        rep = second_variation_action(system, Phi, qk, fd=False, bases=qk.bases)
        return rep.lfe_term + rep.remainder

    E = np.eye(m)
    diag = np.array([form(E[a]) for a in range(m)])
    C = np.diag(diag)
    for a in range(m):
        for b in range(a + 1, m):
            C[a, b] = C[b, a] = 0.5 * (form(E[a] + E[b]) - diag[a] - diag[b])
    return C


def coupling_iteration(op: StripOperator, phi: np.ndarray, coupling: np.ndarray, max_iters: int = 50,
                       weight: float = 1.0) -> CouplingResult:
    """Fixed-point iteration for (W + C) v = b with W the wave-sector form.

    Each step treats the coupling term as an effective inhomogeneity for the
    wave sector and solves with the pseudo-inverse.
    """
    to_real, from_real = real_coordinates(op)
    Wm = wave_form_matrix(op, weight)
    Wp = np.linalg.pinv(Wm, rcond=op.tol.rank)
    b = to_real(np.asarray(phi, dtype=complex))
    nb = max(np.linalg.norm(b), 1e-300)
    v = Wp @ b
    iterates = [from_real(v)]
    norms, ratios = [], []
    streak = 0
    converged = diverged = False
    k = 0
    for k in range(1, max_iters + 1):
        v_new = Wp @ (b - coupling @ v)
        step = np.linalg.norm(coupling @ (v_new - v)) / nb
        if not np.any(coupling):
            step = 0.0
        norms.append(float(step))
        if len(norms) >= 2 and norms[-2] > 0:
            ratios.append(norms[-1] / norms[-2])
            streak = streak + 1 if ratios[-1] >= 1 else 0
        v = v_new
        iterates.append(from_real(v))
        if step < op.tol.couple:
            converged = True
            break
        if streak >= 3 or not np.isfinite(step):
            diverged = True
            break
    return CouplingResult(iterates, norms, [float(r) for r in ratios], converged, diverged, k)


# ---------------------------------------------------------------------------
# trace-free commutator operator

def appendix_a_check(system: DiscreteSystem, qk: QKernel, omega: Sequence[int], u) -> dict:
    """Commutator operator C = i sum rho_x [x, B(x)] built from Lagrangian gradients.

    ``B(x) = sum_{y not in Omega} rho_y D1L(x, y)`` for x in Omega and
    ``-sum_{y in Omega} rho_y D1L(x, y)`` otherwise.  C is trace free, and
    ``<u|C u>`` reproduces the commutator inner product of the region Omega.
    """
    u = np.asarray(u, dtype=complex)
    N, f = system.N, system.f
    inside = np.zeros(N, bool)
    inside[list(omega)] = True
    w = system.weights
    pts = system.points
    C = np.zeros((f, f), complex)
    if np.any(inside) and np.any(~inside) and np.any(u):
        for i in range(N):
            others = np.flatnonzero(~inside) if inside[i] else np.flatnonzero(inside)
            sgn = 1.0 if inside[i] else -1.0
            B = sgn * sum(w[j] * lagrangian_gradient_x(pts[i], pts[j], system.n, system.kappa,
                                                       system.tol.fd, system.tol.sigma) for j in others)
            C += 1j * w[i] * (pts[i] @ B - B @ pts[i])
    # commutator inner product of the region Omega
    psi = physical_wave_function(system, u, qk.bases).coords
    val = 0.0j
    for i in np.flatnonzero(inside):
        for j in np.flatnonzero(~inside):
            Qij = qk[i, j]
            if Qij.size:
                val += w[i] * w[j] * np.vdot(psi[i], -qk.bases[i].mu * (Qij @ psi[j]))
    cip = 4 * val.imag
    quad = complex(np.vdot(u, C @ u))
    nC = float(np.linalg.norm(C, 2))
    return {
        "C_matrix": C,
        "trace_C": complex(np.trace(C)),
        "trace_relative": float(abs(np.trace(C)) / max(nC, 1e-300)) if nC else 0.0,
        "norm_C": nC,
        "quadratic": quad,
        "cip": float(cip),
        "quadratic_match": float(abs(quad - cip) / max(abs(cip), 1e-300)) if cip else float(abs(quad)),
    }
