"""Discrete causal fermion systems: point operators, the kappa-Lagrangian,
the causal action with its constraints, and a minimizer.

A system is a finite weighted family of Hermitian ``f x f`` matrices, each
with at most ``n`` positive and at most ``n`` negative eigenvalues.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .tolerances import DEFAULT, Tolerances


class InvalidSystem(ValueError):
    """Raised when a point operator or a system violates its invariants."""


class ChainSpectrumError(RuntimeError):
    def __init__(self, i, j, msg):
        super().__init__(f"eigensolver failed for pair ({i}, {j}): {msg}")
        self.pair = (i, j)



# ---------------------------------------------------------------------------
# point operators

def hermiticity_residual(x: np.ndarray) -> float:
    scale = np.abs(x).max()
    if scale == 0:
        return 0.0
    return float(np.abs(x - x.conj().T).max() / scale)


def signature(x: np.ndarray, sigma: float = DEFAULT.sigma) -> tuple[int, int]:
    """Numbers of positive and negative eigenvalues beyond the relative cutoff."""
    mu = np.linalg.eigvalsh((x + x.conj().T) / 2)
    cut = sigma * max(np.abs(mu).max(initial=0.0), 1e-300)
    return int((mu > cut).sum()), int((mu < -cut).sum())


def validate_point(x: np.ndarray, n: int, tol: Tolerances = DEFAULT) -> None:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise InvalidSystem(f"point operator must be square, got shape {x.shape}")
    if hermiticity_residual(x) > tol.hermitian:
        raise InvalidSystem(f"point operator is not Hermitian (residual {hermiticity_residual(x):.3e})")
    p, q = signature(x, tol.sigma)
    if p > n or q > n:
        raise InvalidSystem(f"signature ({p}, {q}) exceeds spin dimension n={n}")


@dataclass(frozen=True)
class DiscreteSystem:
    """A weighted finite configuration of point operators.

    ``points`` has shape ``(N, f, f)``. Arrays are stored read-only so that a
    system can be shared freely between computations.
    """

    n: int
    points: np.ndarray
    weights: np.ndarray
    times: np.ndarray
    kappa: float = 0.1
    r: float = 0.0
    s: float = 0.0
    tol: Tolerances = field(default=DEFAULT, compare=False, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=complex)
        if pts.ndim != 3 or pts.shape[1] != pts.shape[2]:
            raise InvalidSystem(f"points must have shape (N, f, f), got {pts.shape}")
        w = np.array(self.weights, dtype=float).reshape(-1)
        t = np.array(self.times, dtype=float).reshape(-1)
        if len(w) != len(pts) or len(t) != len(pts):
            raise InvalidSystem("weights, times and points must have equal length")
        if self.n < 1:
            raise InvalidSystem("spin dimension must be a positive integer")
        if not self.kappa > 0:
            raise InvalidSystem("kappa must be positive")
        if np.any(w <= 0):
            raise InvalidSystem("weights must be positive")
        if abs(w.sum() - 1.0) > self.tol.volume:
            raise InvalidSystem(f"volume constraint violated: sum of weights = {w.sum()!r}")
        for i, x in enumerate(pts):
            try:
                validate_point(x, self.n, self.tol)
            except InvalidSystem as exc:
                raise InvalidSystem(f"point {i}: {exc}") from None
        pts = (pts + pts.conj().transpose(0, 2, 1)) / 2
        for arr in (pts, w, t):
            arr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "times", t)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def f(self) -> int:
        return self.points.shape[1]

    def replace(self, **changes) -> "DiscreteSystem":
        data = dict(n=self.n, points=self.points, weights=self.weights, times=self.times,
                    kappa=self.kappa, r=self.r, s=self.s, tol=self.tol)
        data.update(changes)
        return DiscreteSystem(**data)

    # serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "spin_dimension": int(self.n),
            "hilbert_dimension": int(self.f),
            "kappa": float(self.kappa),
            "r": float(self.r),
            "s": float(self.s),
            "points": [
                {
                    "weight": float(w),
                    "time": float(t),
                    "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in x],
                }
                for x, w, t in zip(self.points, self.weights, self.times)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict, tol: Tolerances = DEFAULT) -> "DiscreteSystem":
        try:
            f = int(data["hilbert_dimension"])
            pts = []
            for p in data["points"]:
                m = np.asarray(p["matrix"], dtype=float)
                if m.shape != (f, f, 2):
                    raise InvalidSystem(f"matrix shape {m.shape} does not match hilbert_dimension {f}")
                pts.append(m[..., 0] + 1j * m[..., 1])
            return cls(
                n=int(data["spin_dimension"]),
                points=np.array(pts).reshape(-1, f, f),
                weights=[p["weight"] for p in data["points"]],
                times=[p.get("time", float(k)) for k, p in enumerate(data["points"])],
                kappa=float(data["kappa"]),
                r=float(data.get("r", 0.0)),
                s=float(data.get("s", 0.0)),
                tol=tol,
            )
        except (KeyError, TypeError) as exc:
            raise InvalidSystem(f"malformed system description: {exc!r}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, tol: Tolerances = DEFAULT) -> "DiscreteSystem":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")), tol)


# ---------------------------------------------------------------------------
# closed chain spectra and the Lagrangian

@dataclass(frozen=True)
class ChainSpectrum:
    values: np.ndarray  # exactly 2n complex numbers

    @property
    def moduli(self) -> np.ndarray:
        return np.abs(self.values)


def _order(vals: np.ndarray) -> np.ndarray:
    # modulus descending, then phase ascending; rounding keeps ties stable
    mod = np.round(np.abs(vals), 12)
    ph = np.round(np.angle(vals), 12)
    return vals[np.lexsort((ph, -mod))]


def _pad_spectrum(ev: np.ndarray, n: int, cut: float) -> np.ndarray:
    ev = ev[np.argsort(-np.abs(ev), kind="stable")][: 2 * n]
    ev = np.where(np.abs(ev) > cut, ev, 0.0)
    if len(ev) < 2 * n:
        ev = np.concatenate([ev, np.zeros(2 * n - len(ev))])
    return _order(ev.astype(complex))


def chain_spectrum(x, y, n: int, sigma: float = DEFAULT.sigma, pair=(None, None)) -> ChainSpectrum:
    """The 2n nontrivial eigenvalues of ``x @ y``, zero padded."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    try:
        ev = np.linalg.eigvals(x @ y)
    except np.linalg.LinAlgError as exc:
        raise ChainSpectrumError(*pair, str(exc)) from None
    cut = sigma * np.linalg.norm(x, 2) * np.linalg.norm(y, 2)
    return ChainSpectrum(_pad_spectrum(ev, n, cut))


def classify(x, y, n: int, class_tol: float = DEFAULT.class_tol,
             sigma: float = DEFAULT.sigma) -> str:
    lam = chain_spectrum(x, y, n, sigma).values
    return classify_spectrum(lam, class_tol)


def classify_spectrum(lam: np.ndarray, class_tol: float = DEFAULT.class_tol) -> str:
    a = np.abs(lam)
    scale = a.max(initial=0.0)
    if scale == 0 or np.ptp(a) <= class_tol * scale:
        return "spacelike"
    if np.all(np.abs(lam.imag) <= class_tol * scale):
        return "timelike"
    return "lightlike"


def lagrangian_from_moduli(a: np.ndarray, n: int, kappa: float) -> np.ndarray:
    """kappa-Lagrangian as a function of the eigenvalue moduli (last axis)."""
    a = np.asarray(a, dtype=float)
    diff = a[..., :, None] - a[..., None, :]
    return (diff**2).sum((-1, -2)) / (4 * n) + kappa * a.sum(-1) ** 2


def lagrangian(x, y, n: int, kappa: float, sigma: float = DEFAULT.sigma) -> float:
    return float(lagrangian_from_moduli(chain_spectrum(x, y, n, sigma).moduli, n, kappa))


def lagrangian_matrix(system: DiscreteSystem) -> np.ndarray:
    """All pair Lagrangians L(x_i, x_j) as an ``(N, N)`` array."""
    return pair_lagrangians(system.points, system.n, system.kappa, system.tol.sigma)


def pair_lagrangians(pts: np.ndarray, n: int, kappa: float, sigma: float = DEFAULT.sigma) -> np.ndarray:
    """Batched Lagrangians for a stack of (not necessarily valid) Hermitian points."""
    prod = np.einsum("iab,jbc->ijac", pts, pts)
    try:
        ev = np.linalg.eigvals(prod)
    except np.linalg.LinAlgError as exc:
        raise ChainSpectrumError(None, None, str(exc)) from None
    ev = np.take_along_axis(ev, np.argsort(-np.abs(ev), axis=-1), axis=-1)[..., : 2 * n]
    norms = np.linalg.norm(pts, 2, axis=(1, 2))
    cut = sigma * np.outer(norms, norms)
    a = np.where(np.abs(ev) > cut[..., None], np.abs(ev), 0.0)
    if a.shape[-1] < 2 * n:
        a = np.concatenate([a, np.zeros(a.shape[:-1] + (2 * n - a.shape[-1],))], axis=-1)
    L = lagrangian_from_moduli(a, n, kappa)
    return (L + L.T) / 2


def causal_action(system: DiscreteSystem) -> float:
    w = system.weights
    return float(w @ lagrangian_matrix(system) @ w)


def constraint_report(system: DiscreteSystem) -> dict:
    tr = np.trace(system.points, axis1=1, axis2=2).real
    return {
        "volume": float(system.weights.sum()),
        "trace": float(system.weights @ tr),
        "local_traces": [float(v) for v in tr],
    }


def ell(z, system: DiscreteSystem) -> float:
    """Euler-Lagrange function at a test operator ``z``."""
    z = np.asarray(z, dtype=complex)
    val = sum(w * lagrangian(z, x, system.n, system.kappa, system.tol.sigma)
              for w, x in zip(system.weights, system.points))
    return float(val - system.r * (np.trace(z).real - 1.0) - system.s)


def ell_on_support(system: DiscreteSystem) -> np.ndarray:
    L = lagrangian_matrix(system)
    tr = np.trace(system.points, axis1=1, axis2=2).real
    return L @ system.weights - system.r * (tr - 1.0) - system.s


def fit_multipliers(system: DiscreteSystem) -> tuple[float, float]:
    """Lagrange parameters making the EL function vanish on the support.

    Scaling a single point changes its pair Lagrangians quadratically and its
    trace linearly, which fixes ``r`` as twice the weighted mean local action.
    ``s`` then absorbs the remaining constant.
    """
    L = lagrangian_matrix(system)
    w = system.weights
    loc = L @ w
    tr = np.trace(system.points, axis1=1, axis2=2).real
    r = 2.0 * float(w @ loc)
    s = float(w @ (loc - r * (tr - 1.0)))
    return r, s


def with_fitted_multipliers(system: DiscreteSystem) -> DiscreteSystem:
    r, s = fit_multipliers(system)
    return system.replace(r=r, s=s)


# ---------------------------------------------------------------------------
# factor parameterization  x = B S B^H  with S = diag(+1 (n times), -1 (n times))

def _signs(n: int) -> np.ndarray:
    return np.array([1.0] * n + [-1.0] * n)


def factors_from_points(points: np.ndarray, n: int, sigma: float, rng=None) -> np.ndarray:
    """Write every point as ``B S B^H``; missing columns get tiny seeds."""
    N, f, _ = points.shape
    B = np.zeros((N, f, 2 * n), dtype=complex)
    rng = rng if rng is not None else np.random.default_rng(0)
    for i, x in enumerate(points):
        mu, V = np.linalg.eigh(x)
        cut = sigma * max(np.abs(mu).max(initial=0.0), 1e-300)
        pos = [k for k in np.argsort(-mu) if mu[k] > cut][:n]
        neg = [k for k in np.argsort(mu) if mu[k] < -cut][:n]
        for slot, k in enumerate(pos):
            B[i, :, slot] = math.sqrt(mu[k]) * V[:, k]
        for slot, k in enumerate(neg):
            B[i, :, n + slot] = math.sqrt(-mu[k]) * V[:, k]
        scale = max(np.abs(mu).max(initial=0.0), 1.0)
        for slot in range(len(pos), n):
            B[i, :, slot] = 1e-4 * math.sqrt(scale) * (rng.normal(size=f) + 1j * rng.normal(size=f))
        for slot in range(len(neg), n):
            B[i, :, n + slot] = 1e-4 * math.sqrt(scale) * (rng.normal(size=f) + 1j * rng.normal(size=f))
    return B


def points_from_factors(B: np.ndarray, n: int) -> np.ndarray:
    x = np.einsum("iak,k,ibk->iab", B, _signs(n), B.conj())
    return (x + x.conj().transpose(0, 2, 1)) / 2


def action_parts(B: np.ndarray, n: int, kappa: float, cut: float = 1e-14):
    """Pair Lagrangians and their x-gradients for factorized points.

    Returns ``L`` of shape (N, N) and ``D1`` of shape (N, N, f, f) with
    ``d/dt L(x_i + t H, x_j) = tr(H D1[i, j])`` for Hermitian ``H``.
    The closed chain is evaluated on the 2n-dimensional factor space, which
    keeps everything small and analytic away from degeneracies.
    """
    S = _signs(n)
    gm = np.einsum("iak,jal->ijkl", B.conj(), B)
    C = np.einsum("k,ijkl,l,jal->ijka", S, gm, S, B.conj())
    A = np.einsum("ijka,ial->ijkl", C, B)
    lam, V = np.linalg.eig(A)
    W = np.linalg.inv(V)
    a = np.abs(lam)
    L = lagrangian_from_moduli(a, n, kappa)
    tot = a.sum(-1, keepdims=True)
    c = (2 * n * a - tot) / n + 2 * kappa * tot
    big = a > cut * max(a.max(initial=0.0), 1e-300)
    safe = np.where(big, lam, 1.0)
    coef = np.where(big, c * np.conj(safe) / np.abs(safe) / safe, 0.0)
    K = np.einsum("ijk,ijak,ijkb->ijab", coef, V, W)
    xj = np.einsum("jak,k,jbk->jab", B, S, B.conj())
    M = np.einsum("jab,ibk,ijkl,ijlc->ijac", xj, B, K, C)
    D1 = (M + np.conj(np.swapaxes(M, -1, -2))) / 2
    return L, D1


# ---------------------------------------------------------------------------
# minimization

@dataclass(frozen=True)
class MinimizeOptions:
    max_iters: int = 5000
    trace_mode: str = "project"   # "project" (unit local trace) or "penalty"
    penalty: float = 100.0
    seed: int = 0
    fd_step: float = 1e-6


@dataclass
class MinimizeResult:
    system: DiscreteSystem
    initial_action: float
    final_action: float
    history: list[float]
    iterations: int
    fd_gradient_norm: float
    converged: bool
    warning: str | None
    el_residual: float
    boundary: dict

    def summary(self) -> dict:
        return {
            "initial_action": self.initial_action,
            "final_action": self.final_action,
            "iterations": self.iterations,
            "fd_gradient_norm": self.fd_gradient_norm,
            "converged": self.converged,
            "warning": self.warning,
            "el_residual": self.el_residual,
            "boundary": self.boundary,
        }


class _Objective:
    """Action as a smooth function of factor matrices and log-weights."""

    def __init__(self, N, f, n, kappa, mode, penalty):
        self.N, self.f, self.n, self.kappa = N, f, n, kappa
        self.mode, self.penalty = mode, penalty
        self.m = N * f * 2 * n
        self.S = _signs(n)

    def pack(self, B, logw):
        return np.concatenate([B.real.ravel(), B.imag.ravel(), logw])

    def unpack(self, p):
        B = (p[: self.m] + 1j * p[self.m: 2 * self.m]).reshape(self.N, self.f, 2 * self.n)
        return B, p[2 * self.m:]

    @staticmethod
    def weights(logw):
        e = np.exp(logw - logw.max())
        return e / e.sum()

    def decode(self, p):
        """Normalized factors and weights represented by ``p`` (None if invalid)."""
        B, logw = self.unpack(p)
        rho = self.weights(logw)
        if self.mode == "penalty":
            return B, rho
        t = np.einsum("iak,k->i", np.abs(B) ** 2, self.S)
        if np.any(t <= 1e-12):
            return None, rho
        return B / np.sqrt(t)[:, None, None], rho

    def __call__(self, p):
        B, logw = self.unpack(p)
        rho = self.weights(logw)
        S = self.S
        if self.mode == "penalty":
            L, D1 = action_parts(B, self.n, self.kappa)
            tr = np.einsum("iak,k->i", np.abs(B) ** 2, S)
            gap = rho @ tr - 1.0
            val = rho @ L @ rho + self.penalty * gap**2
            G = 2 * np.einsum("i,j,ijab->iab", rho, rho, D1)
            G += 2 * self.penalty * gap * rho[:, None, None] * np.eye(self.f)
            gB = 2 * np.einsum("iab,ibk,k->iak", G, B, S)
            dr = 2 * (L @ rho) + 2 * self.penalty * gap * tr
        else:
            t = np.einsum("iak,k->i", np.abs(B) ** 2, S)
            if np.any(t <= 1e-12):
                return 1e6, np.zeros_like(p)
            Bt = B / np.sqrt(t)[:, None, None]
            L, D1 = action_parts(Bt, self.n, self.kappa)
            val = rho @ L @ rho
            G = 2 * np.einsum("i,j,ijab->iab", rho, rho, D1)
            gt = 2 * np.einsum("iab,ibk,k->iak", G, Bt, S)
            proj = np.einsum("iak,iak->i", gt.conj(), B).real
            gB = gt / np.sqrt(t)[:, None, None] - (t**-1.5 * proj)[:, None, None] * (B * S)
            dr = 2 * (L @ rho)
        gw = rho * (dr - rho @ dr)
        return float(val), np.concatenate([gB.real.ravel(), gB.imag.ravel(), gw])

    def fd_gradient_norm(self, p, h):
        g = np.empty_like(p)
        e = np.zeros_like(p)
        for k in range(len(p)):
            e[k] = h
            g[k] = (self(p + e)[0] - self(p - e)[0]) / (2 * h)
            e[k] = 0.0
        return float(np.abs(g).max())


def minimize_action(initial: DiscreteSystem, options: MinimizeOptions = MinimizeOptions()) -> MinimizeResult:
    """Minimize the causal action over points and weights.

    Points are parameterized as ``x = B S B^H`` which makes the signature bound
    structural; in ``project`` mode each factor is rescaled to unit local trace,
    weights are a softmax of free parameters so the volume constraint holds
    exactly. The gradient is analytic; a central finite-difference gradient of
    the same objective is the reported stopping measure.
    """
    sysm = initial
    n, N, f = sysm.n, sysm.N, sysm.f
    obj = _Objective(N, f, n, sysm.kappa, options.trace_mode, options.penalty)
    rng = np.random.default_rng(options.seed)
    B0 = factors_from_points(np.array(sysm.points), n, sysm.tol.sigma, rng)
    if options.trace_mode == "project":
        t0 = np.einsum("iak,k->i", np.abs(B0) ** 2, obj.S)
        if np.any(t0 <= 1e-12):
            raise InvalidSystem("unit-trace projection needs points with positive trace")
    p0 = obj.pack(B0, np.log(sysm.weights))
    initial_action = causal_action(sysm)
    # objective of the starting point after projection to the constraint set
    start_val = obj(p0)[0]

    g0 = obj.fd_gradient_norm(p0, options.fd_step)
    if g0 < sysm.tol.gtol and abs(start_val - initial_action) <= 1e-12 * max(1.0, initial_action):
        res_sys = with_fitted_multipliers(sysm)
        return MinimizeResult(res_sys, initial_action, initial_action, [initial_action], 0, g0, True,
                              None, float(np.abs(ell_on_support(res_sys)).max()),
                              _boundary_flags(res_sys))

    history = [start_val]

    def cb(p):
        history.append(obj(p)[0])

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(obj, p0, jac=True, method="L-BFGS-B", callback=cb,
                       options=dict(maxiter=options.max_iters, gtol=1e-12, ftol=1e-16, maxcor=30))
    Bt, rho = obj.decode(res.x)
    warning = None
    if Bt is None:
        # factor left the positive-trace region: fall back to the best recorded start
        Bt, rho = obj.decode(p0)
        res_x = p0
        warning = "trace normalization failed at the final iterate; start returned"
    else:
        res_x = res.x
    pts = points_from_factors(Bt, n)
    order_times = np.array(sysm.times)
    final = DiscreteSystem(n=n, points=pts, weights=rho / rho.sum(), times=order_times,
                           kappa=sysm.kappa, tol=sysm.tol)
    final_action = causal_action(final)
    if final_action > initial_action and options.trace_mode == "project" and \
            abs(start_val - initial_action) <= 1e-12 * max(1.0, initial_action):
        final, final_action = sysm, initial_action
        warning = "optimizer did not improve on the initial system"
    final = with_fitted_multipliers(final)
    gnorm = obj.fd_gradient_norm(res_x, options.fd_step)
    converged = gnorm < sysm.tol.gtol
    if not converged and warning is None:
        warning = "max_iters reached or step underflow; best iterate returned"
    return MinimizeResult(
        system=final,
        initial_action=initial_action,
        final_action=final_action,
        history=[float(v) for v in history],
        iterations=int(res.nit),
        fd_gradient_norm=gnorm,
        converged=bool(converged),
        warning=warning,
        el_residual=float(np.abs(ell_on_support(final)).max()),
        boundary=_boundary_flags(final),
    )


def _boundary_flags(system: DiscreteSystem) -> dict:
    """Flags for minimizers sitting on the boundary of the parameter domain."""
    w = system.weights
    small_weight = bool(w.min() < 1e-3 / system.N)
    rank_drop = []
    for i, x in enumerate(system.points):
        mu = np.linalg.eigvalsh(x)
        mu = mu[np.argsort(-np.abs(mu))][: 2 * system.n]
        if np.abs(mu).min() < 1e-6 * np.abs(mu).max():
            rank_drop.append(i)
    # a vanishing factor column is an interior point of the factor domain,
    # whereas a vanishing weight can only be approached asymptotically
    return {"small_weight": small_weight, "rank_drop": rank_drop, "clipped": small_weight}


# ---------------------------------------------------------------------------
# generators

def random_system(rng: np.random.Generator, N: int, f: int, n: int = 1, kappa: float = 0.1,
                  equal_weights: bool = False, times: Sequence[float] | None = None,
                  tol: Tolerances = DEFAULT) -> DiscreteSystem:
    """Random unit-trace points of full signature (n, n)."""
    S = _signs(n)
    B = np.empty((N, f, 2 * n), dtype=complex)
    for i in range(N):
        while True:
            b = rng.normal(size=(f, 2 * n)) + 1j * rng.normal(size=(f, 2 * n))
            b[:, n:] *= 0.6
            t = float(np.einsum("ak,k->", np.abs(b) ** 2, S))
            if t > 0.2 * np.abs(b).max() ** 2:
                break
        B[i] = b / math.sqrt(t)
    if equal_weights:
        w = np.full(N, 1.0 / N)
    else:
        w = rng.uniform(0.5, 1.5, size=N)
        w /= w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    t = np.arange(N, dtype=float) if times is None else np.asarray(times, dtype=float)
    return DiscreteSystem(n=n, points=points_from_factors(B, n), weights=w, times=t,
                          kappa=kappa, tol=tol)


def demo_two_point_system() -> DiscreteSystem:
    """Two points on C^2: a projector and a point of signature (1, 1)."""
    x1 = np.diag([1.0, 0.0]).astype(complex)
    v = np.array([1.0, 1.0]) / math.sqrt(2)
    x2 = 2.0 * np.outer(v, v) - 0.5 * np.eye(2)
    x2 = x2.astype(complex)
    return DiscreteSystem(n=1, points=np.array([x1, x2]), weights=[0.5, 0.5], times=[0.0, 1.0],
                          kappa=0.1)
