"""Regularized Dirac dynamics per spatial Fourier mode, and Bessel-kernel
asymptotics of Lorentz invariant distributions.

Per mode ``psi(t, x) = psi(t) e^{ikx}`` in 1+1 dimensions with
``gamma0 = diag(1, -1)`` and ``gamma1 = [[0, 1], [-1, 0]]`` the Dirac operator
becomes ``i gamma0 d/dt + B`` with ``B = -k gamma1 - m``.  The spin product is
``<<a|b>> = a^dagger gamma0 b``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, signal, special

GAMMA0 = np.diag([1.0, -1.0]).astype(complex)
GAMMA1 = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)


class UnderResolvedGrid(ValueError):
    pass


class LightConeError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


def clifford_residual() -> float:
    I = np.eye(2)
    return float(max(np.abs(GAMMA0 @ GAMMA0 - I).max(), np.abs(GAMMA1 @ GAMMA1 + I).max(),
                     np.abs(GAMMA0 @ GAMMA1 + GAMMA1 @ GAMMA0).max()))


def _null_vector(M: np.ndarray) -> np.ndarray:
    v = np.linalg.svd(M)[2][-1].conj()
    # fix the phase: largest component real positive
    j = int(np.argmax(np.abs(v)))
    return v * (abs(v[j]) / v[j])


@dataclass(frozen=True)
class DiracMode:
    k: float
    m: float

    @property
    def omega(self) -> float:
        return math.hypot(self.k, self.m)

    @property
    def B(self) -> np.ndarray:
        return -self.k * GAMMA1 - self.m * np.eye(2)

    @property
    def spinors(self) -> tuple[np.ndarray, np.ndarray]:
        """u_+ and u_- with (gamma0 w + B) u_+ = 0 and (-gamma0 w + B) u_- = 0."""
        w = self.omega
        return _null_vector(GAMMA0 * w + self.B), _null_vector(-GAMMA0 * w + self.B)


def el_operator_mode(mode: DiracMode) -> dict:
    """Coefficients of (i g0 D + B) g0 (i g0 D + B) = C2 D^2 + C1 D + C0."""
    B = mode.B
    ig0 = 1j * GAMMA0
    return {"C2": ig0 @ GAMMA0 @ ig0, "C1": ig0 @ GAMMA0 @ B + B @ GAMMA0 @ ig0, "C0": B @ GAMMA0 @ B}


def el_symbol(mode: DiracMode, k0: float) -> np.ndarray:
    """gamma0 times the EL operator on e^{-i k0 t}; its eigenvalues are (|k0| +- w)^2."""
    c = el_operator_mode(mode)
    return GAMMA0 @ (c["C2"] * (-1j * k0) ** 2 + c["C1"] * (-1j * k0) + c["C0"])


def symbol_report(mode: DiracMode, k0_grid=None) -> dict:
    w = mode.omega
    k0_grid = np.linspace(-3 * w - 1, 3 * w + 1, 401) if k0_grid is None else np.asarray(k0_grid)
    err = 0.0
    mins = []
    for k0 in k0_grid:
        ev = np.sort(np.linalg.eigvals(el_symbol(mode, k0)).real)
        ref = np.sort([(abs(k0) - w) ** 2, (abs(k0) + w) ** 2])
        err = max(err, float(np.abs(ev - ref).max() / max(ref.max(), 1.0)))
        mins.append(abs(np.linalg.det(el_symbol(mode, k0))))
    off = np.abs(np.abs(k0_grid) - w) > 0.05 * max(w, 1e-3)
    return {"eigen_error": err, "min_det_off_shell": float(np.min(np.array(mins)[off])) if off.any() else None}


# ---------------------------------------------------------------------------
# mode solutions

@dataclass(frozen=True)
class ModeSolution:
    """psi(t) = a+ e^{-iwt} u+ + a- e^{iwt} u- + t (b+ e^{-iwt} u+ + b- e^{iwt} u-)."""

    mode: DiracMode
    coeffs: tuple  # (a+, a-, b+, b-)

    def _parts(self, t):
        t = np.asarray(t, dtype=float)
        up, um = self.mode.spinors
        w = self.mode.omega
        ep, em = np.exp(-1j * w * t), np.exp(1j * w * t)
        ap, am, bp, bm = self.coeffs
        p1 = np.multiply.outer(ap * ep, up) + np.multiply.outer(am * em, um)
        p2 = np.multiply.outer(bp * ep, up) + np.multiply.outer(bm * em, um)
        return p1, p2

    def first(self, t):
        return self._parts(t)[0]

    def second(self, t):
        """The Dirac solution multiplying t."""
        return self._parts(t)[1]

    def __call__(self, t):
        p1, p2 = self._parts(t)
        return p1 + np.asarray(t, dtype=float)[..., None] * p2

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        w = self.mode.omega
        up, um = self.mode.spinors
        ap, am, bp, bm = self.coeffs
        ep, em = np.exp(-1j * w * t), np.exp(1j * w * t)
        d = np.multiply.outer(-1j * w * (ap + bp * t) * ep + bp * ep, up)
        d += np.multiply.outer(1j * w * (am + bm * t) * em + bm * em, um)
        return d

    def samples(self, grid) -> np.ndarray:
        return self(grid)


def basis_solutions(mode: DiracMode) -> dict:
    return {
        "e-iwt u+": ModeSolution(mode, (1, 0, 0, 0)),
        "e+iwt u-": ModeSolution(mode, (0, 1, 0, 0)),
        "t e-iwt u+": ModeSolution(mode, (0, 0, 1, 0)),
        "t e+iwt u-": ModeSolution(mode, (0, 0, 0, 1)),
    }


def off_shell_wave(mode: DiracMode, shift: float = 0.5):
    """e^{-i(w + shift) t} u_+ as a callable on grids; a negative control for the EL residual."""
    up, _ = mode.spinors
    w = mode.omega + shift
    return lambda t: np.multiply.outer(np.exp(-1j * w * np.asarray(t, float)), up)


_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def fd_derivatives(samples: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Fourth-order central first and second derivatives at interior points 2..n-3."""
    s = np.asarray(samples)
    n = len(s)
    d1 = sum(_D1[k] * s[k: n - 4 + k] for k in range(5)) / h
    d2 = sum(_D2[k] * s[k: n - 4 + k] for k in range(5)) / h**2
    return d1, d2


def el_residual(mode: DiracMode, samples: np.ndarray, h: float) -> np.ndarray:
    c = el_operator_mode(mode)
    d1, d2 = fd_derivatives(samples, h)
    return d2 @ c["C2"].T + d1 @ c["C1"].T + samples[2:-2] @ c["C0"].T


def _check_resolution(mode: DiracMode, h: float, omega: float | None = None):
    w = omega if omega is not None else mode.omega
    if h * max(w, 1e-300) > 0.1 + 1e-12:
        raise UnderResolvedGrid(f"grid spacing h={h:g} does not resolve frequency {w:g} (need h*w <= 0.1)")


def solution_basis_and_residual(mode: DiracMode, t_span: float = 4.0, h: float | None = None,
                                levels: int = 3, extra: dict | None = None) -> dict:
    """EL residuals of the four basis solutions on grids h, h/2, ... with order fits."""
    w = max(mode.omega, 1e-3)
    h = 0.1 / w if h is None else h
    _check_resolution(mode, h)
    sols = dict(basis_solutions(mode))
    if extra:
        sols.update(extra)
    out = {}
    for name, sol in sols.items():
        scale = max(1.0, t_span) * max(w, 1.0) ** 2
        res = []
        hs = [h / 2**j for j in range(levels)]
        for hh in hs:
            n = int(round(t_span / hh))
            grid = np.arange(n + 1) * hh
            r = el_residual(mode, sol(grid), hh)
            res.append(float(np.abs(r).max() / scale))
        order = float(np.polyfit(np.log(hs), np.log(np.maximum(res, 1e-300)), 1)[0])
        out[name] = {"h": hs, "residual": res, "order": order}
    return out


# ---------------------------------------------------------------------------
# cutoff profile and the action

@dataclass(frozen=True)
class CutoffProfile:
    """eta(tau) = norm * exp(-delta tau^2); normalized profiles integrate to one."""

    delta: float = 1.0
    normalized: bool = False

    @property
    def norm(self) -> float:
        return math.sqrt(self.delta / math.pi) if self.normalized else 1.0

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.norm * np.exp(-self.delta * tau * tau)

    def hat(self, omega):
        """Fourier transform int eta(tau) e^{i omega tau} d tau."""
        omega = np.asarray(omega, dtype=float)
        return self.norm * math.sqrt(math.pi / self.delta) * np.exp(-omega * omega / (4 * self.delta))

    def hat_derivative(self, omega):
        omega = np.asarray(omega, dtype=float)
        return -omega / (2 * self.delta) * self.hat(omega)

    def width(self, cut: float = 1e-17) -> float:
        return math.sqrt(-math.log(cut) / self.delta)


def smooth_window(t, a: float, b: float):
    """C-infinity bump supported on (a, b) and its derivative."""
    t = np.asarray(t, dtype=float)
    s = (2 * t - (a + b)) / (b - a)
    inside = np.abs(s) < 1
    val = np.zeros_like(t)
    der = np.zeros_like(t)
    si = s[inside]
    e = np.exp(1.0 - 1.0 / (1.0 - si * si))
    val[inside] = e
    der[inside] = e * (-2 * si / (1 - si * si) ** 2) * (2 / (b - a))
    return val, der


def _double_form(chi: np.ndarray, eta: CutoffProfile, h: float) -> complex:
    """h^2 sum_ij chi_i^dagger eta(t_i - t_j) chi_j using FFT convolution."""
    n = len(chi)
    lags = np.arange(-(n - 1), n) * h
    kern = eta(lags)
    total = 0.0 + 0.0j
    for c in range(chi.shape[1]):
        conv = signal.fftconvolve(chi[:, c], kern, mode="valid") if n > 1 else chi[:, c] * kern
        total += np.vdot(chi[:, c], conv)
    return complex(h * h * total)


def action_mode(samples: np.ndarray, mode: DiracMode, eta: CutoffProfile, h: float) -> float:
    """Double trapezoid quadrature of <(iD - m) psi(t)| gamma0 eta(t - t') (iD - m) psi(t')>.

    ``samples`` must vanish near both ends of the grid (compact support).
    The derivative uses fourth-order central differences.
    """
    s = np.asarray(samples, dtype=complex)
    if not np.any(s):
        return 0.0
    d1, _ = fd_derivatives(s, h)
    chi = d1 @ (1j * GAMMA0).T + s[2:-2] @ mode.B.T
    # <<a| gamma0 b>> = a^dagger b
    val = _double_form(chi, eta, h)
    if abs(val.imag) > 1e-10 * max(abs(val.real), 1e-300):
        raise QuadratureError(f"action is not real (imaginary part {val.imag:.3e})")
    return float(val.real)


def windowed_rewrite_action(sol: ModeSolution, eta: CutoffProfile, a: float, b: float, h: float) -> float:
    """Action of theta psi written as the form in i gamma0 (theta' psi + theta psi2)."""
    n = int(round((b - a) / h))
    grid = a + np.arange(n + 1) * h
    th, dth = smooth_window(grid, a, b)
    chi = (dth[:, None] * sol(grid) + th[:, None] * sol.second(grid)) @ (1j * GAMMA0).T
    return float(_double_form(chi, eta, h).real)


def windowed_direct_action(sol: ModeSolution, eta: CutoffProfile, a: float, b: float, h: float) -> float:
    """Action of theta psi with (iD - m) applied by the product rule."""
    n = int(round((b - a) / h))
    grid = a + np.arange(n + 1) * h
    th, dth = smooth_window(grid, a, b)
    der = dth[:, None] * sol(grid) + th[:, None] * sol.derivative(grid)
    chi = der @ (1j * GAMMA0).T + (th[:, None] * sol(grid)) @ sol.mode.B.T
    return float(_double_form(chi, eta, h).real)


def random_windowed_actions(mode: DiracMode, eta: CutoffProfile, rng: np.random.Generator, count: int = 200,
                            a: float = 0.0, b: float = 6.0, h: float = 0.02) -> dict:
    vals = []
    norms = []
    for _ in range(count):
        c = rng.normal(size=4) + 1j * rng.normal(size=4)
        sol = ModeSolution(mode, tuple(c))
        vals.append(windowed_rewrite_action(sol, eta, a, b, h))
        grid = a + np.arange(int(round((b - a) / h)) + 1) * h
        th, _ = smooth_window(grid, a, b)
        norms.append(float(h * np.sum(np.abs(th[:, None] * sol(grid)) ** 2)))
    zero = windowed_rewrite_action(ModeSolution(mode, (0, 0, 0, 0)), eta, a, b, h)
    vals = np.array(vals)
    return {"count": count, "min": float(vals.min()), "min_relative": float((vals / np.array(norms)).min()),
            "all_positive": bool(np.all(vals > 0)), "zero_action": float(zero)}


# ---------------------------------------------------------------------------
# conserved commutator inner product

def dirac_commutator(psi: ModeSolution, phi: ModeSolution, eta: CutoffProfile, t2: float) -> complex:
    """-i [int dt' eta(t2 - t') (psi(t2)^+ phi2(t') - psi2(t2)^+ phi(t'))
    + int dt eta(t - t2) (psi(t)^+ phi2(t2) - psi2(t)^+ phi(t2))] by adaptive quadrature."""
    L = eta.width(1e-18)
    p, p2 = psi(t2), psi.second(t2)
    f, f2 = phi(t2), phi.second(t2)

    def integrand(tp):
        a = np.vdot(p, phi.second(tp)) - np.vdot(p2, phi(tp))
        b = np.vdot(psi(tp), f2) - np.vdot(psi.second(tp), f)
        return eta(t2 - tp) * (a + b)

    opts = dict(limit=400, epsabs=1e-14, epsrel=1e-13)
    re = integrate.quad(lambda s: float(integrand(s).real), t2 - L, t2 + L, **opts)[0]
    im = integrate.quad(lambda s: float(integrand(s).imag), t2 - L, t2 + L, **opts)[0]
    return complex(-1j * (re + 1j * im))


def _convolve_closed(sol: ModeSolution, eta: CutoffProfile, t2: float, part: str) -> np.ndarray:
    """(eta * f)(t2) for f = psi2 ('second') or psi ('full') in closed form."""
    up, um = sol.mode.spinors
    w = sol.mode.omega
    ap, am, bp, bm = sol.coeffs
    out = np.zeros(2, complex)
    for nu, u, a, b in ((w, up, ap, bp), (-w, um, am, bm)):
        e = np.exp(-1j * nu * t2)
        if part == "second":
            out += b * eta.hat(nu) * e * u
        else:
            out += (a * eta.hat(nu) + b * (t2 * eta.hat(nu) + 1j * eta.hat_derivative(nu))) * e * u
    return out


def dirac_commutator_closed(psi: ModeSolution, phi: ModeSolution, eta: CutoffProfile, t2: float) -> complex:
    """Gaussian closed form: convolution acts as multiplication by eta-hat on each frequency."""
    p, p2 = psi(t2), psi.second(t2)
    f, f2 = phi(t2), phi.second(t2)
    cf2 = _convolve_closed(phi, eta, t2, "second")
    cf = _convolve_closed(phi, eta, t2, "full")
    cp = _convolve_closed(psi, eta, t2, "full")
    cp2 = _convolve_closed(psi, eta, t2, "second")
    return complex(-1j * (np.vdot(p, cf2) - np.vdot(p2, cf) + np.vdot(cp, f2) - np.vdot(cp2, f)))


def conservation_report(psi: ModeSolution, phi: ModeSolution, eta: CutoffProfile, times=None) -> dict:
    times = np.linspace(-2.0, 3.0, 10) if times is None else np.asarray(times, float)
    vals = np.array([dirac_commutator(psi, phi, eta, t) for t in times])
    closed = np.array([dirac_commutator_closed(psi, phi, eta, t) for t in times])
    herm = np.array([np.conj(dirac_commutator(phi, psi, eta, t)) for t in times[:2]])
    scale = max(float(np.linalg.norm(psi.coeffs) * np.linalg.norm(phi.coeffs) * max(1.0, float(eta.hat(0)))), 1e-300)
    return {
        "times": times.tolist(),
        "values": vals,
        "drift": float(np.abs(vals - vals[0]).max() / scale),
        "closed_form_mismatch": float(np.abs(vals - closed).max() / scale),
        "hermiticity": float(np.abs(vals[:2] - herm).max() / scale),
        "scale": scale,
    }


def positive_arrangement(psi_d: ModeSolution, eta: CutoffProfile, t2: float = 0.0,
                         lams=(1e-3, 5e-4)) -> dict:
    """Linear coefficient of <psi|psi> for psi = psi^D + i lam t psi^D."""
    ap, am, _, _ = psi_d.coeffs
    vals = []
    for lam in lams:
        s = ModeSolution(psi_d.mode, (ap, am, 1j * lam * ap, 1j * lam * am))
        vals.append(dirac_commutator(s, s, eta, t2).real)
    l1, l2 = lams
    lin = (vals[0] * l2**2 - vals[1] * l1**2) / (l1 * l2**2 - l2 * l1**2)
    w = psi_d.mode.omega
    predicted = 4 * (abs(ap) ** 2 * float(eta.hat(w)) + abs(am) ** 2 * float(eta.hat(-w)))
    l2norm = 4 * float(np.vdot(psi_d(t2), psi_d(t2)).real)
    return {"linear_coefficient": float(lin), "predicted": predicted, "l2_form": l2norm,
            "relative_to_l2": float(abs(lin - l2norm) / l2norm)}


def dirac_sequence_sweep(psi_d: ModeSolution, deltas=(1.0, 10.0, 100.0, 1000.0), t2: float = 0.0) -> list:
    return [dict(delta=float(d), **positive_arrangement(psi_d, CutoffProfile(d, normalized=True), t2)) for d in deltas]


# ---------------------------------------------------------------------------
# Bessel kernels

def bessel_T_a(a: float, xi2: float, eps: int = 1, lightcone_tol: float = 1e-12) -> complex:
    """Fourier transform of the lower mass shell of mass squared a, away from the light cone.

    Timelike (xi2 > 0): (sqrt(a)/16 pi^2) (Y1(z) + i eps J1(z)) / sqrt(xi2), z = sqrt(a xi2).
    Spacelike (xi2 < 0): (sqrt(a)/8 pi^3) K1(sqrt(-a xi2)) / sqrt(-xi2).
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if abs(xi2) < lightcone_tol:
        raise LightConeError("T_a is singular on the light cone")
    if xi2 > 0:
        z = math.sqrt(a * xi2)
        return complex(math.sqrt(a) / (16 * math.pi**2) * (special.y1(z) + 1j * eps * special.j1(z)) / math.sqrt(xi2))
    z = math.sqrt(-a * xi2)
    return complex(math.sqrt(a) / (8 * math.pi**3) * special.k1(z) / math.sqrt(-xi2))


def bessel_T_a_vec(a, xi2, eps: int = 1):
    """Vectorized timelike branch."""
    z = np.sqrt(np.asarray(a) * np.asarray(xi2))
    return np.sqrt(a) / (16 * np.pi**2) * (special.y1(z) + 1j * eps * special.j1(z)) / np.sqrt(xi2)


def envelope_exponent(a: float = 1.0, q_lo: float = 1e2, q_hi: float = 1e3, num: int = 60) -> dict:
    qs = np.logspace(math.log10(q_lo), math.log10(q_hi), num)
    vals = np.abs([bessel_T_a(a, q) for q in qs])
    slope = float(np.polyfit(np.log(qs), np.log(vals), 1)[0])
    asym = np.array([a**0.25 / q**0.75 for q in qs]) * math.sqrt(2 / math.pi) / (16 * math.pi**2)
    envelope_ratio = vals / asym
    return {"slope": slope, "asymptotic_ratio_spread": float(np.ptp(envelope_ratio) / envelope_ratio.mean())}


def spacelike_decay(a: float = 1.0, r_lo: float = 40.0, r_hi: float = 120.0, num: int = 40) -> dict:
    rs = np.linspace(r_lo, r_hi, num)
    vals = np.array([abs(bessel_T_a(a, -r * r)) for r in rs])
    slope = float(np.polyfit(rs, np.log(vals), 1)[0])
    return {"slope": slope, "expected": -math.sqrt(a)}


def rescaling_identity(a: float, xi2: float) -> float:
    """T_{4a}(xi2/4) = 4 T_a(xi2): relative mismatch."""
    lhs = bessel_T_a(4 * a, xi2 / 4)
    rhs = 4 * bessel_T_a(a, xi2)
    return float(abs(lhs - rhs) / max(abs(rhs), 1e-300))


@dataclass(frozen=True)
class MassProfile:
    """Profiles f(a) vanishing at a0 with a Gaussian tail, truncated at a0 + 8 width.

    'kinked': c (a - a0) g(a), derivative jump c at a0.
    'smooth': (a - a0)^2 g(a) / width, continuous derivative (jump 0).
    Here g(a) = exp(-((a - a0)/width)^2), so the truncation error is below e^-64.
    """

    a0: float = 1.0
    width: float = 1.0
    c: float = 1.0
    kind: str = "kinked"

    @property
    def jump(self) -> float:
        return self.c if self.kind == "kinked" else 0.0

    @property
    def support(self) -> tuple[float, float]:
        return self.a0, self.a0 + 8.0 * self.width

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        d = a - self.a0
        g = np.exp(-(d / self.width) ** 2)
        inside = (d > 0) & (a < self.support[1])
        if self.kind == "kinked":
            val = self.c * d * g
        elif self.kind == "smooth":
            val = self.c * d * d * g / self.width
        else:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        return np.where(inside, val, 0.0)


def superposed_kernel(profile: MassProfile, q: float) -> complex:
    """U(q) = int f(a) T_a(q) da on the timelike side (adaptive Gauss-Kronrod)."""
    lo, hi = profile.support
    grid = np.linspace(lo, hi, 257)
    scale = float(np.abs(profile(grid) * bessel_T_a_vec(grid, q)).max() * (hi - lo))
    vals = []
    for part in (np.real, np.imag):
        val, err = integrate.quad(lambda a: float(part(profile(a) * bessel_T_a_vec(a, q))), lo, hi,
                                  limit=4000, epsabs=1e-13 * scale, epsrel=1e-11, points=[lo + 1e-3 * (hi - lo)])
        if not np.isfinite(val) or err > 1e-8 * scale:
            raise QuadratureError(f"oscillatory quadrature did not converge at xi^2={q:g}; refine the grid")
        vals.append(val)
    return complex(vals[0] + 1j * vals[1])


def _dirac_matrices_4d():
    I2, Z2 = np.eye(2), np.zeros((2, 2))
    g0 = np.block([[I2, Z2], [Z2, -I2]]).astype(complex)
    sig = [np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.array([[1, 0], [0, -1]])]
    return [g0] + [np.block([[Z2, s], [-s, Z2]]).astype(complex) for s in sig]


_METRIC = np.diag([1.0, -1.0, -1.0, -1.0])


def kernel_P(xi: np.ndarray, m: float = 1.0) -> np.ndarray:
    """P_m = (i dslash_x + m) T_{m^2} at a timelike separation xi = y - x."""
    gs = _dirac_matrices_4d()
    q = float(xi @ _METRIC @ xi)
    eps = 1 if xi[0] > 0 else -1
    a = m * m
    z = math.sqrt(a * q)
    F1 = special.y1(z) + 1j * eps * special.j1(z)
    F0 = special.y0(z) + 1j * eps * special.j0(z)
    T = a / (16 * math.pi**2) * F1 / z
    dTdz = a / (16 * math.pi**2) * (F0 / z - 2 * F1 / z**2)
    dTdq = dTdz * a / (2 * z)
    xislash = sum(_METRIC[mu, mu] * xi[mu] * gs[mu] for mu in range(4))
    return -2j * dTdq * xislash + m * T * np.eye(4)


def chain_exponents(m: float = 1.0, direction=(1.0, 0.3, 0.2, 0.0), q_lo: float = 1e3, q_hi: float = 1e4,
                    num: int = 40) -> dict:
    """Envelope exponents (in xi^2) of P, M = PP - tr/4 and Q = M P along a timelike ray."""
    v = np.asarray(direction, float)
    norm = v @ _METRIC @ v
    if norm <= 0:
        raise ValueError("direction must be timelike")
    qs = np.logspace(math.log10(q_lo), math.log10(q_hi), num)
    nP, nM, nQ = [], [], []
    for q in qs:
        xi = v * math.sqrt(q / norm)
        Pxy, Pyx = kernel_P(xi, m), kernel_P(-xi, m)
        A = Pxy @ Pyx
        M = A - np.trace(A) / 4 * np.eye(4)
        nP.append(np.linalg.norm(Pxy, 2))
        nM.append(np.linalg.norm(M, 2))
        nQ.append(np.linalg.norm(M @ Pxy, 2))
    fit = lambda y: float(np.polyfit(np.log(qs), np.log(y), 1)[0])  # noqa: E731
    eP, eM, eQ = fit(nP), fit(nM), fit(nQ)
    return {"P": eP, "M": eM, "Q": eQ, "difference": eQ - eP, "q": qs.tolist(),
            "norm_P": nP, "norm_Q": nQ}


def kernel_asymptotics(profile: MassProfile, q_grid=None) -> dict:
    """Ratio U / (c a0 T_{a0} / xi^2) on a timelike grid and its plateau over the largest decade."""
    q_grid = np.logspace(1, 5, 41) if q_grid is None else np.asarray(q_grid, float)
    c = profile.c
    U = np.array([superposed_kernel(profile, q) for q in q_grid])
    T0 = np.array([bessel_T_a(profile.a0, q) for q in q_grid])
    ratio = U / (c * profile.a0 * T0 / q_grid)
    top = q_grid >= q_grid.max() / 10
    tail = ratio[top]
    ref = tail[-1]
    spread = float(np.abs(tail - ref).max() / max(abs(ref), 1e-300))
    return {
        "q": q_grid.tolist(),
        "ratio": ratio,
        "plateau_value": complex(ref),
        "plateau_spread": spread,
        "tail_modulus": np.abs(tail).tolist(),
    }
