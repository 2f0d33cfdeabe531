"""Axisymmetric twistor correspondence.

Points of CP2 are written either in homogeneous coordinates ``(z, zt, z0)``
adapted to the circle action (``d/dtheta = i(z d/dz - zt d/dzt)``) or as
``(z1, z2, z3)`` with ``z = z1 + i z2``, ``zt = z1 - i z2``, ``z3 = z0``,
so that the conic is ``z1^2 + z2^2 + z3^2 = z zt + z0^2 = 0``. Away from the
exceptional orbits the chart is ``(w, xi) = (z0^2/(z0^2 + z zt), z/z0)``.

A deformed real slice is a curve ``gamma`` in the ``w``-sphere together with
a real function ``g``; the disks are found by a Riemann map onto the
complement of ``gamma([0, phi])`` followed by two abelian lifting problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .disks import FourierLoop, project_negative
from .errors import (
    ChartError,
    ConvergenceError,
    DomainError,
    ModelMismatchError,
    PolarLocusError,
    PreconditionError,
    ZollkitError,
)
from .zoll import AxisymProfiles, ZollOrbit, bump, bump_derivative

TWO_PI = 2.0 * np.pi
HALF_PI = 0.5 * np.pi
PHI_STEP = 2.5e-4  # Richardson step in phi; truncation ~ step^4, map noise ~ 1e-13/step


# ---------------------------------------------------------------------------
# the round model
# ---------------------------------------------------------------------------

def round_chart(z, zt, z0):
    """``(w, xi)`` of a homogeneous point; ``z0 = 0`` gives ``(0, inf)``."""
    z, zt, z0 = complex(z), complex(zt), complex(z0)
    den = z0 * z0 + z * zt
    if den == 0:
        raise ChartError("point lies on the conic z zt + z0^2 = 0")
    if z0 == 0:
        return 0j, complex(np.inf)
    return z0 * z0 / den, z / z0


def round_disk(phi, theta, zeta):
    """The round disk through ``(phi, theta)`` at fiber coordinate ``zeta``."""
    phi, theta = np.asarray(phi, float), np.asarray(theta, float)
    zeta = np.asarray(zeta, complex)
    s, c = np.sin(phi), np.cos(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = zeta ** 2 * s ** 2 / (1.0 + zeta ** 2)
        xi = np.exp(1j * theta) * (zeta * c + 1j) / (zeta * s)
    return w, xi


def conserved_w_check(p: AxisymProfiles, orbit: ZollOrbit, n: int = 2001) -> float:
    """Max drift of ``w = zeta^2 sin^2 phi/(1 + zeta^2)`` along a round orbit.

    In the flow variables ``zeta = -tan psi`` so ``w = sin^2 phi sin^2 psi``.
    """
    if not p.is_round:
        raise PreconditionError("conserved w check needs the round profiles")
    _, y = orbit.sample(n)
    w = np.sin(y[0]) ** 2 * np.sin(y[2]) ** 2
    return float(np.max(np.abs(w - w[0])))


# ---------------------------------------------------------------------------
# real-slice data
# ---------------------------------------------------------------------------

def _reflect(phi):
    phi = np.asarray(phi, float)
    return np.where(phi > HALF_PI, np.pi - phi, phi)


@dataclass(frozen=True)
class RealSliceData:
    """``w = gamma(phi)``, ``|xi|^2 = e^{g(phi)} |(1 - gamma)/gamma|`` on
    ``[0, pi/2]``, extended to ``[0, pi]`` by ``phi -> pi - phi``."""

    gamma_fn: Callable
    dgamma_fn: Callable
    g_fn: Callable
    support: tuple = (0.0, HALF_PI)
    name: str = "custom"

    def gamma(self, phi):
        return self.gamma_fn(_reflect(phi))

    def dgamma(self, phi):
        phi = np.asarray(phi, float)
        return np.where(phi > HALF_PI, -1.0, 1.0) * self.dgamma_fn(_reflect(phi))

    def g(self, phi):
        return self.g_fn(_reflect(phi))

    @property
    def is_round_curve(self) -> bool:
        return self.name.startswith("round")

    @classmethod
    def round(cls, g_amp: float = 0.0, g_center: float = 0.8, g_width: float = 0.3) -> "RealSliceData":
        return cls.bumped(0.0, 0.8, 0.3, g_amp, g_center, g_width)

    @classmethod
    def bumped(cls, amp: complex = 0.0, center: float = 0.8, width: float = 0.3,
               g_amp: float = 0.0, g_center: float = 0.8, g_width: float = 0.3) -> "RealSliceData":
        """``gamma = sin^2 phi + amp B(phi; center, width)``, ``g = g_amp B(...)``."""
        amp = complex(amp)
        for c, d in ((center, width), (g_center, g_width)):
            if not (0.0 < c - d and c + d < HALF_PI):
                raise ValueError("bump support must lie inside (0, pi/2)")

        def gam(phi):
            return np.sin(phi) ** 2 + amp * bump(phi, center, width)

        def dgam(phi):
            return np.sin(2 * phi) + amp * bump_derivative(phi, center, width)

        def g(phi):
            return g_amp * bump(phi, g_center, g_width)

        lo = min(center - width if amp else HALF_PI, g_center - g_width if g_amp else HALF_PI)
        hi = max(center + width if amp else 0.0, g_center + g_width if g_amp else 0.0)
        name = "round" if amp == 0 else "bump"
        return cls(gam, dgam, g, (lo, hi), name)

    def validate(self, n: int = 401) -> None:
        if abs(self.gamma(0.0)) > 1e-14 or abs(self.gamma(HALF_PI) - 1.0) > 1e-14:
            raise ValueError("gamma must run from 0 to 1")
        phi = np.linspace(0.0, HALF_PI, n)
        gm = self.gamma(phi)
        d = np.abs(gm[:, None] - gm[None, :]) + np.eye(n)
        if np.min(d) <= 0:
            raise ValueError("gamma is not injective on the samples")


# ---------------------------------------------------------------------------
# the conformal disk projection
# ---------------------------------------------------------------------------

def conformal_v(w, phi, slice_: RealSliceData):
    """``v = sqrt(w/(gamma(phi) - w))`` on the branch with ``v sqrt(gamma(phi))``
    in the upper half-plane (the side of the slit containing the disk)."""
    w = np.asarray(w, complex)
    gp = complex(slice_.gamma(phi))
    den = gp - w
    if np.any(den == 0):
        raise DomainError("w equals gamma(phi): v has a pole there")
    v = np.sqrt(w / den)
    flip = np.imag(v * np.sqrt(gp)) < 0
    return np.where(flip, -v, v)


def _slit_image(slice_: RealSliceData, phi: float, s):
    """Image of ``gamma([0, phi])`` in the v-plane, parametrized by ``s in (-phi, phi)``."""
    gp = complex(slice_.gamma(phi))
    a = np.abs(s)
    gs = slice_.gamma(a)
    return np.sign(s) * np.sqrt(gs / (gp - gs))


@dataclass
class DiskProjectionMap:
    """Conformal map from the upper half-plane to the complement of
    ``gamma([0, phi])``, normalized by ``w = zeta^2 sin^2 phi + O(zeta^3)``
    at 0 and ``w -> gamma(phi)`` at infinity."""

    phi: float
    slice: RealSliceData
    coeffs: np.ndarray         # log(g(z)/z) = sum c_k z^k
    rot: complex               # disk rotation before the Theodorsen map
    x0: float
    xinf: float
    lam: float
    history: list = field(default_factory=list)
    k: float = float("nan")

    # composite pieces ------------------------------------------------------
    def _A(self, zeta):
        return (self.xinf * self.lam * zeta + self.x0) / (self.lam * zeta + 1.0)

    def _dA(self, zeta):
        return self.lam * (self.xinf - self.x0) / (self.lam * zeta + 1.0) ** 2

    def _g(self, z):
        return z * np.exp(np.polynomial.polynomial.polyval(z, self.coeffs))

    def _dg(self, z):
        dc = np.polynomial.polynomial.polyder(self.coeffs)
        return np.exp(np.polynomial.polynomial.polyval(z, self.coeffs)) * (
            1.0 + z * np.polynomial.polynomial.polyval(z, dc))

    def _chain(self, zeta):
        zeta = np.asarray(zeta, complex)
        x = self._A(zeta)
        zc = (x - 1j) / (x + 1j)
        z = self.rot * zc
        b = self._g(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = 1j * (1.0 + b) / (1.0 - b)
        return zeta, x, zc, z, b, v

    def v(self, zeta):
        return self._chain(zeta)[-1]

    def dv(self, zeta):
        zeta, x, zc, z, b, v = self._chain(zeta)
        return (2j / (1.0 - b) ** 2) * self._dg(z) * self.rot * (2j / (x + 1j) ** 2) * self._dA(zeta)

    def w(self, zeta):
        v = self.v(zeta)
        gp = complex(self.slice.gamma(self.phi))
        return gp * v * v / (1.0 + v * v)

    def dw(self, zeta):
        """``dw/dzeta``."""
        v = self.v(zeta)
        gp = complex(self.slice.gamma(self.phi))
        return 2.0 * gp * v / (1.0 + v * v) ** 2 * self.dv(zeta)

    __call__ = w


def _theodorsen(logrho: Callable, n: int, tol: float, max_iter: int):
    sigma = TWO_PI * np.arange(n) / n
    k = np.fft.fftfreq(n, 1.0 / n)
    conj = -1j * np.sign(k)
    th = sigma.copy()
    hist = []
    for _ in range(max_iter):
        L = logrho(np.mod(th, TWO_PI))
        new = sigma + np.real(np.fft.ifft(conj * np.fft.fft(L)))
        d = float(np.max(np.abs(new - th)))
        hist.append(d)
        th = new
        if d < tol:
            return sigma, th, L, hist
    raise ConvergenceError("boundary-correspondence iteration did not converge", hist)


def disk_projection(slice_: RealSliceData, phi: float, resolution: int = 1024,
                    tol: float = 1e-14, max_iter: int = 200, n_curve: int = 32001) -> DiskProjectionMap:
    """Numerical conformal map via the conjugate-function iteration on the
    disk image ``m(V_phi)`` with ``m(v) = (v - i)/(v + i)``."""
    phi = float(phi)
    if not (0.0 < phi <= HALF_PI):
        raise DomainError("phi must lie in (0, pi/2]")
    if phi == HALF_PI and abs(complex(slice_.gamma(phi)) - 1.0) < 1e-15:
        pass
    # boundary of m(V_phi)
    tau = np.linspace(-1.0, 1.0, n_curve)[1:-1]
    s = np.sign(tau) * phi * (1.0 - (1.0 - np.abs(tau)) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = _slit_image(slice_, phi, s)
    # near the ends gamma(s) rounds to gamma(phi); those points sit at b = 1 anyway
    c = c[np.isfinite(c) & (np.abs(c) < 1e12)]
    b = (c - 1j) / (c + 1j)
    alpha = np.unwrap(np.angle(b))
    lr = np.log(np.abs(b))
    if alpha[-1] < alpha[0]:
        alpha, lr = alpha[::-1], lr[::-1]
    alpha = alpha - TWO_PI * np.floor(alpha[0] / TWO_PI)
    if not (np.all(np.diff(alpha) > 0) and alpha[-1] < TWO_PI):
        raise ConvergenceError("disk image is not star-shaped about its center", [])
    a_ext = np.concatenate([[0.0], alpha, [TWO_PI]])
    l_ext = np.concatenate([[0.0], lr, [0.0]])
    spl = CubicSpline(a_ext, l_ext, bc_type="periodic")
    n = 2 * resolution
    sigma, th, L, hist = _theodorsen(spl, n, tol, max_iter)
    ak = np.fft.fft(L) / n
    coeffs = np.concatenate([[ak[0].real], 2.0 * ak[1:resolution]])
    # boundary points of 0 (theta = pi) and infinity (theta = 0)
    dth = th - sigma
    k = np.fft.fftfreq(n, 1.0 / n)
    dk = np.fft.fft(dth) / n

    def theta_of(x):
        return x + np.real(np.exp(1j * np.outer(np.atleast_1d(x), k)) @ dk)[0]

    sm = brentq(lambda x: theta_of(x) - np.pi, 0.0, TWO_PI)
    sp = brentq(lambda x: theta_of(x) - TWO_PI, np.pi, 3 * np.pi)
    rho_ang = 0.5 * (sp + sm) + np.pi
    rot = np.exp(1j * rho_ang)

    def xcoord(sig):
        return -1.0 / np.tan(0.5 * (sig - rho_ang))

    x0, xinf = float(xcoord(sm)), float(xcoord(sp))
    m = DiskProjectionMap(phi, slice_, coeffs, rot, x0, xinf, 1.0, hist)
    # fix the scale from |v'(0)| = sin(phi)/|sqrt(gamma(phi))|
    gp = complex(slice_.gamma(phi))
    target = np.sin(phi) / np.sqrt(abs(gp))
    m.lam = 1.0
    d1 = abs(m.dv(0.0))
    lam = target / d1
    m.lam = lam if (xinf - x0) > 0 else -lam
    if m.lam * (m.xinf - m.x0) <= 0:
        raise ZollkitError("normalization produced an orientation-reversing map")
    m.k = _k_value(m)
    return m


def _k_value(m: DiskProjectionMap) -> float:
    """``k`` in ``w = gamma - k gamma' zeta^-2 + ...`` (Richardson at two radii)."""
    gp = complex(m.slice.gamma(m.phi))
    dgp = complex(m.slice.dgamma(m.phi))
    if abs(dgp) < 1e-14:
        return float("nan")
    est = []
    for R in (1e3, 2e3):
        zeta = 1j * R
        est.append((gp - m.w(zeta)) * zeta * zeta / dgp)
    k = 2 * est[1] - est[0]
    return float(k.real)


def round_diskmap_error(phi: float, zetas, resolution: int = 1024) -> float:
    """Sup deviation of :func:`disk_projection` from the closed form."""
    m = disk_projection(RealSliceData.round(), phi, resolution)
    zetas = np.asarray(zetas, complex)
    exact = round_disk(phi, 0.0, zetas)[0]
    return float(np.max(np.abs(m.w(zetas) - exact)))


@lru_cache(maxsize=512)
def _cached_projection(slice_: RealSliceData, phi: float, resolution: int) -> DiskProjectionMap:
    return disk_projection(slice_, phi, resolution)


def s_function(slice_: RealSliceData, diskmap: DiskProjectionMap, zeta, tol: float = 1e-8):
    """Parameter ``s in [0, phi]`` with ``gamma(s) = w(zeta, phi)`` for real ``zeta``
    (nearest grid sample, then Gauss-Newton along the curve)."""
    zeta = np.atleast_1d(np.asarray(zeta, float))
    phi = diskmap.phi
    out = np.full(zeta.shape, phi)
    fin = np.isfinite(zeta)
    if not np.any(fin):
        return out
    w = diskmap.w(zeta[fin])
    grid = np.linspace(0.0, phi, 4001)
    gg = slice_.gamma(grid)
    s = grid[np.argmin(np.abs(gg[None, :] - w[:, None]), axis=1)]
    for _ in range(40):
        r = slice_.gamma(s) - w
        d = slice_.dgamma(s)
        step = np.real(np.conj(d) * r) / np.maximum(np.abs(d) ** 2, 1e-300)
        s = np.clip(s - step, 0.0, phi)
        if np.max(np.abs(step)) < 1e-16:
            break
    err = np.abs(slice_.gamma(s) - w)
    if np.max(err) > tol:
        raise DomainError(f"w is off the curve by {np.max(err):.2e}")
    out[fin] = s
    return out


def boundary_on_curve_error(diskmap: DiskProjectionMap, n: int = 41) -> float:
    xs = np.tan(np.linspace(-1.5, 1.5, n))
    s = s_function(diskmap.slice, diskmap, xs, tol=np.inf)
    return float(np.max(np.abs(diskmap.slice.gamma(s) - diskmap.w(xs))))


# ---------------------------------------------------------------------------
# lifts
# ---------------------------------------------------------------------------

@dataclass
class LiftG:
    """Holomorphic ``G`` on the upper half-plane with prescribed real part on
    the real axis, stored as a power series in ``Z = (i - zeta)/(i + zeta)``."""

    coeffs: np.ndarray

    def __call__(self, zeta):
        Z = (1j - np.asarray(zeta, complex)) / (1j + np.asarray(zeta, complex))
        return np.polynomial.polynomial.polyval(Z, self.coeffs)

    def dzeta(self, zeta):
        zeta = np.asarray(zeta, complex)
        Z = (1j - zeta) / (1j + zeta)
        dc = np.polynomial.polynomial.polyder(self.coeffs)
        return np.polynomial.polynomial.polyval(Z, dc) * (-2j / (zeta + 1j) ** 2)


def lift_G_from_boundary(ufun: Callable, n: int = 512) -> LiftG:
    """``Re G = ufun`` on the real axis, ``Im G(0) = 0``.

    The line is compactified by ``zeta = tan(sigma/2)`` and the nonnegative
    part is taken with the negative-frequency projection.
    """
    sigma = TWO_PI * np.arange(n) / n - np.pi
    sigma = np.roll(sigma, -(n // 2))  # start at sigma = 0
    with np.errstate(over="ignore"):
        x = np.tan(0.5 * sigma)
    u = np.asarray(ufun(x), float)
    loop = FourierLoop.from_periodic_samples(u)
    pos = loop.coeffs - project_negative(loop).coeffs
    K = loop.M // 2
    a = np.array([pos[2 * k + loop.M] for k in range(0, K + 1)])
    coeffs = 2.0 * a
    coeffs[0] = a[0]
    coeffs[0] += -1j * np.imag(np.sum(coeffs))
    return LiftG(coeffs)


def lift_G(slice_: RealSliceData, diskmap: DiskProjectionMap, n: int = 2048) -> LiftG:
    """``Re G(zeta, phi) = g(s(zeta, phi))`` on the real axis."""
    def u(x):
        x = np.asarray(x, float)
        out = np.empty(x.shape)
        fin = np.isfinite(x) & (np.abs(x) < 1e12)
        out[~fin] = slice_.g(diskmap.phi)
        out[fin] = slice_.g(s_function(slice_, diskmap, x[fin], tol=1e-6))
        return out
    return lift_G_from_boundary(u, n)


def poisson_real_part(ufun: Callable, zeta: complex) -> float:
    """Poisson integral of boundary data on the real line (oracle)."""
    xi, y = zeta.real, zeta.imag
    val, _ = quad(lambda x: ufun(x) * y / ((x - xi) ** 2 + y * y) / np.pi, -np.inf, np.inf,
                  limit=400, epsabs=1e-12, epsrel=1e-12)
    return float(val)


def a_of_phi(diskmap: DiskProjectionMap, tol: float = 1e-12) -> complex:
    """Root of ``w(a, phi) = 1`` in the upper half-plane."""
    phi = diskmap.phi
    c = abs(np.cos(phi))
    if c < 1e-8:
        raise DomainError("a is at infinity at phi = pi/2 (the w = 1 boundary case)")
    a = 1j / c
    for _ in range(60):
        r = diskmap.w(a) - 1.0
        a = a - r / diskmap.dw(a)
        if abs(r) < tol * 1e-2:
            break
    if abs(diskmap.w(a) - 1.0) > tol or a.imag <= 0:
        raise ConvergenceError("Newton for a(phi) failed", [abs(diskmap.w(a) - 1.0)])
    return complex(a)


def gamma_lift(a: complex, diskmap: DiskProjectionMap, zeta):
    """``Gamma = i sqrt((1 - zeta/conj a)/(1 - zeta/a) (1 - w)/w)`` on the branch
    asymptotic to ``i/(zeta sin phi)`` at 0."""
    zeta = np.asarray(zeta, complex)
    w = diskmap.w(zeta)
    s = np.sin(diskmap.phi)
    R = (1 - zeta / np.conj(a)) / (1 - zeta / a) * (1 - w) * zeta ** 2 * s ** 2 / w
    return 1j * np.sqrt(R) / (zeta * s)


# ---------------------------------------------------------------------------
# connection coefficients
# ---------------------------------------------------------------------------

def gammas_from_a(a, da, phi):
    """``(Gamma1, Gamma2)`` from ``a`` and ``da/dphi`` (quotient formulas)."""
    a, da = np.asarray(a, complex), np.asarray(da, complex)
    phi = np.asarray(phi, float)
    if np.any(np.abs(a.imag) < 1e-14):
        raise DomainError("Im a must be positive (division by conj(a) - a)")
    s, c = np.sin(phi), np.cos(phi)
    ab, dab = np.conj(a), np.conj(da)
    N, dN = a - ab, da - dab
    m2 = (a * ab).real
    dm2 = (da * ab + a * dab).real
    D = m2 * s
    dD = dm2 * s + m2 * c
    G2 = s / (ab - a) * (dN * D - N * dD) / D ** 2
    q = -(da * s + a * c) / (a * s) ** 2          # d/dphi of 1/(a sin)
    t = ab * q
    G1 = s / (ab - a) * (t - np.conj(t))
    return np.real(G1), np.real(G2)


def a_from_h(h, phi):
    """The gauge-fixed ``a = 1/((h - i)|cos phi|)``."""
    return 1.0 / ((np.asarray(h) - 1j) * np.abs(np.cos(phi)))


def da_from_h(h, dh, phi):
    phi = np.asarray(phi, float)
    c = np.abs(np.cos(phi))
    dc = -np.sign(np.cos(phi)) * np.sin(phi)
    den = (np.asarray(h) - 1j) * c
    return -(np.asarray(dh) * c + (np.asarray(h) - 1j) * dc) / den ** 2


def printed_gammas(h, dh, phi):
    """``(-h' + 2h/(sin cos), cot (1 + h^2))``."""
    phi = np.asarray(phi, float)
    s, c = np.sin(phi), np.cos(phi)
    return -np.asarray(dh) + 2 * np.asarray(h) / (s * c), c / s * (1 + np.asarray(h) ** 2)


def beta_from_a(a, G2):
    return -np.asarray(G2) * np.imag(a)


@dataclass
class GaugeFixed:
    phi: np.ndarray
    h: np.ndarray
    beta_residual: float


def gauge_fix(a_raw, G2_fn: Optional[Callable] = None) -> GaugeFixed:
    """Reparametrize so ``Im(1/a) = -|cos phi|`` (on ``[0, pi/2)``).

    ``a_raw`` are samples over a provisional increasing parameter.
    ``G2_fn(phi, h)`` optionally returns ``Gamma2`` for the beta check; by
    default ``cot(1 + h^2)``.
    """
    a_raw = np.asarray(a_raw, complex)
    inv = 1.0 / a_raw
    if np.any(inv.imag >= 0):
        raise DomainError("Im(1/a) must be negative")
    c = -inv.imag
    if np.any(c > 1):
        raise DomainError("Im(1/a) < -1 has no angle")
    phi = np.arccos(c)
    if not np.all(np.diff(phi) > 0):
        raise DomainError("candidate coordinate is not monotone")
    h = inv.real / np.abs(np.cos(phi))
    G2 = G2_fn(phi, h) if G2_fn else np.cos(phi) / np.sin(phi) * (1 + h * h)
    a = a_from_h(h, phi)
    beta = beta_from_a(a, G2)
    return GaugeFixed(phi, h, float(np.max(np.abs(beta * np.sin(phi) + 1.0))))


@dataclass
class IdentityReport:
    gamma1_printed: float
    gamma2: float
    beta: float
    gamma1_vs_formula: float

    def ok(self, tol: float = 1e-10) -> bool:
        return max(self.gamma1_printed, self.gamma2, self.beta) < tol


def identity_chain(h: Callable, dh: Callable, phis) -> IdentityReport:
    """Compare the quotient formulas at ``a = 1/((h - i)|cos phi|)`` with the
    closed forms. ``gamma1_vs_formula`` compares to ``h' cos - 2h/sin``, the
    value the quotient formulas give for ``phi < pi/2``."""
    phis = np.asarray(phis, float)
    hv, dhv = h(phis), dh(phis)
    a = a_from_h(hv, phis)
    da = da_from_h(hv, dhv, phis)
    G1, G2 = gammas_from_a(a, da, phis)
    P1, P2 = printed_gammas(hv, dhv, phis)
    beta = beta_from_a(a, G2)
    s, c = np.sin(phis), np.cos(phis)
    alt = -np.abs(c) * P1
    return IdentityReport(float(np.max(np.abs(G1 - P1))), float(np.max(np.abs(G2 - P2))),
                          float(np.max(np.abs(beta * s + 1.0))), float(np.max(np.abs(G1 - alt))))


@dataclass
class ConsistencyReport:
    max_deviation: float
    gamma1: float
    gamma2: float
    beta: float


def spray_twistor_coefficients(p: AxisymProfiles, phi):
    """``(Gamma1, Gamma2, theta-coefficient)`` read off the axisymmetric
    spray ``d/dphi + (F - 1)/sin zeta d/dtheta - zeta(Gamma2 zeta^2 + Gamma1 zeta + cot) d/dzeta``."""
    phi = np.asarray(phi, float)
    s = np.sin(phi)
    v = p.values(phi)
    G1 = -(v.dh - 2.0 * v.hc / s) * p.linear_factor(phi)
    G2 = np.cos(phi) / s * (1.0 + v.h ** 2)
    return G1, G2, (v.F - 1.0) / s


def roundtrip_consistency(p: AxisymProfiles, phis) -> ConsistencyReport:
    """Assemble ``(Gamma1, Gamma2, beta)`` from ``a = 1/((h - i)|cos|)`` and
    compare with the spray coefficients of ``p``."""
    phis = np.asarray(phis, float)
    v = p.values(phis)
    a = a_from_h(v.h, phis)
    da = da_from_h(v.h, v.dh, phis)
    G1, G2 = gammas_from_a(a, da, phis)
    beta = beta_from_a(a, G2)
    S1, S2, S3 = spray_twistor_coefficients(p, phis)
    s = np.sin(phis)
    d1 = float(np.max(np.abs(G1 - S1)))
    d2 = float(np.max(np.abs(G2 - S2)))
    db = float(np.max(np.abs((v.F / s + beta) - S3)))
    return ConsistencyReport(max(d1, d2, db), d1, d2, db)


# ---------------------------------------------------------------------------
# reconstruction from the disk maps
# ---------------------------------------------------------------------------

def _richardson(f: Callable, x: float, h: float):
    d1 = (f(x + h) - f(x - h)) / (2 * h)
    d2 = (f(x + 2 * h) - f(x - 2 * h)) / (4 * h)
    return (4 * d1 - d2) / 3


@dataclass
class SprayFit:
    gamma1: float
    gamma2: float
    residual: float


def p_from_diskmap(slice_: RealSliceData, phi: float, zetas=(-1.5, -0.7, -0.3, 0.4, 0.9, 1.8),
                   step: float = PHI_STEP, resolution: int = 1024, tol: float = 1e-6) -> SprayFit:
    """Fit ``p = dw/dphi / dw/dzeta = zeta(G2 zeta^2 + G1 zeta + cot phi)`` on real samples."""
    zetas = np.asarray(zetas, float)
    m = _cached_projection(slice_, float(phi), resolution)
    dphi = _richardson(lambda x: _cached_projection(slice_, float(x), resolution).w(zetas), phi, step)
    p = np.real(dphi / m.dw(zetas))
    cot = np.cos(phi) / np.sin(phi)
    A = np.column_stack([zetas ** 3, zetas ** 2])
    rhs = p - cot * zetas
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    res = float(np.max(np.abs(A @ sol - rhs)))
    if res > tol:
        raise ModelMismatchError(f"p is not of the cubic form (residual {res:.2e})")
    return SprayFit(float(sol[1]), float(sol[0]), res)


def p_at(slice_: RealSliceData, phi: float, zeta, step: float = PHI_STEP, resolution: int = 1024):
    m = _cached_projection(slice_, float(phi), resolution)
    dphi = _richardson(lambda x: _cached_projection(slice_, float(x), resolution).w(zeta), phi, step)
    return dphi / m.dw(zeta)


def a_derivative(slice_: RealSliceData, phi: float, step: float = PHI_STEP, resolution: int = 1024) -> complex:
    return complex(_richardson(lambda x: a_of_phi(_cached_projection(slice_, float(x), resolution)),
                               phi, step))


def F_from_G(slice_: RealSliceData, phi: float, zetas=(0.1, 0.2), step: float = PHI_STEP,
             resolution: int = 1024, tol: float = 1e-6) -> float:
    """``F`` from ``i (d/dphi - p d/dzeta) G = (F/sin phi) zeta``."""
    def G_at(x):
        return lift_G(slice_, _cached_projection(slice_, float(x), resolution))

    G0 = G_at(phi)
    vals = []
    for z in zetas:
        dG = _richardson(lambda x: G_at(x)(z), phi, step)
        p = p_at(slice_, phi, z, step, resolution)
        vals.append(np.sin(phi) * 1j * (dG - p * G0.dzeta(z)) / z)
    vals = np.asarray(vals)
    if np.max(np.abs(vals.imag)) > tol or np.max(np.abs(vals - vals[0])) > tol * max(1.0, abs(vals[0])):
        raise ModelMismatchError(f"i q*Xi G is not linear in zeta: {vals}")
    return float(vals[0].real)


@dataclass
class ReconstructedSpray:
    phi: np.ndarray
    a: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    F: np.ndarray
    beta: np.ndarray
    h: np.ndarray

    def to_csv(self, path) -> None:
        import csv
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["phi", "a_re", "a_im", "Gamma1", "Gamma2", "F", "beta", "h"])
            for i in range(self.phi.size):
                wr.writerow([f"{x:.17g}" for x in (self.phi[i], self.a[i].real, self.a[i].imag,
                                                   self.gamma1[i], self.gamma2[i], self.F[i],
                                                   self.beta[i], self.h[i])])


def reconstruct(slice_: RealSliceData, phis, step: float = PHI_STEP, resolution: int = 1024,
                with_F: bool = True) -> ReconstructedSpray:
    """Per-phi pipeline: disk map, ``a``, ``Gamma`` from the quotient formulas,
    ``beta = -Gamma2 Im a``, ``h = Re(1/a)/|cos|`` and ``F`` from the lift."""
    phis = np.asarray(phis, float)
    a = np.empty(phis.size, complex)
    G1 = np.empty(phis.size)
    G2 = np.empty(phis.size)
    F = np.zeros(phis.size)
    for i, ph in enumerate(phis):
        m = _cached_projection(slice_, float(ph), resolution)
        a[i] = a_of_phi(m)
        da = a_derivative(slice_, ph, step, resolution)
        G1[i], G2[i] = gammas_from_a(a[i], da, ph)
        if with_F:
            F[i] = F_from_G(slice_, ph, step=step, resolution=resolution)
    beta = beta_from_a(a, G2)
    h = np.real(1.0 / a) / np.abs(np.cos(phis))
    return ReconstructedSpray(phis, a, G1, G2, F, beta, h)


# ---------------------------------------------------------------------------
# the symplectic form on CP2 minus the conic
# ---------------------------------------------------------------------------

def to_z123(z, zt, z0):
    """``(z, zt, z0) -> (z1, z2, z3)`` (linear, works on tangent vectors too)."""
    z, zt = np.asarray(z, complex), np.asarray(zt, complex)
    return np.stack([(z + zt) / 2, (z - zt) / 2j, np.asarray(z0, complex) * np.ones_like(z)])


@dataclass(frozen=True)
class SymplecticData:
    lam: float = 1.0
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign flag must be +1 or -1")

    def holomorphic(self, Z, U, V):
        """``lam det[Z, U, V]/(Z.Z)^{3/2}`` on the principal branch."""
        Z, U, V = (np.asarray(x, complex) for x in (Z, U, V))
        q = np.sum(Z * Z, axis=0)
        scale = np.max(np.abs(Z), axis=0) ** 2
        if np.any(np.abs(q) <= 1e-14 * scale):
            raise PolarLocusError("point lies on the conic z1^2 + z2^2 + z3^2 = 0")
        det = (Z[0] * (U[1] * V[2] - U[2] * V[1]) + Z[1] * (U[2] * V[0] - U[0] * V[2])
               + Z[2] * (U[0] * V[1] - U[1] * V[0]))
        return self.lam * det / np.sqrt(q) ** 3

    def __call__(self, Z, U, V):
        return self.sign * np.imag(self.holomorphic(Z, U, V))


def symplectic_eval(Z, U, V, lam: float = 1.0, sign: int = 1):
    return SymplecticData(lam, sign)(Z, U, V)


def normalization_integral(lam: float = 1.0, n: int = 64) -> float:
    """``int_{S^2} lam (x1 dx2^dx3 + ...)``: real part of the holomorphic form
    on the unit sphere (Gauss-Legendre in phi, trapezoid in theta)."""
    x, wts = np.polynomial.legendre.leggauss(n)
    phi = 0.5 * np.pi * (x + 1.0)
    wphi = 0.5 * np.pi * wts
    th = TWO_PI * np.arange(2 * n) / (2 * n)
    P, T = np.meshgrid(phi, th, indexing="ij")
    X = np.stack([np.sin(P) * np.cos(T), np.sin(P) * np.sin(T), np.cos(P)])
    Xp = np.stack([np.cos(P) * np.cos(T), np.cos(P) * np.sin(T), -np.sin(P)])
    Xt = np.stack([-np.sin(P) * np.sin(T), np.sin(P) * np.cos(T), np.zeros_like(P)])
    val = np.real(SymplecticData(lam).holomorphic(X, Xp, Xt))
    return float(np.sum(val * wphi[:, None]) * (TWO_PI / (2 * n)))


def slice_point(slice_: RealSliceData, phi, theta):
    """Homogeneous ``(z1, z2, z3)`` of the deformed real slice at ``(phi, theta)``."""
    phi, theta = np.broadcast_arrays(np.asarray(phi, float), np.asarray(theta, float))
    gm = slice_.gamma(phi)
    r = np.sqrt(np.exp(slice_.g(phi)) * np.abs((1 - gm) / gm))
    xi = r * np.exp(1j * theta)
    zt = (1 - gm) / (gm * xi)
    return to_z123(xi, zt, np.ones_like(xi))


def lagrangian_residual(slice_: RealSliceData, phis=None, thetas=None, omega: SymplecticData = SymplecticData(),
                        step: float = 1e-5) -> float:
    """Max ``|omega(d/dphi, d/dtheta)|`` on the parametrized slice."""
    phis = np.linspace(0.05, HALF_PI - 0.05, 24) if phis is None else np.asarray(phis, float)
    thetas = np.linspace(0.0, TWO_PI, 8, endpoint=False) if thetas is None else np.asarray(thetas, float)
    P, T = np.meshgrid(phis, thetas, indexing="ij")
    Z = slice_point(slice_, P, T)
    Zp = (slice_point(slice_, P + step, T) - slice_point(slice_, P - step, T)) / (2 * step)
    Zt = (slice_point(slice_, P, T + step) - slice_point(slice_, P, T - step)) / (2 * step)
    return float(np.max(np.abs(omega(Z, Zp, Zt))))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
