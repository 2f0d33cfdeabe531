"""Holomorphic disks with boundary on a perturbed Moebius band.

The band ``B`` is the image of ``(theta, t) -> (e^{h1 + i theta}, (t + i h2) e^{i theta/2})``
in the affine chart ``(z1, z2)`` of CP2; the unperturbed band ``h1 = h2 = 0``
is the standard RP2 minus a point. A disk boundary is written
``theta -> (theta + u1, u2)`` in band coordinates, with ``u1`` periodic and
``u2`` anti-periodic (a section of the Moebius line bundle).

Loops are stored on the double cover: mode ``m`` of a :class:`FourierLoop`
has frequency ``m/2``, so periodic loops use even ``m`` and twisted loops
odd ``m``. One FFT kernel serves both.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from .errors import (
    ConvergenceError,
    DomainError,
    PreconditionError,
    ZollkitError,
)

TWO_PI = 2.0 * np.pi
N_TRUNC = 32
C1_THRESHOLD = 0.1
W_MAX = 0.3


# ---------------------------------------------------------------------------
# Fourier loops
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FourierLoop:
    """Loop ``sum_m a_m exp(i m theta / 2)`` for ``|m| <= M``.

    ``kind`` is ``"complex"`` (integer frequencies, complex values),
    ``"real"`` (integer frequencies, real values) or ``"twisted"``
    (half-integer frequencies, real values).
    """

    coeffs: np.ndarray  # index j <-> m = j - M
    kind: str = "complex"

    def __post_init__(self):
        c = np.asarray(self.coeffs, complex)
        if c.ndim != 1 or c.size % 2 == 0:
            raise ValueError("coefficient array must have odd length 2M+1")
        object.__setattr__(self, "coeffs", c)
        if self.kind not in ("complex", "real", "twisted"):
            raise ValueError(f"unknown loop kind {self.kind!r}")

    @property
    def M(self) -> int:
        return (self.coeffs.size - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    def coeff(self, freq: float) -> complex:
        """Coefficient of ``exp(i freq theta)``."""
        m = int(round(2 * freq))
        if abs(m) > self.M:
            return 0j
        return complex(self.coeffs[m + self.M])

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, float)
        ph = np.exp(0.5j * np.multiply.outer(theta, self.modes))
        v = ph @ self.coeffs
        return v.real if self.kind != "complex" else v

    def norm(self) -> float:
        """L2 norm normalized so that ``|e^{i theta}| = 1``."""
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def sup(self, n: int = 512) -> float:
        theta = np.linspace(0.0, 2 * TWO_PI, 2 * n, endpoint=False)
        return float(np.max(np.abs(self(theta))))

    # constructors ------------------------------------------------------------

    @classmethod
    def zeros(cls, N: int, kind: str = "complex") -> "FourierLoop":
        return cls(np.zeros(4 * N + 3, complex), kind)

    @classmethod
    def from_modes(cls, modes: dict, N: int, kind: str = "complex") -> "FourierLoop":
        """``{freq: coefficient}`` with integer or half-integer frequencies."""
        out = cls.zeros(N, kind)
        c = out.coeffs.copy()
        for f, a in modes.items():
            m = int(round(2 * f))
            c[m + out.M] = a
        return cls(c, kind)

    @classmethod
    def from_real(cls, b0: float, b: Sequence[float], c: Sequence[float], N: Optional[int] = None) -> "FourierLoop":
        """``b0 + sum_{l>=1} b_l cos(l theta) + c_l sin(l theta)``."""
        b, c = np.asarray(b, float), np.asarray(c, float)
        N = max(b.size, c.size) if N is None else N
        modes = {0: b0}
        for l in range(1, N + 1):
            bl = b[l - 1] if l <= b.size else 0.0
            cl = c[l - 1] if l <= c.size else 0.0
            modes[l] = 0.5 * (bl - 1j * cl)
            modes[-l] = 0.5 * (bl + 1j * cl)
        return cls.from_modes(modes, N, "real")

    @classmethod
    def from_twisted(cls, bt: Sequence[float], ct: Sequence[float], N: Optional[int] = None) -> "FourierLoop":
        """``sum_{l>=0} bt_l cos((l+1/2) theta) + ct_l sin((l+1/2) theta)``."""
        bt, ct = np.asarray(bt, float), np.asarray(ct, float)
        N = max(bt.size, ct.size) if N is None else N
        modes = {}
        for l in range(N):
            bl = bt[l] if l < bt.size else 0.0
            cl = ct[l] if l < ct.size else 0.0
            modes[l + 0.5] = 0.5 * (bl - 1j * cl)
            modes[-l - 0.5] = 0.5 * (bl + 1j * cl)
        return cls.from_modes(modes, N, "twisted")

    @classmethod
    def from_samples(cls, values, N: int, kind: str = "complex") -> "FourierLoop":
        """Fit from samples on the double-cover grid ``theta_j = 4 pi j / L``.

        Modes are kept up to frequency ``N + 1/2`` and restricted to the
        parity of ``kind``.
        """
        values = np.asarray(values)
        L = values.size
        a = np.fft.fft(values) / L
        M = 2 * N + 1
        if L < 2 * M + 1:
            raise ValueError("not enough samples for the requested truncation")
        m = np.arange(-M, M + 1)
        c = a[m % L]
        if kind in ("real", "complex"):
            c[m % 2 != 0] = 0.0
        else:
            c[m % 2 == 0] = 0.0
        return cls(c, kind)

    @classmethod
    def from_periodic_samples(cls, values) -> "FourierLoop":
        """Fit an integer-frequency loop from samples on ``theta_j = 2 pi j / n``
        (all ``n`` modes kept, Nyquist split evenly)."""
        values = np.asarray(values, complex)
        n = values.size
        a = np.fft.fft(values) / n
        K = n // 2
        c = np.zeros(4 * K + 1, complex)
        for k in range(-K, K + 1):
            c[2 * k + 2 * K] = a[k % n] * (0.5 if (n % 2 == 0 and abs(k) == K) else 1.0)
        return cls(c, "complex")

    def to_real(self):
        """``(b0, b, c)`` of a real periodic loop."""
        N = self.M // 2
        b0 = self.coeff(0).real
        b = np.array([2 * self.coeff(l).real for l in range(1, N + 1)])
        c = np.array([-2 * self.coeff(l).imag for l in range(1, N + 1)])
        return b0, b, c

    def to_twisted(self):
        N = (self.M + 1) // 2
        bt = np.array([2 * self.coeff(l + 0.5).real for l in range(N)])
        ct = np.array([-2 * self.coeff(l + 0.5).imag for l in range(N)])
        return bt, ct

    def check_real(self, tol: float = 1e-12) -> float:
        dev = float(np.max(np.abs(self.coeffs - np.conj(self.coeffs[::-1]))))
        if dev > tol:
            raise ValueError(f"loop is not real-valued (deviation {dev:.3e})")
        return dev


def double_cover_grid(n_per_turn: int) -> np.ndarray:
    """Uniform grid on ``[0, 4 pi)`` with ``n_per_turn`` points per ``2 pi``."""
    return np.arange(2 * n_per_turn) * (2 * TWO_PI / (2 * n_per_turn))


def project_negative(loop: FourierLoop) -> FourierLoop:
    """Negative-frequency projection: keep ``m < 0``."""
    c = loop.coeffs.copy()
    c[loop.modes >= 0] = 0.0
    return FourierLoop(c, "complex")


def project_negative_integral(values) -> np.ndarray:
    """Negative-frequency projection of periodic samples through the
    Cauchy-kernel form ``u/2 - (1/2pi) p.v. int u(phi) K(phi - theta) dphi``
    with ``K(s) = e^{is}/(e^{is} - 1)``.

    ``values`` are samples on ``theta_j = 2 pi j / n``. The principal value
    uses the midpoint rule on the staggered grid, with ``u`` interpolated
    there spectrally.
    """
    u = np.asarray(values, complex)
    n = u.size
    theta = TWO_PI * np.arange(n) / n
    a = np.fft.fft(u) / n
    k = np.fft.fftfreq(n, 1.0 / n)
    mid = theta + np.pi / n
    umid = np.exp(1j * np.outer(mid, k)) @ a
    s = mid[None, :] - theta[:, None]
    kern = np.exp(1j * s) / (np.exp(1j * s) - 1.0)
    return 0.5 * u - (kern @ umid) / n


def mean_part(loop: FourierLoop) -> complex:
    return loop.coeff(0)


def sh_mean(u1: FourierLoop) -> float:
    """``(1/2 pi) int u1``."""
    return float(u1.coeff(0).real)


# ---------------------------------------------------------------------------
# bands
# ---------------------------------------------------------------------------

def _bump1(u):
    inside = np.abs(u) < 1.0
    q = np.where(inside, 1.0 - u * u, 1.0)
    val = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
    return val, val * (-2.0 * u / (q * q))


def _wrap4pi(x):
    return (x + TWO_PI) % (2 * TWO_PI) - TWO_PI


@dataclass(frozen=True)
class BandEmbedding:
    """Functions ``h1`` (periodic) and ``h2`` (twisted) on the strip
    ``R x [-R, R]``: ``h1(theta + 2pi, -t) = h1``, ``h2(theta + 2pi, -t) = -h2``.

    ``grad`` returns ``(h1, h1_theta, h1_t, h2, h2_theta, h2_t)``.
    """

    grad: Callable
    R: float = 2.0
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def h1(self, theta, t):
        return self.grad(theta, t)[0]

    def h2(self, theta, t):
        return self.grad(theta, t)[3]

    def embed(self, theta, t):
        """Band point ``(z1, z2)``."""
        g = self.grad(theta, t)
        return np.exp(g[0] + 1j * theta), (t + 1j * g[3]) * np.exp(0.5j * theta)

    @classmethod
    def zero(cls, R: float = 2.0) -> "BandEmbedding":
        def grad(theta, t):
            z = np.zeros(np.broadcast(np.asarray(theta), np.asarray(t)).shape)
            return z, z, z, z, z, z
        return cls(grad, R, "zero", {})

    @classmethod
    def bump(cls, eps: float, center=(0.0, 0.0), widths=(1.0, 1.0), R: float = 2.0,
             shape: str = "gaussian") -> "BandEmbedding":
        """``h1 = q(theta, t) + q(theta + 2pi, -t)``, ``h2 = q - q(theta + 2pi, -t)``
        with ``q = eps A(theta - c0) T(t - c1)`` and ``A`` 4pi-periodic.

        ``shape="gaussian"`` uses the analytic pair
        ``A = exp(-4(1 - cos(x/2))/w0^2)``, ``T = exp(-x^2/(2 w1^2))``;
        ``shape="compact"`` uses ``exp(1 - 1/(1 - (x/w)^2))`` in both variables.
        """
        eps = float(eps)
        c0, c1 = map(float, center)
        w0, w1 = map(float, widths)
        if shape == "compact":
            if not (0 < w0 < TWO_PI and w1 > 0):
                raise ValueError("compact widths must satisfy 0 < w_theta < 2 pi, w_t > 0")

            def fa(x):
                v, d = _bump1(_wrap4pi(x) / w0)
                return v, d / w0

            def ft(x):
                v, d = _bump1(x / w1)
                return v, d / w1
        elif shape == "gaussian":
            if not (w0 > 0 and w1 > 0):
                raise ValueError("widths must be positive")

            def fa(x):
                v = np.exp(-4.0 * (1.0 - np.cos(0.5 * x)) / w0 ** 2)
                return v, v * (-2.0 * np.sin(0.5 * x) / w0 ** 2)

            def ft(x):
                v = np.exp(-0.5 * (x / w1) ** 2)
                return v, -v * x / w1 ** 2
        else:
            raise ValueError(f"unknown bump shape {shape!r}")

        def q(theta, t):
            a, da = fa(theta - c0)
            b, db = ft(t - c1)
            return eps * a * b, eps * da * b, eps * a * db

        def grad(theta, t):
            theta, t = np.broadcast_arrays(np.asarray(theta, float), np.asarray(t, float))
            p, pth, pt = q(theta, t)
            r, rth, rt = q(theta + TWO_PI, -t)
            return p + r, pth + rth, pt - rt, p - r, pth - rth, pt + rt

        return cls(grad, float(R), "bump",
                   {"eps": eps, "center": (c0, c1), "widths": (w0, w1), "shape": shape})

    @classmethod
    def table(cls, theta, t, h1, h2, R: Optional[float] = None) -> "BandEmbedding":
        """Samples on a grid covering ``[0, 2pi] x [-R, R]``; other points are
        reached through the twist ``(theta, t) -> (theta - 2pi, -t)``."""
        theta, t = np.asarray(theta, float), np.asarray(t, float)
        i1 = RegularGridInterpolator((theta, t), np.asarray(h1, float), method="cubic")
        i2 = RegularGridInterpolator((theta, t), np.asarray(h2, float), method="cubic")
        R = float(np.max(np.abs(t))) if R is None else float(R)
        step = 1e-6

        def base(theta_, t_):
            k = np.floor(theta_ / TWO_PI)
            th = theta_ - TWO_PI * k
            sgn = np.where(k % 2 == 0, 1.0, -1.0)
            tt = np.clip(sgn * t_, t[0], t[-1])  # the difference stencil may poke past the strip edge
            pts = np.stack([th.ravel(), tt.ravel()], axis=-1)
            return i1(pts).reshape(th.shape), sgn * i2(pts).reshape(th.shape)

        def grad(theta_, t_):
            theta_, t_ = np.broadcast_arrays(np.asarray(theta_, float), np.asarray(t_, float))
            a, b = base(theta_, t_)
            ap, bp = base(theta_ + step, t_)
            am, bm = base(theta_ - step, t_)
            at, bt = base(theta_, t_ + step)
            atm, btm = base(theta_, t_ - step)
            return (a, (ap - am) / (2 * step), (at - atm) / (2 * step),
                    b, (bp - bm) / (2 * step), (bt - btm) / (2 * step))

        return cls(grad, R, "table", {})

    @classmethod
    def from_csv(cls, path, R: Optional[float] = None) -> "BandEmbedding":
        """CSV with header ``theta,t,h1,h2`` on a full regular grid."""
        d = np.genfromtxt(path, delimiter=",", names=True)
        th, tt = np.unique(d["theta"]), np.unique(d["t"])
        order = np.lexsort((d["t"], d["theta"]))
        shape = (th.size, tt.size)
        return cls.table(th, tt, d["h1"][order].reshape(shape), d["h2"][order].reshape(shape), R)

    def c1_norm(self, n: int = 201) -> float:
        theta = np.linspace(0.0, TWO_PI, n)
        t = np.linspace(-self.R, self.R, n)
        g = self.grad(*np.meshgrid(theta, t, indexing="ij"))
        return float(max(np.max(np.abs(x)) for x in g))

    def check_symmetry(self, n: int = 41) -> float:
        theta = np.linspace(0.0, TWO_PI, n)
        t = np.linspace(-self.R, self.R, n)
        T, S = np.meshgrid(theta, t, indexing="ij")
        a, b = self.grad(T, S), self.grad(T + TWO_PI, -S)
        return float(max(np.max(np.abs(a[0] - b[0])), np.max(np.abs(a[3] + b[3]))))


# ---------------------------------------------------------------------------
# boundary maps
# ---------------------------------------------------------------------------

def _check_domain(u2_vals, band: BandEmbedding):
    lim = band.R / np.sqrt(np.pi)
    if np.max(np.abs(u2_vals)) > lim:
        raise DomainError(f"sup|u2| = {np.max(np.abs(u2_vals)):.3g} exceeds R/sqrt(pi) = {lim:.3g}")


def _boundary_samples(u1: FourierLoop, u2: FourierLoop, band: BandEmbedding, theta):
    a = u1(theta)
    b = u2(theta)
    _check_domain(b, band)
    g = band.grad(theta + a, b)
    E = np.exp(0.5j * (theta + a))
    F1 = np.exp(g[0] + 1j * (theta + a))
    F2 = (b + 1j * g[3]) * E
    return a, b, g, E, F1, F2


def _grid(N: int, oversample: int = 4) -> np.ndarray:
    return double_cover_grid(oversample * N)


def eval_F1(u1: FourierLoop, u2: FourierLoop, band: BandEmbedding, N: Optional[int] = None) -> FourierLoop:
    N = _default_N(u1, N)
    theta = _grid(N)
    return FourierLoop.from_samples(_boundary_samples(u1, u2, band, theta)[4], 2 * N - 1, "complex")


def eval_F2(u1: FourierLoop, u2: FourierLoop, band: BandEmbedding, N: Optional[int] = None) -> FourierLoop:
    N = _default_N(u1, N)
    theta = _grid(N)
    return FourierLoop.from_samples(_boundary_samples(u1, u2, band, theta)[5], 2 * N - 1, "complex")


def _default_N(u1: FourierLoop, N):
    return max(u1.M // 2, 1) if N is None else N


# ---------------------------------------------------------------------------
# linearization at the origin
# ---------------------------------------------------------------------------

@dataclass
class LinearImage:
    """The seven components of the derivative at the origin."""

    neg1: FourierLoop
    neg2: FourierLoop
    dh1: Optional[Callable]
    dh2: Optional[Callable]
    mean1: complex
    mean2: complex
    shift: float


def linearized_at_origin(du1: FourierLoop, du2: FourierLoop, dh1: Optional[Callable] = None,
                         dh2: Optional[Callable] = None, N: Optional[int] = None) -> LinearImage:
    """Closed-form derivative at the origin.

    ``du1 = b0 + sum b_l cos + c_l sin``, ``du2 = sum bt_l cos((l+1/2).) + ct_l sin``.
    ``dh1(theta, t)``, ``dh2(theta, t)`` are band variations (or ``None``).
    """
    N = _default_N(du1, N)
    b0, b, c = du1.to_real()
    bt, ct = du2.to_twisted()
    theta = _grid(N)
    z = np.zeros_like(theta)
    h1e = FourierLoop.from_samples((dh1(theta, z) if dh1 else z) * np.exp(1j * theta), 2 * N - 1)
    h2e = FourierLoop.from_samples(1j * (dh2(theta, z) if dh2 else z) * np.exp(0.5j * theta), 2 * N - 1)
    modes1 = {-(l - 1): 0.5 * (-c[l - 1] + 1j * b[l - 1]) for l in range(2, b.size + 1)}
    modes2 = {-l: 0.5 * (bt[l] + 1j * ct[l]) for l in range(1, bt.size)}
    M = max(h1e.M, 2 * N + 1) // 2
    s1 = FourierLoop.from_modes(modes1, M)
    s2 = FourierLoop.from_modes(modes2, M)
    neg1 = project_negative(_add(h1e, s1))
    neg2 = project_negative(_add(h2e, s2))
    mean1 = mean_part(h1e) + (0.5 * (-c[0] + 1j * b[0]) if b.size else 0.0)
    mean2 = mean_part(h2e) + (0.5 * (bt[0] + 1j * ct[0]) if bt.size else 0.0)
    return LinearImage(neg1, neg2, dh1, dh2, complex(mean1), complex(mean2), float(b0))


def _add(a: FourierLoop, b: FourierLoop) -> FourierLoop:
    M = max(a.M, b.M)
    out = np.zeros(2 * M + 1, complex)
    out[M - a.M: M + a.M + 1] += a.coeffs
    out[M - b.M: M + b.M + 1] += b.coeffs
    return FourierLoop(out, "complex")


# ---------------------------------------------------------------------------
# the truncated nonlinear system
# ---------------------------------------------------------------------------

class DiskSystem:
    """Square real system for the disk family at truncation ``N``.

    Unknowns ``x = (b0, b_1..b_N, c_1..c_N, bt_0..bt_{N-1}, ct_0..ct_{N-1})``
    (length ``4N + 1``). Equations: real and imaginary parts of the
    coefficients of ``F1`` and ``F2`` at frequencies ``-1 .. -(N-1)``, of
    ``p(F1) + w^2`` and ``p(F2) - w``, and ``sh(u1)``.
    """

    def __init__(self, band: BandEmbedding, N: int = N_TRUNC, oversample: int = 4):
        self.band = band
        self.N = int(N)
        self.theta = _grid(self.N, oversample)
        self.L = self.theta.size
        th = self.theta
        N = self.N
        l = np.arange(1, N + 1)
        lt = np.arange(N) + 0.5
        self.B1 = np.column_stack([np.ones_like(th), np.cos(np.outer(th, l)), np.sin(np.outer(th, l))])
        self.B2 = np.column_stack([np.cos(np.outer(th, lt)), np.sin(np.outer(th, lt))])
        k = np.arange(1, N)
        # double-cover FFT index of frequencies -1..-(N-1) and 0
        self.rows = np.concatenate([(-2 * k) % self.L, [0]])

    @property
    def size(self) -> int:
        return 4 * self.N + 1

    def split(self, x):
        N = self.N
        return x[:2 * N + 1], x[2 * N + 1:]

    def loops(self, x):
        N = self.N
        p, q = self.split(np.asarray(x, float))
        u1 = FourierLoop.from_real(p[0], p[1:N + 1], p[N + 1:], N)
        u2 = FourierLoop.from_twisted(q[:N], q[N:], N)
        return u1, u2

    def samples(self, x):
        p, q = self.split(np.asarray(x, float))
        a = self.B1 @ p
        b = self.B2 @ q
        _check_domain(b, self.band)
        g = self.band.grad(self.theta + a, b)
        E = np.exp(0.5j * (self.theta + a))
        F1 = np.exp(g[0] + 1j * (self.theta + a))
        F2 = (b + 1j * g[3]) * E
        return a, b, g, E, F1, F2

    def _pack(self, c1, c2, x, w):
        N = self.N
        r1, r2 = c1[self.rows], c2[self.rows]
        r1 = r1.copy()
        r2 = r2.copy()
        if np.ndim(r1) == 1:
            r1[-1] += w * w
            r2[-1] -= w
            sh = x[0]
        else:
            sh = np.zeros((1, r1.shape[1]))
            sh[0, 0] = 1.0
        return np.concatenate([r1.real, r1.imag, r2.real, r2.imag, np.atleast_1d(sh)], axis=0)

    def residual(self, x, w: complex) -> np.ndarray:
        x = np.asarray(x, float)
        *_, F1, F2 = self.samples(x)
        c1 = np.fft.fft(F1) / self.L
        c2 = np.fft.fft(F2) / self.L
        return self._pack(c1, c2, x, complex(w))

    def jacobian(self, x) -> np.ndarray:
        """Exact Jacobian from the chain rule through ``h1``, ``h2``."""
        x = np.asarray(x, float)
        a, b, g, E, F1, F2 = self.samples(x)
        h1th, h1t, h2, h2th, h2t = g[1], g[2], g[3], g[4], g[5]
        d1u1 = (1j + h1th) * F1
        d1u2 = h1t * F1
        d2u1 = (0.5 * (1j * b - h2) + 1j * h2th) * E
        d2u2 = (1.0 + 1j * h2t) * E
        J1 = np.column_stack([d1u1[:, None] * self.B1, d1u2[:, None] * self.B2])
        J2 = np.column_stack([d2u1[:, None] * self.B1, d2u2[:, None] * self.B2])
        c1 = np.fft.fft(J1, axis=0) / self.L
        c2 = np.fft.fft(J2, axis=0) / self.L
        return self._pack(c1, c2, x, 0.0)

    def jacobian_fd(self, x, w: complex, step: float = 1e-6) -> np.ndarray:
        x = np.asarray(x, float)
        J = np.empty((self.size, self.size))
        for j in range(self.size):
            e = np.zeros(self.size)
            e[j] = step
            J[:, j] = (self.residual(x + e, w) - self.residual(x - e, w)) / (2 * step)
        return J

    def jacobian_origin(self) -> np.ndarray:
        """Matrix of the derivative at the origin (band directions omitted)."""
        J = np.zeros((self.size, self.size))
        for j in range(self.size):
            e = np.zeros(self.size)
            e[j] = 1.0
            u1, u2 = self.loops(e)
            img = linearized_at_origin(u1, u2, N=self.N)
            k = np.arange(1, self.N)
            n1 = np.array([img.neg1.coeff(-kk) for kk in k] + [img.mean1])
            n2 = np.array([img.neg2.coeff(-kk) for kk in k] + [img.mean2])
            J[:, j] = np.concatenate([n1.real, n1.imag, n2.real, n2.imag, [img.shift]])
        return J

    def tail(self, x) -> float:
        """Largest negative-frequency coefficient of ``F1``, ``F2`` outside
        the truncated equations (aliasing-free range of the sample grid)."""
        *_, F1, F2 = self.samples(x)
        L = self.L
        c1 = np.fft.fft(F1) / L
        c2 = np.fft.fft(F2) / L
        k = np.arange(self.N, L // 4)
        idx = (-2 * k) % L
        return float(max(np.max(np.abs(c1[idx]), initial=0.0), np.max(np.abs(c2[idx]), initial=0.0)))


# ---------------------------------------------------------------------------
# solutions
# ---------------------------------------------------------------------------

@dataclass
class DiskSolution:
    u1: FourierLoop
    u2: FourierLoop
    w: complex
    residual_norm: float
    F1: FourierLoop
    F2: FourierLoop
    band: BandEmbedding
    N: int
    history: list = field(default_factory=list)
    x: Optional[np.ndarray] = None
    tail: float = 0.0

    def center(self):
        return self.F1.coeff(0), self.F2.coeff(0)

    def boundary(self, theta):
        """Exact band point of the boundary parameter ``(theta + u1, u2)``."""
        return self.band.embed(np.asarray(theta, float) + self.u1(theta), self.u2(theta))

    def extension(self, zeta):
        """Nonnegative-frequency series of ``F1``, ``F2`` at ``|zeta| <= 1``."""
        zeta = np.asarray(zeta, complex)
        out = []
        for F in (self.F1, self.F2):
            k = np.arange(0, F.M // 2 + 1)
            a = np.array([F.coeff(kk) for kk in k])
            out.append(np.polyval(a[::-1], zeta))
        return out[0], out[1]

    def boundary_on_band_error(self, n: int = 512) -> float:
        theta = np.linspace(0.0, TWO_PI, n, endpoint=False)
        z1, z2 = self.extension(np.exp(1j * theta))
        b1, b2 = self.boundary(theta)
        return float(max(np.max(np.abs(z1 - b1)), np.max(np.abs(z2 - b2))))

    def real_slice_error(self, n: int = 512) -> float:
        """For the unperturbed band: ``|z1| = 1`` and ``z2 = z1 conj(z2)`` on the
        boundary of the holomorphic extension."""
        theta = np.linspace(0.0, TWO_PI, n, endpoint=False)
        z1, z2 = self.extension(np.exp(1j * theta))
        return float(max(np.max(np.abs(np.abs(z1) - 1)), np.max(np.abs(z2 - z1 * np.conj(z2)))))

    def to_csv(self, path) -> None:
        """Fourier coefficients ``kind,freq,re,im``."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["loop", "freq", "re", "im"])
            for name, loop in (("u1", self.u1), ("u2", self.u2), ("F1", self.F1), ("F2", self.F2)):
                for m, a in zip(loop.modes, loop.coeffs):
                    if a != 0:
                        wr.writerow([name, f"{m / 2:.17g}", f"{a.real:.17g}", f"{a.imag:.17g}"])


def _make_solution(system: DiskSystem, x, w, history) -> DiskSolution:
    u1, u2 = system.loops(x)
    *_, F1s, F2s = system.samples(x)
    F1 = FourierLoop.from_samples(F1s, 2 * system.N - 1, "complex")
    F2 = FourierLoop.from_samples(F2s, 2 * system.N - 1, "complex")
    res = float(np.max(np.abs(system.residual(x, w))))
    return DiskSolution(u1, u2, complex(w), res, F1, F2, system.band, system.N, list(history),
                        np.asarray(x, float), system.tail(x))


def solve_disk(band: BandEmbedding, w: complex, N: int = N_TRUNC, tol: float = 1e-12,
               max_iter: int = 40, x0=None, jacobian: str = "analytic",
               c1_threshold: float = C1_THRESHOLD, w_max: float = W_MAX) -> DiskSolution:
    """Newton solve of ``(Pi F1, Pi F2, p F1, p F2, sh) = (0, 0, -w^2, w, 0)``.

    ``jacobian``: ``"analytic"`` (exact, every step), ``"fd"`` (central
    differences, every step) or ``"frozen"`` (the derivative at the origin,
    i.e. a chord iteration preconditioned by its inverse).
    Backtracking halves the step up to 8 times.
    """
    w = complex(w)
    if abs(w) >= w_max:
        raise PreconditionError(f"|w| = {abs(w):.3g} must be below w_max = {w_max}")
    c1 = band.c1_norm()
    if c1 >= c1_threshold:
        raise PreconditionError(f"band C1 norm {c1:.3g} exceeds threshold {c1_threshold}")
    system = DiskSystem(band, N)
    x = np.zeros(system.size) if x0 is None else np.asarray(x0, float).copy()
    r = system.residual(x, w)
    nr = float(np.max(np.abs(r)))
    history = [nr]
    J0 = system.jacobian_origin() if jacobian == "frozen" else None
    for _ in range(max_iter):
        if nr < tol:
            break
        if jacobian == "analytic":
            J = system.jacobian(x)
        elif jacobian == "fd":
            J = system.jacobian_fd(x, w)
        elif jacobian == "frozen":
            J = J0
        else:
            raise ValueError(f"unknown jacobian mode {jacobian!r}")
        dx = np.linalg.solve(J, -r)
        step = 1.0
        for _ in range(9):
            try:
                xn = x + step * dx
                rn = system.residual(xn, w)
                nn = float(np.max(np.abs(rn)))
            except DomainError:
                nn = np.inf
            if nn < nr or step < 1.0 / 2 ** 8:
                break
            step *= 0.5
        if not np.isfinite(nn):
            raise ConvergenceError("Newton step left the band domain", history)
        x, r, nr = xn, rn, nn
        history.append(nr)
    if nr >= tol:
        raise ConvergenceError(f"Newton did not converge (residual {nr:.3e})", history)
    return _make_solution(system, x, w, history)


def solve_family(band: BandEmbedding, ws: Sequence[complex], N: int = N_TRUNC, tol: float = 1e-12,
                 step: float = 0.05, **kw) -> list:
    """Continuation in ``w`` from 0 along rays, warm-starting each solve."""
    out = []
    for w in ws:
        w = complex(w)
        n = max(int(np.ceil(abs(w) / step)), 1)
        x = None
        for k in range(1, n + 1):
            sol = solve_disk(band, w * k / n, N, tol, x0=x, **kw)
            x = sol.x
        out.append(sol)
    return out


# ---------------------------------------------------------------------------
# Moebius maps and the flat family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MoebiusParams:
    """``zeta -> (a zeta + b)/(conj(a) + conj(b) zeta)`` with ``|a|^2 - |b|^2 = 1``."""

    a: complex
    b: complex

    def __post_init__(self):
        dev = abs(abs(self.a) ** 2 - abs(self.b) ** 2 - 1.0)
        if dev > 1e-12:
            raise ValueError(f"|a|^2 - |b|^2 must equal 1 (deviation {dev:.3e})")

    def __call__(self, zeta):
        zeta = np.asarray(zeta, complex)
        return (self.a * zeta + self.b) / (np.conj(self.a) + np.conj(self.b) * zeta)

    def inverse(self) -> "MoebiusParams":
        return MoebiusParams(np.conj(self.a), -self.b)

    @classmethod
    def from_center(cls, c: complex, alpha: float = 0.0) -> "MoebiusParams":
        """Map with ``0 -> c`` and rotation phase ``alpha`` (``a = |a| e^{i alpha}``)."""
        c = complex(c)
        if abs(c) >= 1:
            raise DomainError("center must lie in the open unit disk")
        s = 1.0 / np.sqrt(1.0 - abs(c) ** 2)
        a = s * np.exp(1j * alpha)
        return cls(a, c * np.conj(a))

    @classmethod
    def rotation(cls, alpha: float) -> "MoebiusParams":
        """Rotation ``zeta -> e^{i alpha} zeta``."""
        return cls(np.exp(0.5j * alpha), 0j)


def _lift_angle(z, theta):
    """Continuous ``arg z(theta) - theta`` with mean in ``(-pi, pi]``."""
    ang = np.unwrap(np.angle(z))
    u = ang - theta
    mu = np.mean(u)
    u -= TWO_PI * np.round(mu / TWO_PI)
    return u


def flat_disk(w: complex, N: int = N_TRUNC) -> DiskSolution:
    """Gauge-fixed disk of the unperturbed band, constructed in closed form.

    The disk is the graph ``z2 = A + conj(A) z1`` over ``|z1| <= 1``; the
    parametrization ``z1 = m(zeta)`` is the Moebius map with ``m(0) = -w^2``
    whose rotation makes ``mean(u1) = 0``, and ``A = w/(1 - |w|^2)`` puts
    the center at ``(-w^2, w)``.
    """
    w = complex(w)
    A = w / (1.0 - abs(w) ** 2)
    theta = _grid(N)
    zeta = np.exp(1j * theta)

    def u1_of(alpha):
        m = MoebiusParams.from_center(-w * w, alpha)
        return _lift_angle(m(zeta), theta)

    mu = np.mean(u1_of(0.0))
    alpha = -0.5 * mu
    u1v = u1_of(alpha)
    phi = theta + u1v
    u2v = 2.0 * np.real(A * np.exp(-0.5j * phi))
    u1 = FourierLoop.from_samples(u1v, N, "real")
    u2 = FourierLoop.from_samples(u2v, N, "twisted")
    band = BandEmbedding.zero()
    F1 = FourierLoop.from_samples(np.exp(1j * phi), 2 * N - 1, "complex")
    F2 = FourierLoop.from_samples(u2v * np.exp(0.5j * phi), 2 * N - 1, "complex")
    return DiskSolution(u1, u2, w, 0.0, F1, F2, band, N, [], None, 0.0)


def flat_family_graph(w: complex):
    """Coefficient ``A`` of the affine graph ``z2 = A + conj(A) z1``."""
    w = complex(w)
    return w / (1.0 - abs(w) ** 2)


def compare_solutions(a: DiskSolution, b: DiskSolution, n: int = 256) -> float:
    """Sup distance between ``(u1, u2)`` of two solutions."""
    theta = np.linspace(0.0, TWO_PI, n, endpoint=False)
    return float(max(np.max(np.abs(a.u1(theta) - b.u1(theta))), np.max(np.abs(a.u2(theta) - b.u2(theta)))))


def moebius_reparam(sol: DiskSolution, m: MoebiusParams) -> DiskSolution:
    """Reparametrize the boundary by ``zeta -> m(zeta)``: the new boundary at
    ``e^{i theta}`` is the old one at ``m(e^{i theta})``."""
    N = sol.N
    theta = _grid(N)
    s = _lift_angle(m(np.exp(1j * theta)), theta)
    tp = theta + s
    a = sol.u1(tp)
    b = sol.u2(tp)
    u1 = FourierLoop.from_samples(s + a, N, "real")
    u2 = FourierLoop.from_samples(b, N, "twisted")
    system = DiskSystem(sol.band, N)
    x = _loops_to_x(u1, u2, N)
    new = _make_solution(system, x, 0j, sol.history)
    new.w = complex(new.F2.coeff(0))
    new.residual_norm = negative_residual(new)
    return new


def negative_residual(sol: DiskSolution) -> float:
    """Largest negative-frequency coefficient of ``F1`` or ``F2``."""
    return float(max(project_negative(sol.F1).coeffs.__abs__().max(),
                     project_negative(sol.F2).coeffs.__abs__().max()))


def _loops_to_x(u1: FourierLoop, u2: FourierLoop, N: int) -> np.ndarray:
    b0, b, c = u1.to_real()
    bt, ct = u2.to_twisted()
    b = np.resize(np.concatenate([b, np.zeros(max(0, N - b.size))]), N)
    c = np.resize(np.concatenate([c, np.zeros(max(0, N - c.size))]), N)
    bt = np.resize(np.concatenate([bt, np.zeros(max(0, N - bt.size))]), N)
    ct = np.resize(np.concatenate([ct, np.zeros(max(0, N - ct.size))]), N)
    return np.concatenate([[b0], b, c, bt, ct])


def conic_points(sol: DiskSolution, r_max: float = 0.95, n: int = 1024):
    """Zeros of ``F1 + F2^2`` inside ``|zeta| < r_max`` (argument principle
    count plus Newton-refined location nearest the origin)."""
    theta = np.linspace(0.0, TWO_PI, n, endpoint=False)
    z1, z2 = sol.extension(r_max * np.exp(1j * theta))
    q = z1 + z2 * z2
    wind = np.sum(np.diff(np.unwrap(np.angle(np.append(q, q[0]))))) / TWO_PI
    count = int(round(wind))
    # Newton from the origin
    z = 0j
    for _ in range(50):
        a1, a2 = sol.extension(z)
        d1, d2 = _derivative(sol, z)
        f = a1 + a2 * a2
        df = d1 + 2 * a2 * d2
        dz = f / df
        z = z - dz
        if abs(dz) < 1e-15:
            break
    return count, complex(z)


def _derivative(sol: DiskSolution, zeta):
    out = []
    for F in (sol.F1, sol.F2):
        k = np.arange(1, F.M // 2 + 1)
        a = np.array([kk * F.coeff(kk) for kk in k])
        out.append(np.polyval(a[::-1], zeta) if a.size else 0j)
    return out[0], out[1]


def gauge_refit(sol: DiskSolution) -> DiskSolution:
    """Move the parametrization back into the gauge slice: center on the
    conic ``z1 + z2^2 = 0`` and ``mean(u1) = 0``."""
    count, zc = conic_points(sol)
    if count != 1:
        raise ZollkitError(f"disk meets the conic {count} times inside the disk")
    base = moebius_reparam(sol, MoebiusParams.from_center(zc, 0.0))
    mu = sh_mean(base.u1)
    return moebius_reparam(base, MoebiusParams.rotation(-mu))


# ---------------------------------------------------------------------------
# interiors and foliation
# ---------------------------------------------------------------------------

@dataclass
class InteriorSamples:
    zeta: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    band_distance: float


def band_distance(band: BandEmbedding, z1, z2) -> np.ndarray:
    """Zero exactly on the band image (both sheets of the square root)."""
    theta = np.angle(z1)
    best = None
    for shift in (0.0, TWO_PI):
        th = theta + shift
        v = z2 * np.exp(-0.5j * th)
        t = v.real
        g = band.grad(th, t)
        d = np.abs(np.log(np.abs(z1)) - g[0]) + np.abs(v.imag - g[3])
        best = d if best is None else np.minimum(best, d)
    return best


def disk_interior(sol: DiskSolution, radii=None, n_theta: int = 128, tol: float = 1e-8) -> InteriorSamples:
    if sol.residual_norm > tol:
        raise ZollkitError(f"residual {sol.residual_norm:.3e} too large for interior evaluation")
    radii = np.linspace(0.0, 0.95, 20) if radii is None else np.asarray(radii, float)
    theta = np.linspace(0.0, TWO_PI, n_theta, endpoint=False)
    zeta = np.multiply.outer(radii, np.exp(1j * theta))
    z1, z2 = sol.extension(zeta)
    inner = np.abs(zeta) > 0
    d = band_distance(sol.band, z1[inner], z2[inner])
    return InteriorSamples(zeta, z1, z2, float(np.min(d)) if d.size else np.inf)


@dataclass
class FoliationReport:
    min_cloud_distance: float
    intersections: np.ndarray  # pairwise interior intersection counts
    conic_counts: list
    min_band_distance: float
    ok: bool


def _invert_F1(sol: DiskSolution, z, n_grid: int = 48, iters: int = 30):
    """Solve ``F1(zeta) = z`` for each target, starting from a polar grid."""
    r = np.linspace(0.0, 0.999, n_grid)
    th = np.linspace(0.0, TWO_PI, 2 * n_grid, endpoint=False)
    Z = np.multiply.outer(r, np.exp(1j * th)).ravel()
    V = sol.extension(Z)[0]
    tree = cKDTree(np.column_stack([V.real, V.imag]))
    _, idx = tree.query(np.column_stack([np.real(z), np.imag(z)]))
    zeta = Z[idx]
    for _ in range(iters):
        f = sol.extension(zeta)[0] - z
        d = _derivative(sol, zeta)[0]
        zeta = zeta - f / d
    return zeta


def intersection_count(a: DiskSolution, b: DiskSolution, r_max: float = 0.9, n: int = 2048) -> int:
    """Number of interior intersections of two near-graph disks.

    On ``|zeta| = r_max`` of disk ``a`` the function
    ``F2_a(zeta) - F2_b(F1_b^{-1}(F1_a(zeta)))`` is holomorphic in ``zeta``;
    its winding number counts common points.
    """
    theta = np.linspace(0.0, TWO_PI, n, endpoint=False)
    zeta = r_max * np.exp(1j * theta)
    z1, z2 = a.extension(zeta)
    zb = _invert_F1(b, z1)
    if np.max(np.abs(zb)) >= 1.0:
        raise ZollkitError("disk boundary images do not nest; shrink r_max")
    g = z2 - b.extension(zb)[1]
    if np.min(np.abs(g)) == 0:
        return -1
    wind = np.sum(np.diff(np.unwrap(np.angle(np.append(g, g[0]))))) / TWO_PI
    return int(round(wind))


def foliation_check(family: Sequence[DiskSolution], r_max: float = 0.9, tol: float = 1e-8) -> FoliationReport:
    """Pairwise interior disjointness and single conic crossing per disk."""
    interiors = [disk_interior(s, np.linspace(0.0, r_max, 12), 96, tol) for s in family]
    n = len(family)
    counts = np.zeros((n, n), dtype=int)
    dmin = np.inf
    for i in range(n):
        for j in range(i + 1, n):
            counts[i, j] = counts[j, i] = intersection_count(family[i], family[j], r_max)
            P = np.column_stack([interiors[i].z1.ravel(), interiors[i].z2.ravel()])
            Q = np.column_stack([interiors[j].z1.ravel(), interiors[j].z2.ravel()])
            tree = cKDTree(np.column_stack([Q.real, Q.imag]))
            d, _ = tree.query(np.column_stack([P.real, P.imag]))
            dmin = min(dmin, float(np.min(d)))
    conic = [conic_points(s, r_max)[0] for s in family]
    band_d = min(s.band_distance for s in interiors)
    ok = bool(np.all(counts == 0) and all(c == 1 for c in conic) and (n < 2 or dmin > 0) and band_d > 0)
    return FoliationReport(dmin, counts, conic, band_d, ok)


def export_points(family: Sequence[DiskSolution], path, n_theta: int = 64, radii=(1.0,)) -> None:
    """Point cloud ``w_re,w_im,theta,z1_re,z1_im,z2_re,z2_im`` (``r = 1`` rows
    are boundary points of the holomorphic extension)."""
    theta = np.linspace(0.0, TWO_PI, n_theta, endpoint=False)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["w_re", "w_im", "theta", "z1_re", "z1_im", "z2_re", "z2_im"])
        for s in family:
            for r in radii:
                z1, z2 = s.extension(r * np.exp(1j * theta))
                for k in range(theta.size):
                    wr.writerow([f"{s.w.real:.17g}", f"{s.w.imag:.17g}", f"{theta[k]:.17g}",
                                 f"{z1[k].real:.17g}", f"{z1[k].imag:.17g}",
                                 f"{z2[k].real:.17g}", f"{z2[k].imag:.17g}"])
