"""Axisymmetric Zoll metrics and Zoll projective structures on the sphere.

Coordinates are polar ``(phi, theta)`` with ``phi`` in ``[0, pi]``. The
fiber of the projective tangent bundle is ``zeta = tan(psi)``, where
``zeta`` labels the direction ``e1 + zeta e2``; the spray is integrated in
``(phi, theta, psi)`` with the smooth rescaled time of the projected flow.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.special import ellipk

from .errors import (
    ChartError,
    DegenerateMonodromyError,
    OpenOrbitError,
    ProfileError,
    ResolutionError,
)
from .projective import (
    AffineConnection2D,
    GeodesicState,
    JacobiData,
    SprayCubic,
    conjugacy_number,
    ricci_along,
    winding_angle,
)

HALF_PI = 0.5 * np.pi
DEFAULT_TOL = 1e-10
HORIZON_FACTOR = 50.0
VARIANTS = ("printed", "consistent")


class SeparatrixWarning(UserWarning):
    """Orbit passes within 1e-6 of a fixed point of the projected flow."""


# ---------------------------------------------------------------------------
# bumps
# ---------------------------------------------------------------------------

def _bump_parts(phi, c, delta):
    u = (np.asarray(phi, float) - c) / delta
    inside = np.abs(u) < 1.0
    q = np.where(inside, 1.0 - u * u, 1.0)
    val = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
    return u, q, val


def bump(phi, c: float, delta: float):
    """``exp(1 - 1/(1 - u^2))`` for ``|u| < 1``, ``u = (phi - c)/delta``; else 0."""
    return _bump_parts(phi, c, delta)[2]


def bump_derivative(phi, c: float, delta: float):
    u, q, val = _bump_parts(phi, c, delta)
    return val * (-2.0 * u / (q * q)) / delta


# ---------------------------------------------------------------------------
# ansatz profiles f(z)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnsatzProfile:
    """Odd function ``f`` on ``[-1, 1]`` with values in ``(-1, 1)``.

    ``df`` and ``d2f`` are its first two derivatives.
    """

    f: Callable
    df: Callable
    d2f: Callable
    name: str = "custom"

    @classmethod
    def zero(cls) -> "AnsatzProfile":
        z = lambda x: np.zeros(np.shape(x))  # noqa: E731
        return cls(z, z, z, "zero")

    @classmethod
    def cubic(cls, amplitude: float) -> "AnsatzProfile":
        """``f(z) = A z (1 - z^2)``."""
        A = float(amplitude)
        return cls(
            lambda z: A * z * (1.0 - z * z),
            lambda z: A * (1.0 - 3.0 * z * z),
            lambda z: -6.0 * A * z,
            f"cubic({A:g})",
        )

    @classmethod
    def polynomial(cls, coeffs) -> "AnsatzProfile":
        """Polynomial with ``coeffs`` in increasing degree (no parity imposed)."""
        p = np.polynomial.Polynomial(coeffs)
        dp, d2p = p.deriv(1), p.deriv(2)
        return cls(p, dp, d2p, "polynomial")

    @classmethod
    def table(cls, z, f) -> "AnsatzProfile":
        spl = CubicSpline(np.asarray(z, float), np.asarray(f, float))
        return cls(spl, spl.derivative(1), spl.derivative(2), "table")

    def validate(self, n: int = 201, tol: float = 1e-12) -> None:
        z = np.linspace(-1.0, 1.0, n)
        fz = np.asarray(self.f(z), float)
        odd = np.max(np.abs(fz + np.asarray(self.f(-z), float)))
        if odd > tol:
            raise ProfileError(f"ansatz profile is not odd (deviation {odd:.3e})")
        if np.max(np.abs(fz)) >= 1.0:
            raise ProfileError("ansatz profile must satisfy |f| < 1")
        ends = max(abs(float(self.f(1.0))), abs(float(self.f(-1.0))))
        if ends > tol:
            raise ProfileError(f"ansatz profile must vanish at z = +-1 (got {ends:.3e})")


def ansatz_connection(f: AnsatzProfile) -> AffineConnection2D:
    """Levi-Civita connection of ``(1+f)^2/(1-z^2) dz^2 + (1-z^2) dtheta^2``
    in the chart ``(z, theta)``, with analytic first derivatives."""
    f.validate()

    def G(z, theta):
        fz, dfz = f.f(z), f.df(z)
        one = 1.0 - z * z
        out = np.zeros((2, 2, 2) + np.shape(z))
        out[0, 0, 0] = dfz / (1.0 + fz) + z / one
        out[0, 1, 1] = z * one / (1.0 + fz) ** 2
        out[1, 0, 1] = out[1, 1, 0] = -z / one
        return out

    def dG(z, theta):
        fz, dfz, d2fz = f.f(z), f.df(z), f.d2f(z)
        one = 1.0 - z * z
        out = np.zeros((2, 2, 2, 2) + np.shape(z))
        out[0, 0, 0, 0] = d2fz / (1.0 + fz) - (dfz / (1.0 + fz)) ** 2 + (1.0 + z * z) / one ** 2
        out[0, 1, 1, 0] = (1.0 - 3.0 * z * z) / (1.0 + fz) ** 2 - 2.0 * z * one * dfz / (1.0 + fz) ** 3
        out[1, 0, 1, 0] = out[1, 1, 0, 0] = -(1.0 + z * z) / one ** 2
        return out

    return AffineConnection2D(G, dG, chart_name="ansatz-cylindrical")


def ansatz_metric(f: AnsatzProfile) -> Callable:
    """Diagonal metric components ``(g_zz, g_thth)`` of the ansatz."""
    def g(z, theta):
        return np.stack([(1.0 + f.f(z)) ** 2 / (1.0 - z * z), (1.0 - z * z) * np.ones(np.shape(theta))])
    return g


def ansatz_to_polar(f: AnsatzProfile) -> Callable:
    """``F(phi) = -f(cos phi)``."""
    return lambda phi: -np.asarray(f.f(np.cos(phi)), float)


# ---------------------------------------------------------------------------
# axisymmetric profiles (F, h)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProfileValues:
    F: np.ndarray
    dF: np.ndarray
    h: np.ndarray
    dh: np.ndarray
    hc: np.ndarray  # h / cos(phi), smooth through phi = pi/2


def _x_over_sin(x):
    # x / sin(x) without cancellation near 0
    return 1.0 / np.sinc(np.asarray(x) / np.pi)


@dataclass(frozen=True)
class AxisymProfiles:
    """Profile pair ``(F, h)`` of the axisymmetric Zoll spray.

    ``htilde`` is the factor in ``h = (phi - pi/2)^2 htilde``, used to
    evaluate ``h / cos(phi)`` without cancellation.

    ``variant`` selects the coefficient of the term linear in ``h``.
    ``"printed"`` uses ``h' - 2h/(sin cos)`` as published. ``"consistent"``
    multiplies it by ``-|cos phi|``, which is what the disk-family
    construction produces and the version whose geodesics close.
    """

    F: Callable
    dF: Callable
    h: Callable
    dh: Callable
    htilde: Callable
    delta0: float
    name: str = "custom"
    params: dict = field(default_factory=dict)
    variant: str = "printed"
    evaluator: Optional[Callable] = None  # one-pass (F, dF, h, dh, htilde)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    def with_variant(self, variant: str) -> "AxisymProfiles":
        return replace(self, variant=variant)

    def linear_factor(self, phi):
        """Multiplier of ``h' sin(phi) - 2h/cos(phi)`` in the flow."""
        if self.variant == "printed":
            return np.ones(np.shape(phi))
        return -np.abs(np.cos(phi))

    def values(self, phi) -> ProfileValues:
        phi = np.asarray(phi, float)
        x = HALF_PI - phi
        if self.evaluator is not None:
            F, dF, h, dh, ht = self.evaluator(phi)
        else:
            F, dF, h, dh, ht = (np.asarray(g(phi), float)
                                for g in (self.F, self.dF, self.h, self.dh, self.htilde))
        return ProfileValues(F, dF, h, dh, ht * x * _x_over_sin(x))

    @property
    def is_round(self) -> bool:
        return self.name == "round" or (self.name == "bump" and self.params.get("eps", 1.0) == 0.0)

    # families ---------------------------------------------------------------

    @classmethod
    def round(cls) -> "AxisymProfiles":
        z = lambda phi: np.zeros(np.shape(phi))  # noqa: E731
        return cls(z, z, z, z, z, 0.5, "round", {})

    @classmethod
    def bump(cls, eps: float, d: float = 0.5, delta: float = 0.3) -> "AxisymProfiles":
        """Canonical family ``F = eps[B(pi/2-d) - B(pi/2+d)]``,
        ``h = eps[B(pi/2-d) + B(pi/2+d)]``."""
        eps, d, delta = float(eps), float(d), float(delta)
        if not (0 < delta < d and d + delta < HALF_PI):
            raise ProfileError("bump profiles need 0 < delta < d and d + delta < pi/2")
        cl, cr = HALF_PI - d, HALF_PI + d

        def F(phi):
            return eps * (bump(phi, cl, delta) - bump(phi, cr, delta))

        def dF(phi):
            return eps * (bump_derivative(phi, cl, delta) - bump_derivative(phi, cr, delta))

        def h(phi):
            return eps * (bump(phi, cl, delta) + bump(phi, cr, delta))

        def dh(phi):
            return eps * (bump_derivative(phi, cl, delta) + bump_derivative(phi, cr, delta))

        def htilde(phi):
            phi = np.asarray(phi, float)
            x2 = (phi - HALF_PI) ** 2
            safe = np.where(x2 > (d - delta) ** 2 * 0.25, x2, 1.0)
            return np.where(x2 > (d - delta) ** 2 * 0.25, h(phi) / safe, 0.0)

        def evaluate(phi):
            phi = np.asarray(phi, float)
            ul, ql, bl = _bump_parts(phi, cl, delta)
            ur, qr, br = _bump_parts(phi, cr, delta)
            dbl = bl * (-2.0 * ul / (ql * ql)) / delta
            dbr = br * (-2.0 * ur / (qr * qr)) / delta
            hv = eps * (bl + br)
            x2 = (phi - HALF_PI) ** 2
            far = x2 > (d - delta) ** 2 * 0.25
            ht = np.where(far, hv / np.where(far, x2, 1.0), 0.0)
            return eps * (bl - br), eps * (dbl - dbr), hv, eps * (dbl + dbr), ht

        delta0 = HALF_PI - d - delta
        return cls(F, dF, h, dh, htilde, delta0, "bump", {"eps": eps, "d": d, "delta": delta},
                   evaluator=evaluate)

    @classmethod
    def table(cls, phi, F, h, htilde, delta0: float = 0.0) -> "AxisymProfiles":
        """Spline interpolation of tabulated samples."""
        phi = np.asarray(phi, float)
        sF = CubicSpline(phi, np.asarray(F, float))
        sh = CubicSpline(phi, np.asarray(h, float))
        st = CubicSpline(phi, np.asarray(htilde, float))
        prof = cls(sF, sF.derivative(), sh, sh.derivative(), st, float(delta0), "table",
                   {"phi": phi, "F": np.asarray(F, float), "h": np.asarray(h, float)})
        return prof

    @classmethod
    def from_csv(cls, path, delta0: float = 0.0) -> "AxisymProfiles":
        data = np.genfromtxt(path, delimiter=",", names=True)
        return cls.table(data["phi"], data["F"], data["h"], data["htilde"], delta0)

    @classmethod
    def from_ansatz(cls, f: AnsatzProfile) -> "AxisymProfiles":
        """Metric case ``h = 0``, ``F(phi) = -f(cos phi)``.

        ``F`` vanishes at the poles but not on a neighbourhood of them, so
        ``delta0 = 0`` (the minimal hypothesis).
        """
        f.validate()
        z = lambda phi: np.zeros(np.shape(phi))  # noqa: E731
        return cls(
            ansatz_to_polar(f),
            lambda phi: np.asarray(f.df(np.cos(phi)), float) * np.sin(phi),
            z, z, z, 0.0, "ansatz", {"f": f.name},
        )

    # checks -----------------------------------------------------------------

    def validate(self, n: int = 401, tol: float = 1e-12) -> None:
        if self.name == "table":
            phi = self.params["phi"]
            F, h = self.params["F"], self.params["h"]
            if not np.allclose(phi + phi[::-1], np.pi, atol=1e-12, rtol=0):
                raise ProfileError("table grid must be symmetric about pi/2")
            odd = np.max(np.abs(F + F[::-1]))
            even = np.max(np.abs(h - h[::-1]))
        else:
            phi = np.linspace(0.0, np.pi, n)
            v, w = self.values(phi), self.values(np.pi - phi)
            F, h = v.F, v.h
            odd = np.max(np.abs(v.F + w.F))
            even = np.max(np.abs(v.h - w.h))
        if odd > tol:
            raise ProfileError(f"F is not odd under phi -> pi - phi (deviation {odd:.3e})")
        if even > tol:
            raise ProfileError(f"h is not even under phi -> pi - phi (deviation {even:.3e})")
        if np.max(F) >= 1.0:
            raise ProfileError("F must stay below 1 so that F - 1 never vanishes")
        mid = self.values(np.array([HALF_PI]))
        if abs(mid.h[0]) > tol or abs(mid.dh[0]) > 1e-9:
            raise ProfileError("h must vanish to second order at phi = pi/2")
        if self.delta0 > 0:
            edge = np.concatenate([np.linspace(0, self.delta0, 21), np.linspace(np.pi - self.delta0, np.pi, 21)])
            ev = self.values(edge)
            if max(np.max(np.abs(ev.F)), np.max(np.abs(ev.h))) > tol:
                raise ProfileError("F and h must vanish within delta0 of the poles")


# ---------------------------------------------------------------------------
# spray and its representative connection
# ---------------------------------------------------------------------------

class ZollSpray:
    """The spray ``d_phi + (F-1)/sin(phi) zeta d_theta - zeta(...) d_zeta``."""

    def __init__(self, p: AxisymProfiles):
        self.p = p

    def __call__(self, phi, theta, zeta):
        phi = np.asarray(phi, float)
        s = np.sin(phi)
        if np.any(np.abs(s) < 1e-300):
            raise ChartError("spray is singular at phi = 0 or pi in the polar chart")
        v = self.p.values(phi)
        c = np.cos(phi)
        H = (v.dh - 2.0 * v.hc / s) * self.p.linear_factor(phi)
        dtheta = (v.F - 1.0) / s * zeta
        dzeta = -zeta * ((1.0 + zeta * zeta * (1.0 + v.h ** 2)) * c / s - zeta * H)
        return np.ones_like(dtheta), dtheta, dzeta

    def cubic_coeffs(self, phi, theta=None):
        """Cubic of the spray in the base chart, slope ``dtheta/dphi``."""
        phi = np.asarray(phi, float)
        s, c = np.sin(phi), np.cos(phi)
        v = self.p.values(phi)
        m = (v.F - 1.0) / s
        H = (v.dh - 2.0 * v.hc / s) * self.p.linear_factor(phi)
        c1 = v.dF / (v.F - 1.0) - 2.0 * c / s
        c2 = H / m
        c3 = -(1.0 + v.h ** 2) * (c / s) / m ** 2
        return np.stack([np.zeros_like(c1), c1, c2, c3])

    def cubic(self) -> SprayCubic:
        return SprayCubic(lambda x1, x2: self.cubic_coeffs(x1), chart_name="zoll-polar")

    def connection(self) -> AffineConnection2D:
        """A torsion-free representative with the spray's cubic:
        ``G^1_11 = c1``, ``G^2_22 = -c2``, ``G^1_22 = c3``."""
        def G(phi, theta):
            c = self.cubic_coeffs(phi)
            out = np.zeros((2, 2, 2) + np.shape(phi))
            out[0, 0, 0] = c[1]
            out[1, 1, 1] = -c[2]
            out[0, 1, 1] = c[3]
            return out

        step = 1e-5

        def dG(phi, theta):
            # nothing depends on theta; central difference in phi only
            phi = np.asarray(phi, float)
            out = np.zeros((2, 2, 2, 2) + np.shape(phi))
            out[:, :, :, 0] = (G(phi + step, theta) - G(phi - step, theta)) / (2.0 * step)
            return out

        return AffineConnection2D(G, dG, chart_name="zoll-polar")


def zoll_spray(p: AxisymProfiles) -> ZollSpray:
    return ZollSpray(p)


def zoll_connection(p: AxisymProfiles) -> AffineConnection2D:
    return ZollSpray(p).connection()


# ---------------------------------------------------------------------------
# projected flow
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectedState:
    phi: float
    psi: float

    def __post_init__(self):
        if not (0.0 <= self.phi <= np.pi):
            raise ValueError("phi must lie in [0, pi]")
        if not (0.0 <= self.psi < np.pi):
            raise ValueError("psi must lie in [0, pi)")

    @classmethod
    def from_zeta(cls, phi: float, zeta: float) -> "ProjectedState":
        return cls(phi, float(np.arctan(zeta) % np.pi))


FIXED_POINTS = ((0.0, 0.0), (0.0, np.pi), (HALF_PI, HALF_PI))  # (psi, phi)


def _flow_terms(p: AxisymProfiles, phi, psi):
    v = p.values(phi)
    sf, cf = np.sin(phi), np.cos(phi)
    sp, cp = np.sin(psi), np.cos(psi)
    dphi = sf * cp
    lin = (v.dh * sf - 2.0 * v.hc) * p.linear_factor(phi)
    dpsi = -sp * ((1.0 + v.h ** 2 * sp * sp) * cf - cp * sp * lin)
    return dphi, dpsi, v, sp


def projected_flow(p: AxisymProfiles, s: ProjectedState):
    """``(dphi/dt, dpsi/dt)`` of the projected flow."""
    dphi, dpsi, _, _ = _flow_terms(p, np.asarray(s.phi, float), np.asarray(s.psi, float))
    return float(dphi), float(dpsi)


def flow_field(p: AxisymProfiles) -> Callable:
    """Right-hand side on ``(phi, theta, psi, I_F)`` where ``I_F`` accumulates
    the ``F sin(psi)`` part of ``dtheta/dt``."""
    def rhs(t, y):
        dphi, dpsi, v, sp = _flow_terms(p, y[0], y[2])
        return np.array([dphi, (v.F - 1.0) * sp, dpsi, v.F * sp])
    return rhs


def round_period(phi0: float, psi0: float) -> float:
    """Flow-time period of the round-sphere orbit through ``(phi0, psi0)``."""
    c = abs(np.sin(phi0) * np.sin(psi0))
    c = min(max(c, 1e-12), 1.0)
    if c >= 1.0 - 1e-14:
        return 2.0 * np.pi
    return 4.0 * float(ellipk(1.0 - c * c))


# ---------------------------------------------------------------------------
# orbits
# ---------------------------------------------------------------------------

@dataclass
class ZollOrbit:
    """Closed (or attempted) orbit of the flow on ``(phi, theta, psi)``."""

    profiles: AxisymProfiles
    y0: np.ndarray
    period: float
    closed: bool
    sols: list
    t_breaks: np.ndarray

    @property
    def t_start(self) -> float:
        return 0.0

    @property
    def t_end(self) -> float:
        return self.period

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, float))
        idx = np.clip(np.searchsorted(self.t_breaks, t, side="right") - 1, 0, len(self.sols) - 1)
        out = np.empty((4, t.size))
        for k in np.unique(idx):
            m = idx == k
            out[:, m] = self.sols[k](t[m])
        return out

    def sample(self, n: int = 1001):
        t = np.linspace(0.0, self.period, n)
        return t, self(t)

    def curve(self, t):
        """Base position ``(phi, theta)`` with velocity and acceleration."""
        y = self(t)
        phi, psi = y[0], y[2]
        dphi, dpsi, v, sp = _flow_terms(self.profiles, phi, psi)
        cp = np.cos(psi)
        dtheta = (v.F - 1.0) * sp
        a_phi = np.cos(phi) * cp * dphi - np.sin(phi) * sp * dpsi
        a_theta = v.dF * dphi * sp + (v.F - 1.0) * cp * dpsi
        return np.stack([phi, y[1]]), np.stack([dphi, dtheta]), np.stack([a_phi, a_theta])

    def to_csv(self, path, n: int = 1001) -> None:
        t, y = self.sample(n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "phi", "theta", "psi"])
            for i in range(t.size):
                w.writerow([f"{t[i]:.17g}", f"{y[0, i]:.17g}", f"{y[1, i]:.17g}", f"{y[2, i]:.17g}"])


def _near_fixed_point(phi, psi, tol=1e-6):
    for fpsi, fphi in FIXED_POINTS:
        if np.hypot(phi - fphi, (psi - fpsi + HALF_PI) % np.pi - HALF_PI) < tol:
            return True
    return False


def _integrate_to_return(p: AxisymProfiles, y0, tol: float, horizon: float, chunk: float,
                         capture: float = 0.05):
    """Integrate from ``y0`` until the projected state first returns through
    the section orthogonal to the initial projected velocity."""
    rhs = flow_field(p)
    x0 = np.array([y0[0], y0[2]])
    v0 = rhs(0.0, y0)[[0, 2]]
    nv = np.linalg.norm(v0)
    if nv == 0:
        raise ValueError("initial state is a fixed point of the projected flow")
    v0 = v0 / nv

    def section(t, y):
        return (y[0] - x0[0]) * v0[0] + (y[2] - x0[1]) * v0[1]

    section.direction = 1

    sols, breaks = [], []
    t = 0.0
    y = np.asarray(y0, float)
    # leave the section before watching for crossings
    t_skip = min(0.05 * chunk, 0.1 / nv)
    sol = solve_ivp(rhs, (0.0, t_skip), y, method="DOP853", rtol=tol, atol=tol, dense_output=True)
    sols.append(sol.sol)
    breaks.append(0.0)
    t, y = float(sol.t[-1]), sol.y[:, -1]
    while t < horizon:
        t1 = min(t + chunk, horizon)
        sol = solve_ivp(rhs, (t, t1), y, method="DOP853", rtol=tol, atol=tol,
                        dense_output=True, events=section)
        for te, ye in zip(sol.t_events[0], sol.y_events[0]):
            if np.hypot(ye[0] - x0[0], ye[2] - x0[1]) < capture:
                sols.append(sol.sol)
                breaks.append(t)
                return float(te), sols, np.array(breaks), True
        sols.append(sol.sol)
        breaks.append(t)
        t, y = float(sol.t[-1]), sol.y[:, -1]
    return float(t), sols, np.array(breaks), False


@dataclass
class ExtremumReport:
    t: float
    phi: float
    psi: float
    d2_numeric: float
    d2_derived: float  # tan(phi)/(1+h^2)
    d2_printed: float  # (1+h^2) cot(phi), as printed in the source


@dataclass
class ProjectedOrbitReport:
    orbit: ZollOrbit
    extrema: list
    symmetry_error: float
    conserved_drift: Optional[float]


def integrate_projected_orbit(p: AxisymProfiles, s0: ProjectedState, tol: float = DEFAULT_TOL,
                              check_symmetry: bool = True) -> ProjectedOrbitReport:
    """One loop of the projected flow with extremum and symmetry diagnostics."""
    if _near_fixed_point(s0.phi, s0.psi, 0.0) or (s0.psi == 0.0 and s0.phi in (0.0, np.pi)):
        raise ValueError("initial state is a fixed point")
    if _near_fixed_point(s0.phi, s0.psi):
        warnings.warn("initial state within 1e-6 of a fixed point", SeparatrixWarning)
    orbit = _closed_orbit(p, np.array([s0.phi, 0.0, s0.psi, 0.0]), tol)
    if not orbit.closed:
        raise OpenOrbitError("projected orbit did not return within the horizon")
    t, y = orbit.sample(4001)
    if np.min([np.hypot(y[0] - fphi, y[2] - fpsi) for fpsi, fphi in FIXED_POINTS]) < 1e-6:
        warnings.warn("orbit passes within 1e-6 of a fixed point", SeparatrixWarning)
    extrema = _extrema(p, orbit)
    sym = reflection_symmetry_error(p, orbit, tol) if check_symmetry else float("nan")
    drift = None
    if p.is_round:
        w = np.sin(y[0]) * np.sin(y[2])
        drift = float(np.max(np.abs(w - w[0])))
    return ProjectedOrbitReport(orbit, extrema, sym, drift)


def _extrema(p: AxisymProfiles, orbit: ZollOrbit):
    """Locate ``cos(psi) = 0`` crossings and measure ``d^2 phi / d psi^2``."""
    t, y = orbit.sample(4001)
    g = np.cos(y[2])
    out = []
    for i in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]:
        a, b = t[i], t[i + 1]
        for _ in range(80):
            m = 0.5 * (a + b)
            if np.sign(np.cos(orbit(a)[2, 0])) == np.sign(np.cos(orbit(m)[2, 0])):
                a = m
            else:
                b = m
        te = 0.5 * (a + b)
        ye = orbit(te)[:, 0]
        # quadratic fit of phi against psi on a short window
        dt = 1e-3 * orbit.period
        tt = te + np.linspace(-dt, dt, 41)
        tt = tt[(tt >= 0) & (tt <= orbit.period)]
        yy = orbit(tt)
        coef = np.polyfit(yy[2] - ye[2], yy[0], 4)
        v = p.values(np.array([ye[0]]))
        out.append(ExtremumReport(
            float(te), float(ye[0]), float(ye[2]), float(2.0 * coef[-3]),
            float(np.tan(ye[0]) / (1.0 + v.h[0] ** 2)),
            float((1.0 + v.h[0] ** 2) / np.tan(ye[0])),
        ))
    return out


def reflection_symmetry_error(p: AxisymProfiles, orbit: ZollOrbit, tol: float = DEFAULT_TOL,
                              n: int = 201) -> float:
    """Integrate from the mirrored start backwards and compare with the mirror
    image ``(phi, psi, t) -> (pi - phi, psi, -t)`` of ``orbit``."""
    rhs = flow_field(p)
    y0 = orbit(0.0)[:, 0]
    ym = np.array([np.pi - y0[0], 0.0, y0[2], 0.0])
    T = orbit.period
    sol = solve_ivp(rhs, (0.0, -T), ym, method="DOP853", rtol=tol, atol=tol, dense_output=True)
    t = np.linspace(0.0, T, n)
    a = orbit(t)
    b = sol.sol(-t)
    return float(max(np.max(np.abs(np.pi - a[0] - b[0])), np.max(np.abs(a[2] - b[2]))))


def _closed_orbit(p: AxisymProfiles, y0, tol: float, horizon_factor: float = HORIZON_FACTOR) -> ZollOrbit:
    T0 = round_period(y0[0], y0[2])
    T, sols, breaks, closed = _integrate_to_return(p, y0, tol, horizon_factor * T0, chunk=1.5 * T0)
    return ZollOrbit(p, np.asarray(y0, float), T, closed, sols, breaks)


# ---------------------------------------------------------------------------
# holonomy, omega-potential, closure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HolonomyReport:
    total: float
    reduced: float  # in (-pi, pi]
    f_part: float
    round_part: float


def _reduce(angle: float) -> float:
    r = float(np.mod(angle + np.pi, 2 * np.pi) - np.pi)
    return np.pi if r == -np.pi else r


def theta_holonomy(p: AxisymProfiles, orbit: ZollOrbit) -> HolonomyReport:
    """Net change of theta around a closed projected orbit, split into the
    ``F sin(psi)`` part and the ``-sin(psi)`` part."""
    if not orbit.closed:
        raise OpenOrbitError("theta holonomy needs a closed projected orbit")
    y0 = orbit(0.0)[:, 0]
    y1 = orbit(orbit.period)[:, 0]
    total = float(y1[1] - y0[1])
    f_part = float(y1[3] - y0[3])
    return HolonomyReport(total, _reduce(total), f_part, total - f_part)


def _omega_argument(p: AxisymProfiles, phi, psi, convention: str):
    v = p.values(phi)
    c = np.cos(phi)
    ac = np.abs(c)
    if convention == "smooth":
        # 1/a = h|cos phi| - i cos phi, continuous through the equator
        return np.cos(psi) + (1j * c - v.h * ac) * np.sin(psi), 1.0
    if convention == "printed":
        # ratio = conj(z)/z with z = cos psi - (h - i)|cos phi| sin psi
        return np.cos(psi) - (v.h - 1j) * ac * np.sin(psi), -1.0
    raise ValueError(f"unknown convention {convention!r}")


def omega_potential(p: AxisymProfiles, orbit: ZollOrbit, n: int = 4001,
                    convention: str = "smooth"):
    """Samples ``(t, omega)`` of the potential for the ``-sin(psi)`` term.

    ``convention="printed"`` is ``arg((1 - zeta/conj(a)) / (1 - zeta/a)) / 2``
    with ``1/a = (h - i)|cos phi|``, tracked continuously. On the round
    sphere its derivative is ``+sign(cos phi) sin psi``.
    ``convention="smooth"`` is ``arg(cos psi + (i cos phi - h|cos phi|) sin psi)``;
    it is continuous through the equator and has derivative ``-sin psi``
    whenever the flow comes from the disk construction.
    """
    t, y = orbit.sample(n)
    z, sign = _omega_argument(p, y[0], y[2], convention)
    omega = sign * winding_angle(z.real, z.imag, max_step=np.pi)
    d = np.diff(omega)
    if d.size and np.max(np.abs(d)) >= np.pi:
        raise ResolutionError("omega jumps by pi or more between samples")
    return t, omega


def omega_value(h: float, phi: float, zeta: float, convention: str = "printed") -> float:
    """Pointwise value on the principal branch.

    ``"printed"``: ``arg((1 - zeta/conj(a))/(1 - zeta/a))/2``; ``"smooth"``:
    the argument used by :func:`omega_potential` (``psi = atan(zeta)``).
    """
    if convention == "printed":
        inv_a = (h - 1j) * abs(np.cos(phi))
        ratio = (1.0 - zeta * np.conj(inv_a)) / (1.0 - zeta * inv_a)
        return 0.5 * float(np.angle(ratio))
    if convention != "smooth":
        raise ValueError(f"unknown convention {convention!r}")
    c = np.cos(phi)
    return float(np.angle(1.0 + (1j * c - h * abs(c)) * zeta))


@dataclass
class OrbitDiagnostics:
    phi0: float
    psi0: float
    period: float
    closure_error: float
    theta_holonomy: float
    phi_min: float
    phi_max: float
    closed: bool
    holonomy: Optional[HolonomyReport] = None
    orbit: Optional[ZollOrbit] = None

    def __post_init__(self):
        if not self.closure_error >= 0 and self.closed:
            raise ValueError("closure_error must be nonnegative")


def _initial_psi(initial) -> tuple:
    if isinstance(initial, GeodesicState):
        if initial.chart == 0:
            psi = float(np.arctan(initial.zeta) % np.pi)
        else:
            psi = float(np.arctan2(1.0, initial.zeta) % np.pi)
        return initial.x1, initial.x2, psi
    if isinstance(initial, ProjectedState):
        return initial.phi, 0.0, initial.psi
    phi, theta, zeta = initial
    return float(phi), float(theta), float(np.arctan(zeta) % np.pi)


def closure_check(p: AxisymProfiles, initial, tol: float = DEFAULT_TOL,
                  horizon_factor: float = HORIZON_FACTOR) -> OrbitDiagnostics:
    """Integrate the spray from ``initial`` until the projected state returns
    and measure the state-space distance (theta mod 2 pi) at the return."""
    phi0, theta0, psi0 = _initial_psi(initial)
    y0 = np.array([phi0, theta0, psi0, 0.0])
    orbit = _closed_orbit(p, y0, tol, horizon_factor)
    if not orbit.closed:
        return OrbitDiagnostics(phi0, psi0, float("nan"), float("inf"), float("nan"),
                                float("nan"), float("nan"), False, None, orbit)
    y1 = orbit(orbit.period)[:, 0]
    hol = theta_holonomy(p, orbit)
    err = float(np.sqrt((y1[0] - phi0) ** 2 + (y1[2] - psi0) ** 2 + hol.reduced ** 2))
    _, ys = orbit.sample(2001)
    return OrbitDiagnostics(phi0, psi0, orbit.period, err, hol.reduced,
                            float(np.min(ys[0])), float(np.max(ys[0])), True, hol, orbit)


# ---------------------------------------------------------------------------
# conjugacy along Zoll geodesics
# ---------------------------------------------------------------------------

def _variational_rhs(p: AxisymProfiles, eps: float = 1e-7):
    rhs = flow_field(p)

    def f(t, z):
        y = z[:4]
        d = np.zeros((4, 2))
        d[:3, 0], d[:3, 1] = z[4:7], z[7:10]
        e = eps / np.maximum(np.linalg.norm(d, axis=0), 1e-300)
        # all five evaluations in one vectorized call
        Y = np.column_stack([y, y[:, None] + d * e, y[:, None] - d * e])
        R = rhs(t, Y)
        jd = (R[:, 1:3] - R[:, 3:5]) / (2.0 * e)
        return np.concatenate([R[:, 0], jd[:3, 0], jd[:3, 1]])

    return f


def zoll_conjugacy(p: AxisymProfiles, orbit, tol: float = DEFAULT_TOL, n: int = 4001) -> int:
    """Conjugacy number from the variational equation of the spray flow.

    Two variations spanning the normal directions are transported; the base
    normal component ``n = dphi * theta' - dtheta * phi'`` of each is a
    Jacobi class. The winding of ``[n1 : n2]`` over one period, divided by pi,
    counts conjugate points.
    """
    if isinstance(orbit, OrbitDiagnostics):
        orbit = orbit.orbit
    if orbit is None or not orbit.closed:
        raise OpenOrbitError("conjugacy needs a closed orbit")
    y0 = orbit(0.0)[:, 0]
    x0 = flow_field(p)(0.0, y0)
    d1 = np.array([0.0, 0.0, 1.0])
    d2 = np.array([-x0[1], x0[0], 0.0])
    z0 = np.concatenate([y0, d1, d2])
    sol = solve_ivp(_variational_rhs(p), (0.0, orbit.period), z0, method="DOP853",
                    rtol=tol, atol=tol, dense_output=True)
    t = np.linspace(0.0, orbit.period, n)
    z = sol.sol(t)
    X = flow_field(p)(0.0, z[:4])
    nrm = []
    for k in range(2):
        d = z[4 + 3 * k: 7 + 3 * k]
        nrm.append(d[0] * X[1] - d[1] * X[0])
    n1, n2 = nrm
    scale = np.hypot(n1, n2)
    base = np.hypot(X[0], X[1]) * max(np.max(np.abs(z[4:])), 1.0)
    if np.min(scale) < 1e-10 * np.max(base):
        raise DegenerateMonodromyError("variations are not transverse to the orbit")
    ang = winding_angle(n1, n2)
    turns = (ang[-1] - ang[0]) / np.pi
    k = int(round(turns))
    if abs(turns - k) > 1e-3:
        raise DegenerateMonodromyError(f"winding {turns:.6f} is not a multiple of pi")
    return abs(k)


def zoll_jacobi(p: AxisymProfiles, orbit, tol: float = DEFAULT_TOL,
                samples: Optional[int] = 20001) -> JacobiData:
    """Fundamental Jacobi pair along the base geodesic, computed from the
    Ricci curvature of a representative connection of the spray."""
    if isinstance(orbit, OrbitDiagnostics):
        orbit = orbit.orbit
    if orbit is None or not orbit.closed:
        raise OpenOrbitError("Jacobi data need a closed orbit")
    conn = zoll_connection(p)
    ra = ricci_along(conn, orbit, (0.0, orbit.period), tol=tol)
    sol = ra.jacobi([1.0, 0.0], [0.0, 1.0], tol=tol, samples=samples)
    return JacobiData.from_solution(sol)


def zoll_conjugacy_kappa(p: AxisymProfiles, orbit, tol: float = DEFAULT_TOL):
    """Conjugacy number and Wronskian drift via the Ricci route."""
    jd = zoll_jacobi(p, orbit, tol)
    return conjugacy_number(jd, jd.t[-1] - jd.t[0]), jd.wronskian_drift()
