"""Affine connections on surfaces, their projective cubic, geodesic sprays
and Jacobi/conjugacy analysis.

Index convention: ``G[j, k, l]`` is the Christoffel symbol with upper index
``j`` and lower indices ``k, l`` (0-based, so ``G[1, 0, 0]`` is the
second-upper, first-first component). Derivative arrays carry the
differentiation index last among the tensor indices: ``dG[j, k, l, m]``.
Trailing axes broadcast over sample points.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from .errors import (
    ChartMismatchError,
    FiniteDifferenceError,
    InvalidConnectionError,
    PeriodMismatchError,
    ResolutionError,
    SingularChartError,
)

FD_STEP = 1e-5
SYMMETRY_TOL = 1e-10
SWITCH_THRESHOLD = 2.0
DEFAULT_TOL = 1e-10


# ---------------------------------------------------------------------------
# connections
# ---------------------------------------------------------------------------

class AffineConnection2D:
    """Torsion-free affine connection in a single chart.

    ``christoffel(x1, x2)`` returns an array of shape ``(2, 2, 2) + shape``.
    ``christoffel_jacobian`` is optional; without it, central differences
    with step ``fd_step`` are used.
    """

    def __init__(
        self,
        christoffel: Callable,
        christoffel_jacobian: Optional[Callable] = None,
        chart_name: str = "chart",
        fd_step: float = FD_STEP,
    ):
        self._christoffel = christoffel
        self._jacobian = christoffel_jacobian
        self.chart_name = chart_name
        self.fd_step = fd_step

    @property
    def has_analytic_jacobian(self) -> bool:
        return self._jacobian is not None

    def christoffel(self, x1, x2) -> np.ndarray:
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        G = np.asarray(self._christoffel(x1, x2), dtype=float)
        return np.broadcast_to(G, (2, 2, 2) + x1.shape)

    def christoffel_jacobian(self, x1, x2) -> np.ndarray:
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        if self._jacobian is not None:
            dG = np.asarray(self._jacobian(x1, x2), dtype=float)
            return np.broadcast_to(dG, (2, 2, 2, 2) + x1.shape)
        h = self.fd_step
        d1 = (self.christoffel(x1 + h, x2) - self.christoffel(x1 - h, x2)) / (2 * h)
        d2 = (self.christoffel(x1, x2 + h) - self.christoffel(x1, x2 - h)) / (2 * h)
        dG = np.stack([d1, d2], axis=3)
        if not np.all(np.isfinite(dG)):
            raise FiniteDifferenceError(
                f"finite-difference Christoffel derivative is not finite in chart {self.chart_name!r}"
            )
        return dG

    def asymmetry(self, x1, x2) -> np.ndarray:
        G = self.christoffel(x1, x2)
        return np.max(np.abs(G[:, 0, 1] - G[:, 1, 0]), axis=0)

    def check_torsion_free(self, x1, x2, tol: float = SYMMETRY_TOL) -> None:
        worst = float(np.max(self.asymmetry(x1, x2)))
        if worst > tol:
            raise InvalidConnectionError(
                f"Christoffel symbols not symmetric: max |G^j_12 - G^j_21| = {worst:.3e}"
            )

    def ricci(self, x1, x2) -> np.ndarray:
        """Ricci tensor ``r_bd = R^a_{bad}``, shape ``(2, 2) + shape``."""
        G = self.christoffel(x1, x2)
        dG = self.christoffel_jacobian(x1, x2)
        r = (
            np.einsum("adba...->bd...", dG)
            - np.einsum("aabd...->bd...", dG)
            + np.einsum("aae...,edb...->bd...", G, G)
            - np.einsum("ade...,eab...->bd...", G, G)
        )
        return r

    def acceleration_term(self, x1, x2, u) -> np.ndarray:
        """``Gamma^j_kl u^k u^l`` for velocity ``u`` of shape ``(2,) + shape``."""
        G = self.christoffel(x1, x2)
        return np.einsum("jkl...,k...,l...->j...", G, u, u)

    def __repr__(self):
        return f"AffineConnection2D(chart_name={self.chart_name!r})"


def connection_from_components(
    components: dict, chart_name: str = "chart", jacobians: Optional[dict] = None
) -> AffineConnection2D:
    """Build a connection from a dict ``{(j, k, l): f(x1, x2)}`` of nonzero
    components (1-based indices, lower pair symmetrized automatically)."""

    def G(x1, x2):
        out = np.zeros((2, 2, 2) + np.shape(x1))
        for (j, k, l), f in components.items():
            val = f(x1, x2)
            out[j - 1, k - 1, l - 1] = val
            out[j - 1, l - 1, k - 1] = val
        return out

    def jac(x1, x2):
        out = np.zeros((2, 2, 2, 2) + np.shape(x1))
        for (j, k, l), f in jacobians.items():
            val = np.asarray(f(x1, x2))
            out[j - 1, k - 1, l - 1] = val
            out[j - 1, l - 1, k - 1] = val
        return out

    return AffineConnection2D(
        G,
        jac if jacobians is not None else None,
        chart_name=chart_name,
    )


def flat_connection(chart_name: str = "plane") -> AffineConnection2D:
    return AffineConnection2D(
        lambda x1, x2: np.zeros((2, 2, 2) + np.shape(x1)),
        lambda x1, x2: np.zeros((2, 2, 2, 2) + np.shape(x1)),
        chart_name=chart_name,
    )


def round_sphere_connection(chart_name: str = "sphere-polar") -> AffineConnection2D:
    """Levi-Civita connection of ``d phi^2 + sin^2 phi d theta^2`` in (phi, theta)."""

    def G(phi, theta):
        out = np.zeros((2, 2, 2) + np.shape(phi))
        out[0, 1, 1] = -np.sin(phi) * np.cos(phi)
        out[1, 0, 1] = out[1, 1, 0] = np.cos(phi) / np.sin(phi)
        return out

    def dG(phi, theta):
        out = np.zeros((2, 2, 2, 2) + np.shape(phi))
        out[0, 1, 1, 0] = -np.cos(2 * phi)
        out[1, 0, 1, 0] = out[1, 1, 0, 0] = -1.0 / np.sin(phi) ** 2
        return out

    return AffineConnection2D(G, dG, chart_name=chart_name)


def connection_from_csv(path, chart_name: str = "table", method: str = "cubic") -> AffineConnection2D:
    """Connection tabulated on a regular ``(x1, x2)`` grid.

    The CSV header is ``x1,x2`` followed by any of ``G111 ... G222`` (upper
    index first, 1-based); missing components are zero and a component
    given only as ``Gjkl`` is mirrored to ``Gjlk``. Derivatives fall back to
    finite differences of the interpolant.
    """
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names
    if names[:2] != ("x1", "x2"):
        raise ValueError("CSV must start with columns x1,x2")
    g1, g2 = np.unique(data["x1"]), np.unique(data["x2"])
    if g1.size * g2.size != data.size:
        raise ValueError("samples do not form a full regular grid")
    order = np.lexsort((data["x2"], data["x1"]))
    interps = {}
    for name in names[2:]:
        if len(name) != 4 or name[0] != "G" or not set(name[1:]) <= {"1", "2"}:
            raise ValueError(f"unknown column {name!r}")
        vals = data[name][order].reshape(g1.size, g2.size)
        interps[tuple(int(c) for c in name[1:])] = RegularGridInterpolator((g1, g2), vals, method=method)

    def G(x1, x2):
        shape = np.shape(x1)
        pts = np.column_stack([np.ravel(x1), np.ravel(x2)])
        out = np.zeros((2, 2, 2) + shape)
        for (j, k, l), f in interps.items():
            v = f(pts).reshape(shape)
            out[j - 1, k - 1, l - 1] = v
            if (j, l, k) not in interps:
                out[j - 1, l - 1, k - 1] = v
        return out

    return AffineConnection2D(G, None, chart_name=chart_name)


def _expand(value, lead, shape):
    # constant components come back without the sample axes
    v = np.asarray(value, float)
    v = v.reshape(v.shape + (1,) * (len(lead) + len(shape) - v.ndim))
    return np.broadcast_to(v, lead + shape)


def projective_shift(
    conn: AffineConnection2D, beta: Callable, beta_jacobian: Optional[Callable] = None
) -> AffineConnection2D:
    """Connection ``G + delta beta + beta delta`` for a 1-form ``beta(x1, x2)``
    returning shape ``(2,) + shape``; ``beta_jacobian`` returns ``(2, 2) + shape``
    with the derivative index last."""
    eye = np.eye(2)

    def G(x1, x2):
        b = _expand(beta(x1, x2), (2,), np.shape(x1))
        shift = np.einsum("jk,l...->jkl...", eye, b) + np.einsum("k...,jl->jkl...", b, eye)
        return conn.christoffel(x1, x2) + shift

    jac = None
    if beta_jacobian is not None and conn.has_analytic_jacobian:
        def jac(x1, x2):
            db = _expand(beta_jacobian(x1, x2), (2, 2), np.shape(x1))
            shift = np.einsum("jk,lm...->jklm...", eye, db) + np.einsum("km...,jl->jklm...", db, eye)
            return conn.christoffel_jacobian(x1, x2) + shift

    return AffineConnection2D(G, jac, chart_name=conn.chart_name, fd_step=conn.fd_step)


# ---------------------------------------------------------------------------
# the projective cubic
# ---------------------------------------------------------------------------

class SprayCubic:
    """``P(x, zeta) = c0 + c1 zeta + c2 zeta^2 + c3 zeta^3`` in one chart."""

    def __init__(self, coeffs: Callable, chart_name: str = "chart"):
        self._coeffs = coeffs
        self.chart_name = chart_name

    def coeffs(self, x1, x2) -> np.ndarray:
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        return np.broadcast_to(np.asarray(self._coeffs(x1, x2), float), (4,) + x1.shape)

    def __call__(self, x1, x2, zeta):
        c0, c1, c2, c3 = self.coeffs(x1, x2)
        return c0 + zeta * (c1 + zeta * (c2 + zeta * c3))

    def inverted(self, x1, x2, zeta_t):
        """Fiber derivative in the chart ``zeta_t = 1/zeta`` (parameter x2):
        ``d zeta_t / d x2 = -(c3 + c2 zt + c1 zt^2 + c0 zt^3)``."""
        c0, c1, c2, c3 = self.coeffs(x1, x2)
        return -(c3 + zeta_t * (c2 + zeta_t * (c1 + zeta_t * c0)))


def _cubic_from_G(G):
    return np.stack([
        -G[1, 0, 0],
        G[0, 0, 0] - 2 * G[1, 0, 1],
        2 * G[0, 0, 1] - G[1, 1, 1],
        G[0, 1, 1],
    ])


def pesce_coefficients(conn: AffineConnection2D, symmetry_tol: float = SYMMETRY_TOL) -> SprayCubic:
    """Projective cubic of a torsion-free connection.

    Symmetry is verified on every evaluation; a violation beyond
    ``symmetry_tol`` raises :class:`InvalidConnectionError`.
    """

    def coeffs(x1, x2):
        G = conn.christoffel(x1, x2)
        worst = np.max(np.abs(G[:, 0, 1] - G[:, 1, 0])) if G.size else 0.0
        if worst > symmetry_tol:
            raise InvalidConnectionError(
                f"Christoffel symbols not symmetric: deviation {worst:.3e}"
            )
        return _cubic_from_G(G)

    return SprayCubic(coeffs, chart_name=conn.chart_name)


@dataclass(frozen=True)
class ProjectiveComparison:
    equivalent: bool
    max_deviation: float
    beta: Optional[np.ndarray]  # shape (2, n) when equivalent


def is_projectively_equivalent(
    a: AffineConnection2D, b: AffineConnection2D, samples, tol: float = 1e-10
) -> ProjectiveComparison:
    """Compare the cubics of ``a`` and ``b`` at ``samples`` (shape ``(n, 2)``).

    When equivalent, ``beta`` is recovered from the trace of the difference
    tensor ``D = b - a``: ``D^i_{ik} = 3 beta_k`` in two dimensions.
    """
    if a.chart_name != b.chart_name:
        raise ChartMismatchError(f"charts differ: {a.chart_name!r} vs {b.chart_name!r}")
    pts = np.atleast_2d(np.asarray(samples, float))
    x1, x2 = pts[:, 0], pts[:, 1]
    Pa = pesce_coefficients(a).coeffs(x1, x2)
    Pb = pesce_coefficients(b).coeffs(x1, x2)
    dev = float(np.max(np.abs(Pa - Pb))) if pts.size else 0.0
    if dev > tol:
        return ProjectiveComparison(False, dev, None)
    D = b.christoffel(x1, x2) - a.christoffel(x1, x2)
    beta = np.einsum("iik...->k...", D) / 3.0
    return ProjectiveComparison(True, dev, beta)


# ---------------------------------------------------------------------------
# spray and geodesics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeodesicState:
    """Point of the projectivized tangent bundle.

    ``chart == 0``: ``zeta = dx2/dx1``; ``chart == 1``: ``zeta`` holds
    ``1/zeta = dx1/dx2``. ``sign`` orients the curve relative to the chart's
    preferred parameter.
    """

    x1: float
    x2: float
    zeta: float
    chart: int = 0
    sign: int = 1

    def slope(self) -> float:
        """Fiber coordinate in chart 0 (may be infinite)."""
        if self.chart == 0:
            return self.zeta
        return np.inf if self.zeta == 0 else 1.0 / self.zeta

    def direction(self) -> np.ndarray:
        if self.chart == 0:
            return self.sign * np.array([1.0, self.zeta])
        return self.sign * np.array([self.zeta, 1.0])


def spray_vector(spray: SprayCubic, s: GeodesicState):
    """Spray components ``(dx1, dx2, dzeta)`` in the active fiber chart."""
    if s.chart == 0:
        return (1.0, s.zeta, float(spray(s.x1, s.x2, s.zeta)))
    return (s.zeta, 1.0, float(spray.inverted(s.x1, s.x2, s.zeta)))


def _segment_rhs(spray: SprayCubic, chart: int, sign: int):
    # parameter normalized to unit coordinate speed so the tangent stays
    # continuous across chart switches
    if chart == 0:
        def rhs(t, y):
            k = sign / np.sqrt(1.0 + y[2] * y[2])
            return [k, k * y[2], k * spray(y[0], y[1], y[2])]
    else:
        def rhs(t, y):
            k = sign / np.sqrt(1.0 + y[2] * y[2])
            return [k * y[2], k, k * spray.inverted(y[0], y[1], y[2])]
    return rhs


@dataclass
class _Segment:
    t0: float
    t1: float
    chart: int
    sign: int
    sol: object


@dataclass
class GeodesicOrbit:
    """Piecewise dense solution of the spray across fiber-chart switches."""

    spray: SprayCubic
    segments: list = field(default_factory=list)

    @property
    def t_start(self) -> float:
        return self.segments[0].t0

    @property
    def t_end(self) -> float:
        return self.segments[-1].t1

    @property
    def switch_times(self) -> list:
        return [seg.t0 for seg in self.segments[1:]]

    def _locate(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        starts = np.array([seg.t0 for seg in self.segments])
        idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(self.segments) - 1)
        return t, idx

    def raw(self, t):
        """Chart-local values ``(y, chart, sign)`` at times ``t``."""
        t, idx = self._locate(t)
        y = np.empty((3, t.size))
        chart = np.empty(t.size, dtype=int)
        sign = np.empty(t.size, dtype=int)
        for k in np.unique(idx):
            m = idx == k
            seg = self.segments[k]
            y[:, m] = seg.sol(t[m])
            chart[m] = seg.chart
            sign[m] = seg.sign
        return y, chart, sign

    def state(self, t: float) -> GeodesicState:
        y, chart, sign = self.raw(t)
        return GeodesicState(float(y[0, 0]), float(y[1, 0]), float(y[2, 0]), int(chart[0]), int(sign[0]))

    @property
    def times(self) -> np.ndarray:
        return np.concatenate([seg.sol.ts if hasattr(seg.sol, "ts") else [seg.t0, seg.t1] for seg in self.segments])

    def states(self, t) -> list:
        y, chart, sign = self.raw(t)
        return [GeodesicState(*y[:, i], int(chart[i]), int(sign[i])) for i in range(y.shape[1])]

    def position(self, t) -> np.ndarray:
        y, _, _ = self.raw(t)
        return y[:2]

    def curve(self, t):
        """Position, velocity and acceleration in the curve parameter
        (unit coordinate speed)."""
        y, chart, sign = self.raw(t)
        x = y[:2]
        z = y[2]
        n2 = 1.0 + z * z
        n = np.sqrt(n2)
        u = np.empty_like(x)
        a = np.empty_like(x)
        c0 = chart == 0
        c1 = ~c0
        P = self.spray(x[0, c0], x[1, c0], z[c0]) / n2[c0] ** 2
        u[0, c0] = sign[c0] / n[c0]
        u[1, c0] = sign[c0] * z[c0] / n[c0]
        a[0, c0] = -z[c0] * P
        a[1, c0] = P
        Q = self.spray.inverted(x[0, c1], x[1, c1], z[c1]) / n2[c1] ** 2
        u[0, c1] = sign[c1] * z[c1] / n[c1]
        u[1, c1] = sign[c1] / n[c1]
        a[0, c1] = Q
        a[1, c1] = -z[c1] * Q
        return x, u, a

    def to_csv(self, path, n: int = 1001) -> None:
        t = np.linspace(self.t_start, self.t_end, n)
        y, chart, _ = self.raw(t)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x1", "x2", "zeta", "chart"])
            for i in range(t.size):
                w.writerow([f"{t[i]:.17g}", f"{y[0, i]:.17g}", f"{y[1, i]:.17g}", f"{y[2, i]:.17g}", int(chart[i])])


def integrate_geodesic(
    spray: SprayCubic,
    s0: GeodesicState,
    t_max: float,
    tol: float = DEFAULT_TOL,
    switch_threshold: float = SWITCH_THRESHOLD,
    max_switches: int = 100000,
) -> GeodesicOrbit:
    """Adaptive DOP853 integration of the spray, switching fiber charts
    whenever ``|zeta| > switch_threshold``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    orbit = GeodesicOrbit(spray)
    t = 0.0
    state = s0
    if abs(state.zeta) > switch_threshold:
        state = _switch(state)

    def event(t, y):
        return abs(y[2]) - switch_threshold

    event.terminal = True
    event.direction = 1

    for _ in range(max_switches):
        rhs = _segment_rhs(spray, state.chart, state.sign)
        y0 = [state.x1, state.x2, state.zeta]
        try:
            sol = solve_ivp(rhs, (t, t_max), y0, method="DOP853", rtol=tol, atol=tol,
                            dense_output=True, events=event)
        except (ZeroDivisionError, FloatingPointError) as exc:
            raise SingularChartError(f"spray evaluation failed: {exc}", state) from exc
        if sol.status == -1 or not np.all(np.isfinite(sol.y)):
            good = np.all(np.isfinite(sol.y), axis=0)
            last = sol.y[:, good][:, -1] if good.any() else y0
            last_state = GeodesicState(*map(float, last), state.chart, state.sign)
            raise SingularChartError(f"integration failed near chart singularity: {sol.message}", last_state)
        t_end = float(sol.t[-1])
        orbit.segments.append(_Segment(t, t_end, state.chart, state.sign, sol.sol))
        if sol.status == 0:
            return orbit
        ye = sol.y_events[0][0]
        t = float(sol.t_events[0][0])
        state = _switch(GeodesicState(*map(float, ye), state.chart, state.sign))
    raise SingularChartError("too many chart switches", state)


def _switch(s: GeodesicState) -> GeodesicState:
    """Move to the other fiber chart, keeping the curve orientation."""
    return GeodesicState(s.x1, s.x2, 1.0 / s.zeta, 1 - s.chart, s.sign * int(np.sign(s.zeta)))


# ---------------------------------------------------------------------------
# Ricci along curves and Jacobi fields
# ---------------------------------------------------------------------------

class RicciAlong:
    """Ricci data along a geodesic given in an arbitrary curve parameter.

    ``curve(t)`` must return ``(x, u, a)`` arrays of shape ``(2, n)``. With
    ``nabla_u u = lam u``, the affine parameter has ``ds/dt = sigma`` where
    ``sigma' = lam sigma``; then ``kappa = r(u, u) / sigma^2``.
    """

    def __init__(self, conn: AffineConnection2D, curve: Callable, t0: float, t1: float,
                 scale: float = 1.0, tol: float = DEFAULT_TOL):
        self.conn = conn
        self.curve = curve
        self.t0 = float(t0)
        self.t1 = float(t1)
        self.scale = float(scale)
        self.tol = tol
        self._affine = None

    def _nabla(self, t):
        x, u, a = self.curve(t)
        acc = a + self.conn.acceleration_term(x[0], x[1], u)
        return x, u, acc

    def lam(self, t):
        _, u, acc = self._nabla(t)
        return np.sum(acc * u, axis=0) / np.sum(u * u, axis=0)

    def geodesic_residual(self, t):
        """``|nabla_u u - lam u| / |u|^2``; zero along geodesics."""
        _, u, acc = self._nabla(t)
        lam = np.sum(acc * u, axis=0) / np.sum(u * u, axis=0)
        return np.linalg.norm(acc - lam * u, axis=0) / np.sum(u * u, axis=0)

    def ruu(self, t):
        x, u, _ = self.curve(t)
        r = self.conn.ricci(x[0], x[1])
        return np.einsum("bd...,b...,d...->...", r, u, u)

    def _rhs_affine(self, t, y):
        # y = (log sigma, s)
        lam = self.lam(np.array([t]))[0]
        return [lam, np.exp(y[0])]

    def affine(self):
        """Dense solution of ``(log sigma, s)`` over ``[t0, t1]``.

        ``sigma(t0) = 1/scale`` so that the affine tangent at ``t0`` is
        ``scale * u(t0)``.
        """
        if self._affine is None:
            sol = solve_ivp(self._rhs_affine, (self.t0, self.t1), [-np.log(self.scale), 0.0],
                            method="DOP853", rtol=self.tol, atol=self.tol, dense_output=True)
            if sol.status != 0:
                raise FiniteDifferenceError(f"affine reparameterization failed: {sol.message}")
            self._affine = sol.sol
        return self._affine

    def sigma(self, t):
        return np.exp(self.affine()(t)[0])

    def s_of_t(self, t):
        return self.affine()(t)[1]

    def kappa_curve(self, t):
        """kappa at curve-parameter values ``t``."""
        return self.ruu(t) / self.sigma(t) ** 2

    def kappa(self, n: int = 2001) -> Callable:
        """Spline of kappa as a function of the affine parameter."""
        t = np.linspace(self.t0, self.t1, n)
        return CubicSpline(self.s_of_t(t), self.kappa_curve(t))

    def jacobi(self, y0: Sequence[float], p0: Sequence[float], t_end: Optional[float] = None,
               tol: Optional[float] = None, n: int = 2001,
               samples: Optional[int] = None) -> "JacobiSolution":
        """Solve the Jacobi equation in the curve parameter:
        ``y' = sigma p``, ``p' = -(r(u,u)/sigma) y``, with ``p = dy/ds``.

        With ``samples`` set, ``lambda`` and ``r(u,u)`` are evaluated once on
        a uniform grid of that size and interpolated by cubic splines, which
        is much faster when the connection is expensive to evaluate. The
        Wronskian is conserved by the equation for any coefficient, so this
        only affects the conjugate-point locations, not the drift.
        """
        tol = self.tol if tol is None else tol
        t_end = self.t1 if t_end is None else t_end
        y0 = np.atleast_1d(np.asarray(y0, float))
        p0 = np.atleast_1d(np.asarray(p0, float))
        k = y0.size

        if samples is not None:
            tg = np.linspace(self.t0, t_end, int(samples))
            lam_s = CubicSpline(tg, self.lam(tg))
            ruu_s = CubicSpline(tg, self.ruu(tg))

            def coeffs(t):
                return float(lam_s(t)), float(ruu_s(t))
        else:
            def coeffs(t):
                x, u, a = self.curve(np.array([t]))
                acc = a + self.conn.acceleration_term(x[0], x[1], u)
                lam = float(np.sum(acc * u) / np.sum(u * u))
                r = self.conn.ricci(x[0], x[1])
                return lam, float(np.einsum("bd...,b...,d...->...", r, u, u)[0])

        def rhs(t, z):
            lam, ruu = coeffs(t)
            sig = np.exp(z[0])
            y = z[2:2 + k]
            p = z[2 + k:]
            return np.concatenate([[lam, sig], sig * p, -(ruu / sig) * y])

        z0 = np.concatenate([[-np.log(self.scale), 0.0], y0, p0])
        sol = solve_ivp(rhs, (self.t0, t_end), z0, method="DOP853", rtol=tol, atol=tol, dense_output=True)
        if sol.status != 0:
            raise FiniteDifferenceError(f"Jacobi integration failed: {sol.message}")
        tc = np.linspace(self.t0, t_end, n)
        z = sol.sol(tc)
        return JacobiSolution(
            t=z[1], y=z[2:2 + k], yp=z[2 + k:], dense=_AffineDense(sol.sol, k), t_curve=tc,
        )


class _AffineDense:
    """Dense evaluator returning ``(y, yp)`` at affine parameter values."""

    def __init__(self, sol, k):
        self.sol = sol
        self.k = k
        tt = np.linspace(sol.t_min, sol.t_max, 4001)
        ss = sol(tt)[1]
        self._t_of_s = CubicSpline(ss, tt)

    def __call__(self, s):
        z = self.sol(self._t_of_s(s))
        return z[2:2 + self.k], z[2 + self.k:]


def ricci_along(conn: AffineConnection2D, orbit, t_span=None, scale: float = 1.0,
                tol: float = DEFAULT_TOL) -> RicciAlong:
    """Ricci data along ``orbit`` (anything with a ``curve(t)`` method)."""
    if t_span is None:
        t_span = (orbit.t_start, orbit.t_end)
    return RicciAlong(conn, orbit.curve, t_span[0], t_span[1], scale=scale, tol=tol)


@dataclass
class JacobiSolution:
    """Samples of one or more solutions of ``y'' + kappa y = 0``.

    ``y`` and ``yp`` have shape ``(k, n)``; ``t`` is the affine parameter.
    """

    t: np.ndarray
    y: np.ndarray
    yp: np.ndarray
    dense: Optional[Callable] = None
    t_curve: Optional[np.ndarray] = None

    def __post_init__(self):
        self.y = np.atleast_2d(self.y)
        self.yp = np.atleast_2d(self.yp)

    def component(self, i: int) -> "JacobiSolution":
        dense = None
        if self.dense is not None:
            d = self.dense
            dense = lambda s: tuple(v[i:i + 1] for v in d(s))  # noqa: E731
        return JacobiSolution(self.t, self.y[i:i + 1], self.yp[i:i + 1], dense, self.t_curve)


def jacobi_integrate(kappa: Callable, y0, yp0, t_range, tol: float = DEFAULT_TOL,
                     n: int = 2001) -> JacobiSolution:
    """Solve ``y'' + kappa(t) y = 0``; vector ``y0``/``yp0`` integrate several
    solutions at once."""
    y0 = np.atleast_1d(np.asarray(y0, float))
    yp0 = np.atleast_1d(np.asarray(yp0, float))
    k = y0.size

    def rhs(t, z):
        return np.concatenate([z[k:], -kappa(t) * z[:k]])

    sol = solve_ivp(rhs, tuple(t_range), np.concatenate([y0, yp0]), method="DOP853",
                    rtol=tol, atol=tol, dense_output=True)
    if sol.status != 0:
        raise FiniteDifferenceError(f"Jacobi integration failed: {sol.message}")
    t = np.linspace(t_range[0], t_range[1], n)
    z = sol.sol(t)
    dense = lambda s: (sol.sol(s)[:k], sol.sol(s)[k:])  # noqa: E731
    return JacobiSolution(t, z[:k], z[k:], dense)


def wronskian(sol1: JacobiSolution, sol2: JacobiSolution) -> np.ndarray:
    if sol1.t.shape != sol2.t.shape or not np.allclose(sol1.t, sol2.t, rtol=0, atol=1e-12):
        raise ValueError("solutions must share a time grid")
    return sol1.y[0] * sol2.yp[0] - sol2.y[0] * sol1.yp[0]


def wronskian_drift(sol1: JacobiSolution, sol2: JacobiSolution) -> float:
    W = wronskian(sol1, sol2)
    return float(np.max(np.abs(W - W[0])))


@dataclass
class JacobiData:
    """Two independent Jacobi solutions along a geodesic."""

    kappa: Optional[Callable]
    t: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    yp1: np.ndarray
    yp2: np.ndarray
    wronskian0: float
    dense: Optional[Callable] = None

    @classmethod
    def from_solution(cls, sol: JacobiSolution, kappa: Optional[Callable] = None) -> "JacobiData":
        if sol.y.shape[0] != 2:
            raise ValueError("need exactly two solutions")
        W0 = float(sol.y[0, 0] * sol.yp[1, 0] - sol.y[1, 0] * sol.yp[0, 0])
        return cls(kappa, sol.t, sol.y[0], sol.y[1], sol.yp[0], sol.yp[1], W0, sol.dense)

    def wronskian(self) -> np.ndarray:
        return self.y1 * self.yp2 - self.y2 * self.yp1

    def wronskian_drift(self) -> float:
        W = self.wronskian()
        return float(np.max(np.abs(W - self.wronskian0)))

    def combine(self, M) -> "JacobiData":
        """Apply a 2x2 matrix to the solution pair."""
        M = np.asarray(M, float)
        y1 = M[0, 0] * self.y1 + M[0, 1] * self.y2
        y2 = M[1, 0] * self.y1 + M[1, 1] * self.y2
        yp1 = M[0, 0] * self.yp1 + M[0, 1] * self.yp2
        yp2 = M[1, 0] * self.yp1 + M[1, 1] * self.yp2
        dense = None
        if self.dense is not None:
            d = self.dense

            def dense(s):
                y, yp = d(s)
                return M @ y, M @ yp
        W0 = float(y1[0] * yp2[0] - y2[0] * yp1[0])
        return JacobiData(self.kappa, self.t, y1, y2, yp1, yp2, W0, dense)


def jacobi_data(kappa: Callable, t_range, tol: float = DEFAULT_TOL, n: int = 2001) -> JacobiData:
    """Fundamental pair with ``(y, y')(t0) = (1, 0)`` and ``(0, 1)``."""
    sol = jacobi_integrate(kappa, [1.0, 0.0], [0.0, 1.0], t_range, tol=tol, n=n)
    return JacobiData.from_solution(sol, kappa)


def winding_angle(y1: np.ndarray, y2: np.ndarray, max_step: float = np.pi / 2) -> np.ndarray:
    """Unwrapped angle of ``(y1, y2)``; raises if a sample step reaches ``max_step``."""
    ang = np.arctan2(y2, y1)
    d = np.diff(ang)
    d = (d + np.pi) % (2 * np.pi) - np.pi
    if d.size and np.max(np.abs(d)) >= max_step:
        raise ResolutionError("angle step exceeds pi/2 between samples; refine the grid")
    return np.concatenate([[ang[0]], ang[0] + np.cumsum(d)])


def conjugacy_number(jacobi: JacobiData, period: float, rtol: float = 1e-5,
                     n_min: int = 2001) -> int:
    """Degree of ``t -> [y1 : y2]`` in RP^1 over one period.

    Counted as the accumulated angle of ``(y1, y2)`` divided by pi. The
    monodromy over ``period`` must be a scalar multiple of the identity.
    """
    t0 = jacobi.t[0]
    t1 = t0 + period
    if t1 > jacobi.t[-1] * (1 + 1e-12) + 1e-12:
        raise PeriodMismatchError("solutions do not cover the requested period")
    if jacobi.dense is not None:
        Y0 = np.array([[jacobi.y1[0], jacobi.y2[0]], [jacobi.yp1[0], jacobi.yp2[0]]])
        y, yp = jacobi.dense(t1)
        Y1 = np.array([[y[0], y[1]], [yp[0], yp[1]]]).reshape(2, 2)
        M = np.linalg.solve(Y0, Y1)
        mu = 0.5 * np.trace(M)
        dev = np.max(np.abs(M - mu * np.eye(2)))
        if dev > rtol * max(1.0, abs(mu)) or abs(mu) < 1e-12:
            raise PeriodMismatchError(
                f"monodromy is not scalar (deviation {dev:.3e}); period does not match"
            )
        n = n_min
        while True:
            s = np.linspace(t0, t1, n)
            yy, _ = jacobi.dense(s)
            try:
                ang = winding_angle(yy[0], yy[1])
                break
            except ResolutionError:
                if n > 10 ** 6:
                    raise
                n *= 4
    else:
        m = jacobi.t <= t1 + 1e-12
        ang = winding_angle(jacobi.y1[m], jacobi.y2[m])
    turns = (ang[-1] - ang[0]) / np.pi
    k = int(round(turns))
    if abs(turns - k) > 1e-3:
        raise PeriodMismatchError(f"winding {turns:.6f} is not an integer multiple of pi")
    return abs(k)
