"""Geodesics, geodesic circles, Frenet curvatures and the projective parameter.

All integrators are fixed-step classical RK4 so a run is a pure function of
its inputs. The Cartan covariant derivative along a curve uses the curve's
own unit tangent X as reference vector; with that lift

    D V^i/ds = dV^i/ds + V^j (Gamma^i_jk X^k + C^i_jk v^k),  v = dX/ds + N X,

and since N^k_m X^m = 2 G^k and C(X, ., .) = 0, v = DX/ds, which turns the
circle equations into an explicit first-order system.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .core import FinslerJets, point_connection
from .errors import BadFrame, ConfigError, CriticalVelocity, DegenerateCurve, PoleOnGrid, StepFailure
from .fields import ScalarField
from .jets import TangentSample
from .metrics import ConformalScale, MetricSpec
from .schwarzian import mobius_residual

DEFAULT_STEP = 1e-3
DRIFT_FAIL = 1e-4
FRAME_TOL = 1e-10


@dataclass
class CurveTrajectory:
    """Arclength samples of a curve; ``Y`` is None for geodesics."""

    s: np.ndarray
    x: np.ndarray
    X: np.ndarray
    metric: MetricSpec
    kappa: float = 0.0
    Y: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.x.shape[-1]

    def speed_drift(self) -> float:
        return float(np.max(np.abs(self.metric.norm(self.x, self.X) - 1.0)))

    def frame_drift(self) -> dict[str, float]:
        """Largest deviation of g(X,X), g(X,Y), g(Y,Y) from 1, 0, 1."""
        g = FinslerJets(self.metric, TangentSample(self.x, self.X), 0, 2).g.value
        ip = lambda a, b: np.einsum("...ij,...i,...j->...", g, a, b)  # noqa: E731
        out = {"unit_tangent": float(np.max(np.abs(ip(self.X, self.X) - 1.0)))}
        if self.Y is not None:
            out["orthogonality"] = float(np.max(np.abs(ip(self.X, self.Y))))
            out["unit_normal"] = float(np.max(np.abs(ip(self.Y, self.Y) - 1.0)))
        return out

    def write_csv(self, path) -> None:
        n = self.dim
        header = ["s"] + [f"x{i + 1}" for i in range(n)] + [f"X{i + 1}" for i in range(n)]
        cols = [self.s[:, None], self.x, self.X]
        if self.Y is not None:
            header += [f"Y{i + 1}" for i in range(n)]
            cols.append(self.Y)
        data = np.hstack(cols)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in data:
                w.writerow([f"{v:.17g}" for v in row])


def _rk4(rhs: Callable, state: np.ndarray, h: float, nsteps: int, check: Callable | None = None) -> np.ndarray:
    out = np.empty((nsteps + 1,) + state.shape)
    out[0] = state
    for k in range(nsteps):
        k1 = rhs(state)
        k2 = rhs(state + 0.5 * h * k1)
        k3 = rhs(state + 0.5 * h * k2)
        k4 = rhs(state + h * k3)
        state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if check is not None:
            check(state, (k + 1) * h)
        out[k + 1] = state
    return out


def _steps(length: float, step: float) -> tuple[int, float]:
    if length <= 0 or step <= 0:
        raise ConfigError("length and step must be positive")
    nsteps = max(1, int(round(length / step)))
    return nsteps, length / nsteps


def _speed_guard(m: MetricSpec, n: int):
    def check(state, s):
        F = float(m.norm(state[:n], state[n:2 * n]))
        if not np.isfinite(F) or abs(F - 1.0) > DRIFT_FAIL:
            raise StepFailure(f"unit speed lost at s={s:.6g} (F={F:.9g})")
    return check


def integrate_geodesic(m: MetricSpec, x0, y0, length: float, step: float = DEFAULT_STEP) -> CurveTrajectory:
    """Unit-speed forward geodesic x'' + 2G(x, x') = 0."""
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    m.validate(x0)
    n = m.dim
    X0 = y0 / float(m.norm(x0, y0))
    nsteps, h = _steps(length, step)

    def rhs(state):
        G = point_connection(m, TangentSample(state[:n], state[n:]), full=False).G
        return np.concatenate([state[n:], -2.0 * G])

    traj = _rk4(rhs, np.concatenate([x0, X0]), h, nsteps, _speed_guard(m, n))
    return CurveTrajectory(s=h * np.arange(nsteps + 1), x=traj[:, :n], X=traj[:, n:], metric=m)


def orthonormal_frame(m: MetricSpec, x0, X0, Y_hint) -> tuple[np.ndarray, np.ndarray]:
    """Normalize X0 to F = 1 and Gram-Schmidt Y_hint against it in g(x0, X0)."""
    x0 = np.asarray(x0, dtype=float)
    X = np.asarray(X0, dtype=float)
    X = X / float(m.norm(x0, X))
    g = FinslerJets(m, TangentSample(x0, X), 0, 2).g.value
    Y = np.asarray(Y_hint, dtype=float)
    Y = Y - (X @ g @ Y) * X
    nrm = np.sqrt(Y @ g @ Y)
    if nrm < 1e-12:
        raise BadFrame("normal hint is parallel to the tangent")
    return X, Y / nrm


def integrate_geodesic_circle(m: MetricSpec, x0, X0, Y0, kappa: float, length: float,
                              step: float = DEFAULT_STEP) -> CurveTrajectory:
    """Curve with D X/ds = kappa Y, D Y/ds = -kappa X (Cartan connection)."""
    if kappa <= 0:
        raise ConfigError("circle curvature must be positive")
    x0, X0, Y0 = (np.asarray(v, dtype=float) for v in (x0, X0, Y0))
    m.validate(x0)
    n = m.dim
    g = FinslerJets(m, TangentSample(x0, X0), 0, 2).g.value
    defect = max(abs(X0 @ g @ X0 - 1.0), abs(X0 @ g @ Y0), abs(Y0 @ g @ Y0 - 1.0))
    if defect > FRAME_TOL:
        raise BadFrame(f"initial frame not orthonormal (defect {defect:.3g})")
    nsteps, h = _steps(length, step)

    def rhs(state):
        X, Y = state[n:2 * n], state[2 * n:]
        pc = point_connection(m, TangentSample(state[:n], X))
        Gam, Cm = pc.Gamma, pc.C_mixed
        dX = kappa * Y - np.einsum("ijk,j,k->i", Gam, X, X)
        dY = -kappa * X - np.einsum("ijk,j,k->i", Gam, Y, X) - kappa * np.einsum("ijk,j,k->i", Cm, Y, Y)
        return np.concatenate([X, dX, dY])

    traj = _rk4(rhs, np.concatenate([x0, X0, Y0]), h, nsteps, _speed_guard(m, n))
    return CurveTrajectory(s=h * np.arange(nsteps + 1), x=traj[:, :n], X=traj[:, n:2 * n],
                           Y=traj[:, 2 * n:], metric=m, kappa=float(kappa))


# finite differences ----------------------------------------------------------

def fd_weights(offsets: Sequence[int], deriv: int) -> np.ndarray:
    """Weights w with sum_k w_k f(t + o_k h) ~ h^deriv f^(deriv)(t)."""
    o = np.asarray(offsets, dtype=float)
    k = len(o)
    V = np.vander(o, k, increasing=True).T
    rhs = np.zeros(k)
    rhs[deriv] = float(np.prod(np.arange(1, deriv + 1)))
    return np.linalg.solve(V, rhs)


def fd_derivative(f: np.ndarray, h: float, deriv: int = 1) -> np.ndarray:
    """4th-order accurate derivative along axis 0 of uniformly sampled data.

    Central stencils in the interior, one-sided (shifted) stencils of the
    same accuracy near the ends.
    """
    f = np.asarray(f, dtype=float)
    N = f.shape[0]
    half = (deriv + 1) // 2 + 1  # central width 2*half+1 gives 4th order for deriv <= 4
    width = max(2 * half + 1, deriv + 4)
    if N < width:
        raise DegenerateCurve(f"need at least {width} samples for derivative order {deriv}")
    out = np.empty_like(f)
    central = fd_weights(range(-half, half + 1), deriv)
    out[half:N - half] = sum(w * f[j:N - 2 * half + j] for j, w in enumerate(central))
    edge = deriv + 4
    for i in list(range(half)) + list(range(N - half, N)):
        start = min(max(i - edge // 2, 0), N - edge)
        offs = np.arange(start, start + edge) - i
        w = fd_weights(offs, deriv)
        out[i] = np.tensordot(w, f[start:start + edge], axes=(0, 0))
    return out / h ** deriv


# Frenet curvatures -------------------------------------------------------------

@dataclass
class FrenetReport:
    kappa1: np.ndarray
    kappa2: np.ndarray
    kappa1_std: float
    kappa2_max: float
    margin: int

    @property
    def kappa1_mean(self) -> float:
        return float(np.mean(self.kappa1[self.margin:len(self.kappa1) - self.margin]))


def frenet_curvatures(m: MetricSpec, points, t=None, *, margin: int | None = None,
                      straight_tol: float = 1e-8) -> FrenetReport:
    """First and second Frenet curvatures of a sampled path under ``m``.

    ``points`` are samples on a uniform parameter grid ``t`` (any regular
    parameter; unit spacing if omitted). Arclength enters through
    ds = F(x, dx/dt) dt, so no resampling is needed. ``margin`` samples at
    each end are excluded from the summary statistics; kappa2 is reported
    as 0 where kappa1 is below ``straight_tol`` (the normal is undefined).
    """
    x = np.asarray(points, dtype=float)
    N = x.shape[0]
    if t is None:
        h = 1.0
    else:
        t = np.asarray(t, dtype=float)
        dt = np.diff(t)
        h = float(dt[0])
        if h <= 0 or np.max(np.abs(dt - h)) > 1e-9 * max(1.0, abs(t[-1])):
            raise ConfigError("parameter grid must be uniform and increasing")
    margin = 3 if margin is None else margin
    xt = fd_derivative(x, h, 1)
    speed = m.norm(x, xt)
    if np.any(speed < 1e-10):
        raise DegenerateCurve("path speed below 1e-10")
    X = xt / speed[:, None]
    pc = point_connection(m, TangentSample(x, X))
    g, G, Gam, Cm = pc.g, pc.G, pc.Gamma, pc.C_mixed
    norm_g = lambda v: np.sqrt(np.maximum(np.einsum("...ij,...i,...j->...", g, v, v), 0.0))  # noqa: E731

    DX = fd_derivative(X, h, 1) / speed[:, None] + 2.0 * G
    k1 = norm_g(DX)
    bent = k1 > straight_tol
    Y = np.where(bent[:, None], DX / np.where(bent, k1, 1.0)[:, None], 0.0)
    DY = (fd_derivative(Y, h, 1) / speed[:, None]
          + np.einsum("...ijk,...j,...k->...i", Gam, Y, X)
          + np.einsum("...ijk,...j,...k->...i", Cm, Y, DX))
    k2 = np.where(bent, norm_g(DY + k1[:, None] * X), 0.0)
    inner = slice(margin, N - margin)
    return FrenetReport(kappa1=k1, kappa2=k2, kappa1_std=float(np.std(k1[inner])),
                        kappa2_max=float(np.max(k2[inner])), margin=margin)


@dataclass
class CirclePreservationReport:
    kappa1_mean: float
    kappa1_std: float
    kappa1_rel_std: float
    kappa2_max: float
    mobius_residual: float
    is_mobius: bool
    base: FrenetReport
    image: FrenetReport
    trajectory: CurveTrajectory

    def consistent(self, tol: float = 1e-4) -> bool:
        """Mobius verdict must imply the image is a circle."""
        is_circle = self.kappa1_rel_std <= tol and self.kappa2_max <= tol
        return is_circle or not self.is_mobius


def circle_preservation_experiment(m: MetricSpec, phi: ScalarField, x0, X0, Y0, kappa: float,
                                   length: float, step: float = DEFAULT_STEP,
                                   mobius_tol: float = 1e-8) -> CirclePreservationReport:
    """Trace a circle of ``m`` and measure the same point path under e^phi F."""
    X0, Y0 = orthonormal_frame(m, x0, X0, Y0)
    traj = integrate_geodesic_circle(m, x0, X0, Y0, kappa, length, step)
    scaled = ConformalScale(m, phi)
    base = frenet_curvatures(m, traj.x, traj.s)
    image = frenet_curvatures(scaled, traj.x, traj.s)
    inner = slice(image.margin, len(traj.s) - image.margin)
    mean = float(np.mean(image.kappa1[inner]))
    mob = mobius_residual(m, phi, TangentSample(traj.x, traj.X), tol=mobius_tol)
    return CirclePreservationReport(
        kappa1_mean=mean, kappa1_std=image.kappa1_std,
        kappa1_rel_std=image.kappa1_std / mean if mean > 0 else float("inf"),
        kappa2_max=image.kappa2_max, mobius_residual=mob.max_residual, is_mobius=mob.is_mobius,
        base=base, image=image, trajectory=traj)


# projective parameter ------------------------------------------------------------

@dataclass
class ProjectiveSolution:
    s: np.ndarray
    p: np.ndarray
    dp: np.ndarray
    d2p: np.ndarray


def _as_q(q) -> Callable[[float], float]:
    if callable(q):
        return q
    if isinstance(q, (int, float)):
        return lambda s, c=float(q): c
    s_grid, values = q
    spline = CubicSpline(np.asarray(s_grid, dtype=float), np.asarray(values, dtype=float))
    return lambda s: float(spline(s))


def projective_parameter_solve(q, p0: float, dp0: float, d2p0: float, length: float,
                               step: float = DEFAULT_STEP) -> ProjectiveSolution:
    """Solve p''' = q p' + 3/2 p''^2 / p', i.e. S(p) = q.

    ``q`` is a callable of s, a constant, or a pair ``(s_grid, values)``
    interpolated by a cubic spline.
    """
    if abs(dp0) < 1e-10:
        raise CriticalVelocity("initial p' vanishes")
    qf = _as_q(q)
    nsteps, h = _steps(length, step)

    def rhs_at(s, state):
        p, dp, d2p = state
        if abs(dp) < 1e-10:
            raise CriticalVelocity(f"p' vanished near s={s:.6g}")
        return np.array([dp, d2p, qf(s) * dp + 1.5 * d2p * d2p / dp])

    state = np.array([p0, dp0, d2p0], dtype=float)
    out = np.empty((nsteps + 1, 3))
    out[0] = state
    for k in range(nsteps):
        s = k * h
        k1 = rhs_at(s, state)
        k2 = rhs_at(s + 0.5 * h, state + 0.5 * h * k1)
        k3 = rhs_at(s + 0.5 * h, state + 0.5 * h * k2)
        k4 = rhs_at(s + h, state + h * k3)
        state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if abs(state[1]) < 1e-10 or not np.all(np.isfinite(state)):
            raise CriticalVelocity(f"p' vanished near s={(k + 1) * h:.6g}")
        out[k + 1] = state
    return ProjectiveSolution(s=h * np.arange(nsteps + 1), p=out[:, 0], dp=out[:, 1], d2p=out[:, 2])


def numeric_schwarzian(p: np.ndarray, h: float) -> np.ndarray:
    """S(p) from uniform samples by 4th-order finite differences."""
    d1 = fd_derivative(p, h, 1)
    if np.any(np.abs(d1) < 1e-10):
        raise CriticalVelocity("sampled derivative vanishes")
    d2 = fd_derivative(p, h, 2)
    d3 = fd_derivative(p, h, 3)
    r = d2 / d1
    return d3 / d1 - 1.5 * r * r


def projective_invariance_check(p, h: float, T: Sequence[float], *, margin: int = 3) -> float:
    """max |S(T o p) - S(p)| over the grid interior, T(u) = (a u + b)/(c u + d)."""
    a, b, c, d = (float(v) for v in T)
    if abs(a * d - b * c) < 1e-14:
        raise ConfigError("fractional-linear map is degenerate (ad - bc = 0)")
    p = np.asarray(p, dtype=float)
    den = c * p + d
    # a pole between two samples shows up as a sign change of the denominator
    if np.any(np.abs(den) < 1e-8) or np.any(np.sign(den[1:]) != np.sign(den[:-1])):
        raise PoleOnGrid("fractional-linear map has a pole on the grid")
    Tp = (a * p + b) / den
    diff = numeric_schwarzian(Tp, h) - numeric_schwarzian(p, h)
    return float(np.max(np.abs(diff[margin:len(p) - margin])))


def geodesic_ricci_profile(m: MetricSpec, geodesic: CurveTrajectory, chunk: int = 256) -> np.ndarray:
    """q(s) = 2/(n-1) Ric_jk X^j X^k along a unit-speed geodesic."""
    n = m.dim
    out = np.empty(len(geodesic.s))
    for start in range(0, len(out), chunk):
        sl = slice(start, start + chunk)
        X = geodesic.X[sl]
        ric = FinslerJets(m, TangentSample(geodesic.x[sl], X), 2, 6).ricci_tensor.value
        out[sl] = (2.0 / (n - 1)) * np.einsum("...jk,...j,...k->...", ric, X, X)
    return out
