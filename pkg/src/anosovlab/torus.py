"""Flat-torus arithmetic, universal-cover lifting, and implicit-curve utilities.

Angles live in [0, 2*pi).  Distances are computed over deck translates, so
points near opposite edges of the fundamental square are close.  Implicit
curves are given by callables (value, gradient, hessian) that broadcast over
numpy arrays; all wall curves used in this package are built this way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import TangencyUnresolved

TAU = 2.0 * math.pi

# Crossing search constants.  The sampling step resolves every sign change of
# the bounded-curvature walls used here; entry tolerance avoids re-detecting
# the wall a reflected trajectory just left.
CROSSING_STEP = 0.01
CROSSING_TOL = 1e-12
ENTRY_TOL = 1e-10
TANGENCY_TOL = 1e-9


def wrap_angle(x):
    """Reduce an angle (or array) to [0, 2*pi)."""
    return np.mod(x, TAU)


def angle_delta(x, y):
    """Signed wrapped difference x - y in (-pi, pi]."""
    return np.arctan2(np.sin(x - y), np.cos(x - y))


@dataclass(frozen=True)
class TorusPoint:
    theta: float
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))
        object.__setattr__(self, "phi", float(wrap_angle(self.phi)))

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.phi])

    def lift_near(self, base: np.ndarray) -> np.ndarray:
        """Representative of this point in the plane closest to ``base``."""
        base = np.asarray(base, dtype=float)
        return base + np.array(
            [angle_delta(self.theta, base[0]), angle_delta(self.phi, base[1])]
        )


def torus_distance(a: TorusPoint, b: TorusPoint) -> float:
    """Geodesic distance on the flat torus (min over deck translates)."""
    dt = angle_delta(a.theta, b.theta)
    dp = angle_delta(a.phi, b.phi)
    return math.hypot(float(dt), float(dp))


def direction_angle(p: np.ndarray, q: np.ndarray) -> float:
    """Unsigned angle between two planar unit vectors."""
    dot = float(np.dot(p, q))
    cross = float(p[0] * q[1] - p[1] * q[0])
    return abs(math.atan2(cross, dot))


@dataclass(frozen=True)
class LiftedSegment:
    """A straight segment in the universal cover R^2."""

    start: np.ndarray
    direction: np.ndarray
    length: float

    def __post_init__(self):
        start = np.asarray(self.start, dtype=float)
        direction = np.asarray(self.direction, dtype=float)
        norm = float(np.linalg.norm(direction))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"segment direction must be unit, got |d| = {norm}")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "length", float(self.length))
        if self.length < 0:
            raise ValueError("segment length must be nonnegative")

    def point_at(self, t):
        t = np.asarray(t, dtype=float)
        return self.start + np.multiply.outer(t, self.direction)

    def reversed(self) -> "LiftedSegment":
        end = self.start + self.length * self.direction
        return LiftedSegment(end, -self.direction, self.length)


@dataclass(frozen=True)
class ImplicitCurve:
    """Level-set description of a curve on the torus.

    ``value(theta, phi)`` broadcasts over arrays; ``grad`` returns the pair
    (d/dtheta, d/dphi) and ``hess`` the triple (tt, tp, pp).  All three must
    be 2*pi-periodic in both arguments.
    """

    value: Callable
    grad: Callable
    hess: Callable


def cosine_curve(coef_theta: float, coef_phi: float) -> ImplicitCurve:
    """Curve family a*cos(theta) + b*cos(phi); covers every wall used here."""
    a, b = float(coef_theta), float(coef_phi)
    return ImplicitCurve(
        value=lambda t, p: a * np.cos(t) + b * np.cos(p),
        grad=lambda t, p: (-a * np.sin(t), -b * np.sin(p)),
        hess=lambda t, p: (-a * np.cos(t), np.zeros_like(np.asarray(t, dtype=float)), -b * np.cos(p)),
    )


def circle_curve(center: TorusPoint) -> ImplicitCurve:
    """Squared wrapped distance to ``center``.

    The zero set of value - R^2 is an exact round circle of radius R as long
    as R < pi, so analytic circle oracles apply.  Smooth away from the cut
    locus, which is far from any radius used in tests.
    """
    a, b = center.theta, center.phi

    def value(t, p):
        return angle_delta(t, a) ** 2 + angle_delta(p, b) ** 2

    def grad(t, p):
        return 2.0 * angle_delta(t, a), 2.0 * angle_delta(p, b)

    def hess(t, p):
        shape = np.broadcast(np.asarray(t), np.asarray(p)).shape
        two = np.full(shape, 2.0)
        return two, np.zeros(shape), two.copy()

    return ImplicitCurve(value=value, grad=grad, hess=hess)


@dataclass(frozen=True)
class Crossing:
    t: float
    point: TorusPoint


def _refine_crossing(f, lo: float, hi: float) -> float:
    t = brentq(f, lo, hi, xtol=1e-14, rtol=8.9e-16, maxiter=200)
    return float(t)


def segment_curve_crossings(
    seg: LiftedSegment, wall: ImplicitCurve, level: float
) -> list[Crossing]:
    """All crossings of ``value == level`` along the segment, ordered by t.

    Raises TangencyUnresolved when the curve is touched within tolerance but
    never crossed, and no genuine crossing exists either.
    """
    if seg.length == 0.0:
        return []
    h = min(CROSSING_STEP, seg.length / 64.0)
    n = max(2, int(math.ceil(seg.length / h)) + 1)
    ts = np.linspace(0.0, seg.length, n)
    pts = seg.point_at(ts)
    f = np.asarray(wall.value(pts[:, 0], pts[:, 1]), dtype=float) - level

    def f_scalar(t):
        x, y = seg.point_at(float(t))
        return float(wall.value(x, y)) - level

    # A start on the level (within tolerance) is not a crossing: ignore
    # samples until the value has genuinely left the wall band, then track
    # sign changes from there.
    i_start = 0
    if abs(f[0]) <= ENTRY_TOL:
        clear = np.nonzero(np.abs(f) > ENTRY_TOL)[0]
        if clear.size == 0:
            return []
        i_start = int(clear[0])

    # Walk nonzero samples; samples landing exactly on the level are
    # crossings only if the sign actually flips across them.
    t_hits: list[float] = []
    touches: list[float] = []
    last_idx: Optional[int] = None
    for i in range(i_start, n):
        fi = float(f[i])
        if fi == 0.0:
            continue
        if last_idx is not None:
            fl = float(f[last_idx])
            if fl * fi < 0.0:
                if i == last_idx + 1:
                    t_star = _refine_crossing(f_scalar, float(ts[last_idx]), float(ts[i]))
                else:
                    t_star = float(ts[last_idx + 1])  # exact zero sample(s) between
                if t_star > CROSSING_TOL:
                    t_hits.append(t_star)
            elif i > last_idx + 1:
                touches.append(float(ts[last_idx + 1]))
        last_idx = i
    if last_idx is not None and last_idx < n - 1:
        # trailing zeros: probe just beyond the segment to classify
        beyond = f_scalar(seg.length + h)
        if float(f[last_idx]) * beyond < 0.0:
            if seg.length > CROSSING_TOL:
                t_hits.append(float(ts[last_idx + 1]))
        else:
            touches.append(float(ts[last_idx + 1]))

    if not t_hits:
        if touches:
            raise TangencyUnresolved(
                f"level touched exactly at t = {touches[0]:.6g} without sign change"
            )
        _check_tangency(f, ts, f_scalar, i_start)

    t_hits.sort()
    deduped: list[float] = []
    for t in t_hits:
        if not deduped or t - deduped[-1] > 10 * CROSSING_TOL:
            deduped.append(t)
    return [_make_crossing(seg, t) for t in deduped]


def _make_crossing(seg: LiftedSegment, t: float) -> Crossing:
    x, y = seg.point_at(t)
    return Crossing(t=t, point=TorusPoint(float(x), float(y)))


def _check_tangency(f: np.ndarray, ts: np.ndarray, f_scalar, i_start: int) -> None:
    """Raise if |f| has an interior near-zero local minimum without crossing."""
    af = np.abs(f)
    for i in range(max(1, i_start + 1), len(f) - 1):
        if af[i] <= af[i - 1] and af[i] <= af[i + 1] and af[i] < 1e-3:
            res = minimize_scalar(
                lambda t: abs(f_scalar(t)),
                bounds=(float(ts[i - 1]), float(ts[i + 1])),
                method="bounded",
                options={"xatol": 1e-13},
            )
            if abs(res.fun) <= TANGENCY_TOL:
                raise TangencyUnresolved(
                    f"level touched within {TANGENCY_TOL} at t = {res.x:.6g} without sign change"
                )


def segment_curve_crossing(
    seg: LiftedSegment, wall: ImplicitCurve, level: float
) -> Optional[Crossing]:
    """Smallest t in (0, length] where the segment meets the level set."""
    crossings = segment_curve_crossings(seg, wall, level)
    return crossings[0] if crossings else None
