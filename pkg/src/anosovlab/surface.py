"""Implicit surfaces over the torus (or plane) and their flattened images.

A surface is the zero set of G(x, y, z) in unscaled coordinates; flattening
by epsilon sends (x, y, z) to (x, y, eps*z).  All curvature data is computed
from local defining functions ("charts"): for embedded surfaces the global G
serves everywhere, while immersed surfaces (the linkage configuration space)
supply branch-resolved charts through ``chart_policy`` because the global
polynomial degenerates on the self-intersection curve.

Scaled quantities are derived on the fly: if f is a chart then the flattened
surface is the zero set of f(X, Y, Z/eps) and its gradient and hessian pick
up 1/eps factors on the z slots.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateNormal,
    EmptySample,
    NoSuchBranch,
    NormalConsistencyError,
    OutsideDomain,
    ZeroCurvature,
)
from .torus import TAU

SURFACE_TOL = 1e-10
PROJECTION_TOL = 1e-12
PROJECTION_MAX_ITER = 50


@dataclass(frozen=True)
class Chart:
    """Local defining function with analytic derivatives (unscaled coords).

    ``eval10(x, y, z)`` returns
    (val, gx, gy, gz, hxx, hxy, hxz, hyy, hyz, hzz) as plain floats; this is
    the single hot call of the geodesic integrator.  ``meta`` carries
    branch-bookkeeping for surfaces with several charts.
    """

    name: str
    eval10: Callable[[float, float, float], tuple]
    meta: tuple = ()
    dt_scale: Optional[Callable[[float, float, float], float]] = None


def chart_eval_scaled(chart: Chart, eps: float, X: float, Y: float, Z: float) -> tuple:
    """Chart data for the flattened surface at a scaled-coordinates point."""
    v, gx, gy, gz, hxx, hxy, hxz, hyy, hyz, hzz = chart.eval10(X, Y, Z / eps)
    ie = 1.0 / eps
    return (v, gx, gy, gz * ie, hxx, hxy, hxz * ie, hyy, hyz * ie, hzz * ie * ie)


@dataclass(frozen=True)
class FlattenedSurface:
    name: str
    chart: Chart
    epsilon: float
    ambient: str = "torus"  # "torus" (periodic base) or "euclidean"
    branch_ids: tuple = ()
    lift: Optional[Callable] = None          # (x, y, branch) -> unscaled z
    chart_policy: Optional[Callable] = None  # (x, y, z_unscaled, current) -> Chart
    table: Optional[object] = None           # BilliardTable of the projected domain
    base_box: tuple = ((0.0, TAU), (0.0, TAU))
    mesh_z: tuple = (-1.5, 1.5)

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError("flattening parameter must lie in (0, 1]")

    def with_epsilon(self, eps: float) -> "FlattenedSurface":
        return dataclasses.replace(self, epsilon=eps)

    def chart_at(self, x: float, y: float, z_unscaled: float, current: Optional[Chart] = None) -> Chart:
        if self.chart_policy is None:
            return self.chart
        return self.chart_policy(x, y, z_unscaled, current)

    def value(self, x: float, y: float, z_unscaled: float) -> float:
        return self.chart.eval10(x, y, z_unscaled)[0]

    def grad(self, x: float, y: float, z_unscaled: float) -> np.ndarray:
        d = self.chart.eval10(x, y, z_unscaled)
        return np.array(d[1:4])

    def lift_point(self, x: float, y: float, branch) -> np.ndarray:
        if self.lift is None:
            raise NoSuchBranch(f"surface {self.name} has no lift map")
        z = self.lift(x, y, branch)
        return np.array([x, y, z])


@dataclass(frozen=True)
class SurfacePoint:
    """A point on the unscaled surface together with its flattened image."""

    position: np.ndarray         # (x, y, z) with G = 0
    scaled_position: np.ndarray  # (x, y, eps*z)

    @property
    def x(self):
        return self.position[0]

    @property
    def y(self):
        return self.position[1]

    @property
    def z(self):
        return self.position[2]


def surface_point(surf: FlattenedSurface, xyz_unscaled: Sequence[float]) -> SurfacePoint:
    pos = np.asarray(xyz_unscaled, dtype=float)
    val = surf.value(*pos)
    g = surf.grad(*pos)
    if abs(val) > SURFACE_TOL * max(1.0, float(np.linalg.norm(g))):
        raise ValueError(f"point is off the surface: G = {val:.3e}")
    scaled = pos.copy()
    scaled[2] *= surf.epsilon
    return SurfacePoint(position=pos, scaled_position=scaled)


def project_to_surface(
    surf: FlattenedSurface,
    xyz_scaled: Sequence[float],
    chart: Optional[Chart] = None,
) -> np.ndarray:
    """Newton projection along the scaled normal onto the zero set."""
    chart = chart or surf.chart_at(xyz_scaled[0], xyz_scaled[1], xyz_scaled[2] / surf.epsilon)
    x, y, z = (float(c) for c in xyz_scaled)
    for _ in range(PROJECTION_MAX_ITER):
        v, gx, gy, gz = chart_eval_scaled(chart, surf.epsilon, x, y, z)[:4]
        n2 = gx * gx + gy * gy + gz * gz
        if n2 < 1e-16:
            raise DegenerateNormal("projection hit a degenerate gradient")
        if abs(v) <= PROJECTION_TOL:
            return np.array([x, y, z])
        step = v / n2
        x -= step * gx
        y -= step * gy
        z -= step * gz
    raise DegenerateNormal(f"projection did not converge, residual {v:.3e}")


# ----------------------------------------------------------------------------
# Normals, the vertical indicator, zones
# ----------------------------------------------------------------------------


def unscaled_unit_normal(surf: FlattenedSurface, q: SurfacePoint, chart: Optional[Chart] = None) -> np.ndarray:
    chart = chart or surf.chart
    d = chart.eval10(*q.position)
    g = np.array(d[1:4])
    n = float(np.linalg.norm(g))
    if n < 1e-8:
        raise DegenerateNormal("gradient too small for a normal")
    return g / n


def normal_epsilon(surf: FlattenedSurface, q: SurfacePoint, chart: Optional[Chart] = None) -> np.ndarray:
    """Unit normal of the flattened surface at the scaled image of q.

    Computed two ways that must agree: the normalized gradient of the scaled
    defining function, and the component rescaling of the unscaled normal
    (x and y kept, z divided by eps, then renormalized).
    """
    chart = chart or surf.chart
    eps = surf.epsilon

    d = chart_eval_scaled(chart, eps, *q.scaled_position)
    g = np.array(d[1:4])
    n = float(np.linalg.norm(g))
    if n < 1e-8:
        raise DegenerateNormal("scaled gradient too small for a normal")
    route_direct = g / n

    n1 = unscaled_unit_normal(surf, q, chart)
    rescaled = np.array([n1[0], n1[1], n1[2] / eps])
    route_formula = rescaled / np.linalg.norm(rescaled)

    if float(np.linalg.norm(route_direct - route_formula)) > 1e-9:
        raise NormalConsistencyError(
            f"normal routes disagree by {np.linalg.norm(route_direct - route_formula):.3e}"
        )
    return route_direct


def vertical_component(surf: FlattenedSurface, q: SurfacePoint, chart: Optional[Chart] = None) -> float:
    """z-component of the unscaled unit normal (independent of epsilon).

    Vanishes exactly over the billiard boundary; |.| <= delta defines the
    near-wall band.
    """
    return float(unscaled_unit_normal(surf, q, chart)[2])


def scaled_vertical_from_h(h: float, eps: float) -> float:
    """z-component of the flattened normal as a function of the unscaled one."""
    w = h / eps
    return w / math.sqrt((1.0 - h * h) + w * w)


@dataclass(frozen=True)
class ZoneFlags:
    in_band: bool    # |h| <= delta: near-wall band
    in_steep: bool   # |N_z^eps| < 1 - nu: steep zone where curvature blows up


def zone_membership(
    surf: FlattenedSurface, q: SurfacePoint, delta: float, nu: float,
    chart: Optional[Chart] = None,
) -> ZoneFlags:
    if not (0.0 < delta < 1.0 and 0.0 < nu < 1.0):
        raise ValueError("delta and nu must lie in (0, 1)")
    h = vertical_component(surf, q, chart)
    nz = scaled_vertical_from_h(h, surf.epsilon)
    return ZoneFlags(in_band=abs(h) <= delta, in_steep=abs(nz) < 1.0 - nu)


# ----------------------------------------------------------------------------
# Shape operator and curvatures
# ----------------------------------------------------------------------------


def tangent_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = int(np.argmin(np.abs(normal)))
    e = np.zeros(3)
    e[k] = 1.0
    t1 = e - normal[k] * normal
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(normal, t1)
    return t1, t2


@dataclass(frozen=True)
class ShapeData:
    normal: np.ndarray
    vertical: float       # unscaled-normal z-component at the same point
    k_plus: float         # larger principal curvature
    k_minus: float        # smaller principal curvature
    gauss: float

    @property
    def principal(self) -> tuple[float, float]:
        return self.k_plus, self.k_minus


def shape_operator(
    surf: FlattenedSurface, q: SurfacePoint, chart: Optional[Chart] = None,
) -> tuple[ShapeData, np.ndarray]:
    """Shape data and the 3x3 normal-derivative operator on the tangent plane.

    The operator is P H P / |grad| with P the tangent projector, evaluated on
    the flattened surface; its nonzero eigenvalues are the principal
    curvatures for the gradient orientation of the chart.
    """
    chart = chart or surf.chart_at(q.x, q.y, q.z)
    eps = surf.epsilon
    d = chart_eval_scaled(chart, eps, *q.scaled_position)
    g = np.array(d[1:4])
    gn = float(np.linalg.norm(g))
    if gn < 1e-8:
        raise DegenerateNormal("gradient too small for shape operator")
    normal = g / gn
    H = np.array(
        [[d[4], d[5], d[6]],
         [d[5], d[7], d[8]],
         [d[6], d[8], d[9]]]
    )
    P = np.eye(3) - np.outer(normal, normal)
    M = P @ H @ P / gn
    t1, t2 = tangent_basis(normal)
    s11 = float(t1 @ H @ t1) / gn
    s12 = float(t1 @ H @ t2) / gn
    s22 = float(t2 @ H @ t2) / gn
    mean = 0.5 * (s11 + s22)
    disc = math.hypot(0.5 * (s11 - s22), s12)
    k_plus, k_minus = mean + disc, mean - disc
    data = ShapeData(
        normal=normal,
        vertical=vertical_component(surf, q, chart),
        k_plus=k_plus,
        k_minus=k_minus,
        gauss=mean * mean - disc * disc,
    )
    return data, M


def normal_curvature(
    surf: FlattenedSurface, q: SurfacePoint, p: np.ndarray, chart: Optional[Chart] = None,
) -> float:
    """<DN p, p> for a unit tangent p, in the chart's gradient orientation."""
    chart = chart or surf.chart_at(q.x, q.y, q.z)
    d = chart_eval_scaled(chart, surf.epsilon, *q.scaled_position)
    g = np.array(d[1:4])
    gn = float(np.linalg.norm(g))
    if gn < 1e-8:
        raise DegenerateNormal("gradient too small for normal curvature")
    H = np.array(
        [[d[4], d[5], d[6]],
         [d[5], d[7], d[8]],
         [d[6], d[8], d[9]]]
    )
    return float(p @ H @ p) / gn


def exterior_orientation(surf: FlattenedSurface, q: SurfacePoint, normal: np.ndarray) -> float:
    """+1 if the normal's horizontal part points out of the projected table.

    Falls back to +1 when the surface carries no table (embedded test
    surfaces are built with gradients already pointing outward).
    """
    if surf.table is None or not getattr(surf.table, "walls", None):
        return 1.0
    th, ph = float(q.x), float(q.y)
    best, n2d = None, None
    for i, w in enumerate(surf.table.walls):
        v = float(w.signed_value(th, ph))
        if best is None or v > best:
            best = v
            n2d = surf.table.outward_normal(i, th, ph)
    dot = float(normal[0] * n2d[0] + normal[1] * n2d[1])
    return 1.0 if dot >= 0.0 else -1.0


def oriented_shape(
    surf: FlattenedSurface, q: SurfacePoint, chart: Optional[Chart] = None,
) -> ShapeData:
    """Shape data with the normal oriented toward the exterior of the table."""
    data, _ = shape_operator(surf, q, chart)
    sign = exterior_orientation(surf, q, data.normal)
    if sign > 0:
        return data
    return ShapeData(
        normal=-data.normal,
        vertical=-data.vertical,
        k_plus=-data.k_minus,
        k_minus=-data.k_plus,
        gauss=data.gauss,
    )


# ----------------------------------------------------------------------------
# Darboux frame along a sampled curve
# ----------------------------------------------------------------------------


@dataclass
class DarbouxData:
    index: np.ndarray        # sample indices the rows refer to
    gamma_n: np.ndarray      # <dT/ds, N>
    gamma_g: np.ndarray      # <dT/ds, N x T>
    tau_g: np.ndarray        # <d(N x T)/ds, N>
    curvature: np.ndarray    # |dT/ds|
    residual: np.ndarray     # frame equation defect
    zero_curvature: np.ndarray


def darboux_along(surf: FlattenedSurface, samples: np.ndarray) -> DarbouxData:
    """Frame coefficients along a unit-speed sampled curve on the flattened
    surface.

    Uses central differences, so needs at least five samples; where the
    curve is numerically straight the normal curvature falls back to the
    shape-operator quadratic form and the decomposition via the curve normal
    is skipped.
    """
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    if n < 5:
        raise ValueError("need at least 5 samples for frame differences")
    ds = float(np.mean(np.linalg.norm(np.diff(samples, axis=0), axis=1)))
    T = (samples[2:] - samples[:-2]) / (2.0 * ds)  # index i+1 of samples
    dT = (T[2:] - T[:-2]) / (2.0 * ds)             # index i+2 of samples
    idx = np.arange(2, n - 2)
    rows = len(idx)
    out = DarbouxData(
        index=idx,
        gamma_n=np.zeros(rows),
        gamma_g=np.zeros(rows),
        tau_g=np.zeros(rows),
        curvature=np.zeros(rows),
        residual=np.zeros(rows),
        zero_curvature=np.zeros(rows, dtype=bool),
    )
    eps = surf.epsilon
    G_frames = np.zeros((rows, 3))
    N_frames = np.zeros((rows, 3))
    for r, i in enumerate(idx):
        x, y, z = samples[i]
        chart = surf.chart_at(x, y, z / eps)
        d = chart_eval_scaled(chart, eps, x, y, z)
        g = np.array(d[1:4])
        N = g / np.linalg.norm(g)
        Ti = T[i - 1] / np.linalg.norm(T[i - 1])
        Gv = np.cross(N, Ti)
        Gv /= np.linalg.norm(Gv)
        N_frames[r] = N
        G_frames[r] = Gv
        dTi = dT[i - 2]
        k = float(np.linalg.norm(dTi))
        out.curvature[r] = k
        if k < 1e-10:
            out.zero_curvature[r] = True
            q = SurfacePoint(np.array([x, y, z / eps]), np.array([x, y, z]))
            out.gamma_n[r] = normal_curvature(surf, q, Ti, chart)
            continue
        gn = float(dTi @ N)
        gg = float(dTi @ Gv)
        out.gamma_n[r] = gn
        out.gamma_g[r] = gg
        out.residual[r] = float(np.linalg.norm(dTi - gn * N - gg * Gv))
    # geodesic torsion from the derivative of the side vector
    for r in range(1, rows - 1):
        if out.zero_curvature[r]:
            continue
        dG = (G_frames[r + 1] - G_frames[r - 1]) / (2.0 * ds)
        out.tau_g[r] = float(dG @ N_frames[r])
    return out


# ----------------------------------------------------------------------------
# Blow-up scan near a wall point
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class BlowupRow:
    epsilon: float
    inf_gamma_n: float
    sup_k_minus: float
    n_points: int


def curvature_blowup_scan(
    surf: FlattenedSurface,
    q0: SurfacePoint,
    alpha: float,
    nu: float,
    radius: float,
    eps_list: Sequence[float],
    n_base: int = 400,
    n_angles: int = 24,
    rng: Optional[np.random.Generator] = None,
) -> list[BlowupRow]:
    """Near-wall curvature probe across a decreasing flattening sequence.

    For each epsilon: the infimum of the exterior-oriented normal curvature
    over steep-zone points within ``radius`` of the flattened wall point,
    restricted to unit tangents with |p_x| <= alpha, and the supremum of the
    smaller principal curvature over the same points.
    """
    if not (0.0 < alpha < 1.0 and 0.0 < nu < 1.0):
        raise ValueError("alpha and nu must lie in (0, 1)")
    rng = rng if rng is not None else np.random.default_rng(0)
    rows = []
    x0, y0 = float(q0.x), float(q0.y)

    # Wall frame at the probe point: x-axis along the wall tangent, so the
    # |p_x| <= alpha restriction keeps directions transversal to the wall.
    data0 = oriented_shape(surf, q0, surf.chart_at(q0.x, q0.y, q0.z))
    n2 = np.array([data0.normal[0], data0.normal[1]])
    n2_norm = float(np.linalg.norm(n2))
    if n2_norm < 1e-8:
        raise ValueError("probe point normal is vertical; not a wall point")
    n2 /= n2_norm
    wall_tangent = np.array([-n2[1], n2[0], 0.0])
    n_in = -n2  # into the table, away from the wall

    def h_at_depth(d: float) -> float:
        x, y = x0 + d * n_in[0], y0 + d * n_in[1]
        for branch in (surf.branch_ids or (None,)):
            try:
                z = surf.lift(x, y, branch) if surf.lift else None
            except (OutsideDomain, NoSuchBranch):
                continue
            if z is None:
                continue
            pt = SurfacePoint(np.array([x, y, z]), np.array([x, y, z]))
            return abs(vertical_component(surf, pt, surf.chart_at(x, y, z)))
        return math.nan

    for eps in eps_list:
        s = surf.with_epsilon(float(eps))
        q0e = np.array([x0, y0, q0.z * s.epsilon])
        # Steep-zone base depth shrinks like eps^2 (the vertical indicator
        # grows as sqrt(depth)); concentrate the sampler accordingly.
        h_nu = s.epsilon * (1.0 - nu) / math.sqrt(nu * (2.0 - nu))
        d_probe = 1e-4
        h_probe = h_at_depth(d_probe)
        if not math.isfinite(h_probe) or h_probe <= 0:
            d_max = radius
        else:
            d_max = min(radius, 2.0 * d_probe * (h_nu / h_probe) ** 2)
        inf_gn = math.inf
        sup_km = -math.inf
        count = 0
        attempts = 0
        while count < n_base and attempts < 50 * n_base:
            attempts += 1
            along = rng.uniform(-radius, radius)
            depth = d_max * rng.uniform(0.0, 1.0) ** 2
            x = x0 + along * wall_tangent[0] + depth * n_in[0]
            y = y0 + along * wall_tangent[1] + depth * n_in[1]
            for branch in (s.branch_ids or (None,)):
                try:
                    z = s.lift(x, y, branch) if s.lift else None
                except (OutsideDomain, NoSuchBranch):
                    continue
                if z is None:
                    continue
                scaled = np.array([x, y, s.epsilon * z])
                if np.linalg.norm(scaled - q0e) > radius:
                    continue
                q = SurfacePoint(np.array([x, y, z]), scaled)
                chart = s.chart_at(x, y, z)
                h = vertical_component(s, q, chart)
                if abs(scaled_vertical_from_h(h, s.epsilon)) >= 1.0 - nu:
                    continue
                data = oriented_shape(s, q, chart)
                sup_km = max(sup_km, data.k_minus)
                sign = exterior_orientation(s, q, data.normal)
                t1, t2 = tangent_basis(data.normal)
                for ang in np.linspace(0.0, math.pi, n_angles, endpoint=False):
                    p = math.cos(ang) * t1 + math.sin(ang) * t2
                    if abs(float(p @ wall_tangent)) > alpha:
                        continue
                    gn = sign * normal_curvature(s, q, p, chart)
                    inf_gn = min(inf_gn, gn)
                count += 1
        if count == 0:
            raise EmptySample(f"no steep-zone points near the wall point at eps={eps}")
        rows.append(BlowupRow(float(eps), inf_gn, sup_km, count))
    return rows


# ----------------------------------------------------------------------------
# Test surfaces
# ----------------------------------------------------------------------------


def sphere_surface(radius: float = 1.0, epsilon: float = 1.0) -> FlattenedSurface:
    r2 = radius * radius

    def eval10(x, y, z):
        return (
            x * x + y * y + z * z - r2,
            2.0 * x, 2.0 * y, 2.0 * z,
            2.0, 0.0, 0.0, 2.0, 0.0, 2.0,
        )

    def lift(x, y, branch):
        s = r2 - x * x - y * y
        if s < -1e-12:
            raise OutsideDomain("base point outside the disk")
        return branch * math.sqrt(max(0.0, s))

    return FlattenedSurface(
        name="sphere",
        chart=Chart("sphere", eval10),
        epsilon=epsilon,
        ambient="euclidean",
        branch_ids=(1.0, -1.0),
        lift=lift,
        base_box=((-radius, radius), (-radius, radius)),
        mesh_z=(-1.2 * radius, 1.2 * radius),
    )


def tube_surface(epsilon: float = 1.0) -> FlattenedSurface:
    """Cylinder y^2 + z^2 = 1 along the x axis; flattens to the strip |y|<=1."""

    def eval10(x, y, z):
        return (
            y * y + z * z - 1.0,
            0.0, 2.0 * y, 2.0 * z,
            0.0, 0.0, 0.0, 2.0, 0.0, 2.0,
        )

    def lift(x, y, branch):
        s = 1.0 - y * y
        if s < -1e-12:
            raise OutsideDomain("base point outside the strip")
        return branch * math.sqrt(max(0.0, s))

    return FlattenedSurface(
        name="tube",
        chart=Chart("tube", eval10),
        epsilon=epsilon,
        ambient="euclidean",
        branch_ids=(1.0, -1.0),
        lift=lift,
        base_box=((0.0, TAU), (-1.0, 1.0)),
        mesh_z=(-1.2, 1.2),
    )


def plane_surface(epsilon: float = 1.0) -> FlattenedSurface:
    def eval10(x, y, z):
        return (z, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    return FlattenedSurface(
        name="plane",
        chart=Chart("plane", eval10),
        epsilon=epsilon,
        ambient="torus",
        branch_ids=(0,),
        lift=lambda x, y, branch: 0.0,
        mesh_z=(-0.5, 0.5),
    )


# ----------------------------------------------------------------------------
# Sampling and export
# ----------------------------------------------------------------------------


def flatten_tangent(p_unscaled: np.ndarray, eps: float) -> np.ndarray:
    """Pushforward of a tangent vector under the flattening map, renormalized."""
    q = np.array([p_unscaled[0], p_unscaled[1], eps * p_unscaled[2]])
    return q / np.linalg.norm(q)


def sample_surface_points(
    surf: FlattenedSurface,
    n: int,
    rng: np.random.Generator,
    reject: Optional[Callable[[SurfacePoint], bool]] = None,
    max_attempts_factor: int = 200,
    allow_partial: bool = False,
) -> list[tuple[SurfacePoint, object]]:
    """Uniform (base, branch) samples of the surface; rejection via ``reject``."""
    if surf.lift is None:
        raise NoSuchBranch("surface has no lift map to sample from")
    (x0, x1), (y0, y1) = surf.base_box
    branches = surf.branch_ids or (None,)
    out = []
    attempts = 0
    while len(out) < n and attempts < max_attempts_factor * n:
        attempts += 1
        x = rng.uniform(x0, x1)
        y = rng.uniform(y0, y1)
        branch = branches[int(rng.integers(0, len(branches)))]
        try:
            z = surf.lift(x, y, branch)
        except (OutsideDomain, NoSuchBranch):
            continue
        pt = SurfacePoint(np.array([x, y, z]), np.array([x, y, surf.epsilon * z]))
        if reject is not None and reject(pt):
            continue
        out.append((pt, branch))
    if len(out) < n and not allow_partial:
        raise EmptySample(f"sampled only {len(out)} of {n} requested points")
    return out


def export_obj(surf: FlattenedSurface, path, n_base: int = 96, n_z: int = 64) -> None:
    """Triangulate the flattened zero set by marching cubes and write OBJ."""
    from skimage.measure import marching_cubes

    (x0, x1), (y0, y1) = surf.base_box
    z0, z1 = surf.mesh_z
    xs = np.linspace(x0, x1, n_base)
    ys = np.linspace(y0, y1, n_base)
    zs = np.linspace(z0, z1, n_z)
    vol = np.empty((n_base, n_base, n_z))
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            for k, z in enumerate(zs):
                vol[i, j, k] = surf.chart.eval10(x, y, z)[0]
    verts, faces, _, _ = marching_cubes(vol, level=0.0)
    scale = np.array([xs[1] - xs[0], ys[1] - ys[0], zs[1] - zs[0]])
    origin = np.array([x0, y0, z0])
    verts = origin + verts * scale
    with open(path, "w") as fh:
        fh.write(f"# zero set of {surf.name}, z scaled by epsilon={surf.epsilon!r}\n")
        for v in verts:
            fh.write(f"v {v[0]!r} {v[1]!r} {surf.epsilon * v[2]!r}\n")
        for f in faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def export_scan_csv(rows: Sequence[BlowupRow], path, seed: Optional[int] = None) -> None:
    import csv as _csv

    from .rng import rng_header

    with open(path, "w", newline="") as fh:
        if seed is not None:
            fh.write(f"# {rng_header(seed)}\n")
        writer = _csv.writer(fh)
        writer.writerow(["epsilon", "inf_gamma_n", "sup_k_minus", "n_points"])
        for r in rows:
            writer.writerow([repr(r.epsilon), repr(r.inf_gamma_n), repr(r.sup_k_minus), r.n_points])
