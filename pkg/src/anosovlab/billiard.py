"""Billiard flow on a smooth table in the flat torus.

Free flight is exact (straight lines); reflection is specular.  Walls are
implicit level sets with an orientation sign, the table being the
intersection of the inside half-regions.  The horizon search samples
rational-slope line families exhaustively plus random directions, looking
for long collision-free chords.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EscapedDomain, NotOnWall, TangencyUnresolved
from .rng import make_rng, rng_header
from .torus import (
    TAU,
    Crossing,
    ImplicitCurve,
    LiftedSegment,
    TorusPoint,
    segment_curve_crossings,
    wrap_angle,
)

GRAZING_TOL = 1e-4
WALL_TOL = 1e-8


@dataclass(frozen=True)
class Wall:
    """One wall: the table locally satisfies inside_sign*(value - level) <= 0."""

    curve: ImplicitCurve
    level: float
    inside_sign: int

    def signed_value(self, theta, phi):
        return self.inside_sign * (np.asarray(self.curve.value(theta, phi)) - self.level)


@dataclass
class BilliardTable:
    walls: list[Wall]
    horizon_bound_hint: Optional[float] = None

    def max_violation(self, theta, phi):
        """Max over walls of the signed value; <= 0 means inside the table."""
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        if not self.walls:
            return np.full(np.broadcast(theta, phi).shape, -np.inf)
        vals = [w.signed_value(theta, phi) for w in self.walls]
        return np.maximum.reduce(vals)

    def contains(self, theta, phi, tol: float = 0.0):
        return self.max_violation(theta, phi) <= tol

    def inward_normal(self, wall_index: int, theta: float, phi: float) -> np.ndarray:
        w = self.walls[wall_index]
        g = np.array(w.curve.grad(theta, phi), dtype=float)
        n = np.linalg.norm(g)
        return -w.inside_sign * g / n

    def outward_normal(self, wall_index: int, theta: float, phi: float) -> np.ndarray:
        return -self.inward_normal(wall_index, theta, phi)

    def validate(self, n_grid: int = 128) -> None:
        """Sampled sanity checks: nonempty interior, nonvanishing wall gradients."""
        ax = np.linspace(0.0, TAU, n_grid, endpoint=False)
        th, ph = np.meshgrid(ax, ax, indexing="ij")
        if not bool(np.any(self.max_violation(th, ph) < -1e-6)):
            raise ValueError("billiard table has empty interior on the sampling grid")
        for i, w in enumerate(self.walls):
            vals = w.signed_value(th, ph)
            near = np.abs(vals) < 0.05
            if not near.any():
                continue
            gt, gp = w.curve.grad(th[near], ph[near])
            norms = np.hypot(np.asarray(gt, dtype=float), np.asarray(gp, dtype=float))
            if float(norms.min()) < 1e-6:
                raise ValueError(f"wall {i} gradient vanishes near its level set")


@dataclass(frozen=True)
class BilliardState:
    q: TorusPoint
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        n = float(np.linalg.norm(p))
        if abs(n - 1.0) > 1e-12:
            raise ValueError(f"billiard direction must be unit, |p| = {n}")
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class BounceRecord:
    time: float
    point: TorusPoint
    incidence_angle: float
    wall_index: int
    grazing: bool = False


def _first_crossing(table: BilliardTable, seg: LiftedSegment):
    """Earliest wall crossing along the segment, or None.

    Unresolved tangencies are not bounces: the flight continues straight
    through a touch that never produces a sign change.
    """
    best: tuple[float, int, Crossing] | None = None
    for i, w in enumerate(table.walls):
        try:
            hits = segment_curve_crossings(seg, w.curve, w.level)
        except TangencyUnresolved:
            hits = []
        if hits and (best is None or hits[0].t < best[0]):
            best = (hits[0].t, i, hits[0])
    return best


def _check_inside(table: BilliardTable, theta: float, phi: float) -> None:
    if not table.walls:
        return
    worst = -math.inf
    for w in table.walls:
        v = float(w.signed_value(theta, phi))
        gt, gp = w.curve.grad(theta, phi)
        scale = max(1.0, math.hypot(float(gt), float(gp)))
        worst = max(worst, v / scale)
    if worst > WALL_TOL:
        raise EscapedDomain(f"point ({theta:.6f}, {phi:.6f}) outside table by {worst:.3e}")


def billiard_path(
    table: BilliardTable,
    state: BilliardState,
    t: float,
    grazing_tol: float = GRAZING_TOL,
    max_bounces: int = 100_000,
):
    """Trace the flow for time t.

    Returns (breakpoints, records) where breakpoints is a list of
    (time, lifted position in R^2, direction) covering every flight segment
    endpoint; positions are continuous in the universal cover.
    """
    if t < 0:
        raise ValueError("flow time must be nonnegative")
    q = state.q.as_array().copy()
    p = state.p.copy()
    _check_inside(table, q[0], q[1])
    breakpoints = [(0.0, q.copy(), p.copy())]
    records: list[BounceRecord] = []
    elapsed = 0.0
    remaining = float(t)
    bounces = 0
    while remaining > 1e-15:
        seg = LiftedSegment(q, p, remaining)
        hit = _first_crossing(table, seg)
        if hit is None:
            q = q + remaining * p
            elapsed += remaining
            remaining = 0.0
            breakpoints.append((elapsed, q.copy(), p.copy()))
            break
        t_hit, wall_index, crossing = hit
        q = q + t_hit * p
        elapsed += t_hit
        remaining -= t_hit
        n_in = table.inward_normal(wall_index, q[0], q[1])
        pn = float(np.dot(p, n_in))
        p_new = p - 2.0 * pn * n_in
        p_new /= np.linalg.norm(p_new)
        tangential = math.sqrt(max(0.0, 1.0 - pn * pn))
        grazing = tangential > 1.0 - grazing_tol
        records.append(
            BounceRecord(
                time=elapsed,
                point=TorusPoint(float(q[0]), float(q[1])),
                incidence_angle=math.asin(min(1.0, abs(pn))),
                wall_index=wall_index,
                grazing=grazing,
            )
        )
        breakpoints.append((elapsed, q.copy(), p_new.copy()))
        p = p_new
        bounces += 1
        if bounces > max_bounces:
            raise RuntimeError("bounce count exceeded max_bounces")
    _check_inside(table, q[0], q[1])
    return breakpoints, records


def path_state_at(breakpoints, t: float) -> tuple[TorusPoint, np.ndarray]:
    """Interpolate a billiard polyline at time t (t within the traced range)."""
    times = [b[0] for b in breakpoints]
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise ValueError("query time outside traced range")
    k = max(0, min(len(breakpoints) - 2, int(np.searchsorted(times, t, side="right")) - 1))
    t0, q0, p0 = breakpoints[k]
    q = q0 + (t - t0) * p0
    return TorusPoint(float(q[0]), float(q[1])), p0.copy()


def billiard_flow(
    table: BilliardTable,
    state: BilliardState,
    t: float,
    grazing_tol: float = GRAZING_TOL,
) -> tuple[BilliardState, list[BounceRecord]]:
    """Flow the state for time t with specular reflection at the walls."""
    breakpoints, records = billiard_path(table, state, t, grazing_tol=grazing_tol)
    _, q_end, p_end = breakpoints[-1]
    return BilliardState(TorusPoint(float(q_end[0]), float(q_end[1])), p_end), records


def wall_curvature(table: BilliardTable, wall_index: int, point: TorusPoint) -> float:
    """Signed curvature of a wall, inward-normal convention.

    Divergence of the normalized gradient of the inside-oriented defining
    function; negative on every wall of a dispersing table.
    """
    w = table.walls[wall_index]
    th, ph = point.theta, point.phi
    v = float(w.curve.value(th, ph)) - w.level
    gt, gp = (float(x) for x in w.curve.grad(th, ph))
    norm = math.hypot(gt, gp)
    if abs(v) > 1e-8 * max(1.0, norm):
        raise NotOnWall(f"point is {v:.3e} away from wall {wall_index} level set")
    htt, htp, hpp = (float(x) for x in w.curve.hess(th, ph))
    div = (htt * gp * gp - 2.0 * htp * gt * gp + hpp * gt * gt) / norm**3
    return w.inside_sign * div


def sample_wall_points(
    table: BilliardTable,
    wall_index: int,
    n: int,
    rng: np.random.Generator,
    n_scan: int = 720,
) -> list[TorusPoint]:
    """Sample points on a wall's level set that belong to the table boundary."""
    from scipy.optimize import brentq

    w = table.walls[wall_index]
    pts: list[TorusPoint] = []
    thetas = rng.uniform(0.0, TAU, size=4 * n)
    phis_scan = np.linspace(0.0, TAU, n_scan, endpoint=False)
    for th in thetas:
        f = np.asarray(w.curve.value(th, phis_scan), dtype=float) - w.level
        sign_change = np.nonzero(f[:-1] * f[1:] < 0)[0]
        for i in sign_change:
            lo, hi = phis_scan[i], phis_scan[i] + (phis_scan[1] - phis_scan[0])
            ph = brentq(lambda x: float(w.curve.value(th, x)) - w.level, lo, hi, xtol=1e-14)
            others = [
                float(u.signed_value(th, ph)) for j, u in enumerate(table.walls) if j != wall_index
            ]
            if all(v <= 1e-9 for v in others):
                pts.append(TorusPoint(float(th), float(ph)))
            if len(pts) >= n:
                return pts
    if not pts:
        raise NotOnWall(f"no boundary points found on wall {wall_index}")
    return pts


# ----------------------------------------------------------------------------
# Finite-horizon search
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class HorizonGrid:
    """Sampling plan for the free-chord search."""

    q_max: int = 12
    n_random: int = 10_000
    n_offsets: int = 400
    step: float = 0.02
    fine_step: float = 0.004
    seed: int = 0
    offset_resolution: float = TAU / 400.0  # matches a 400x400 spatial offset grid


@dataclass
class HorizonReport:
    max_free_flight: float
    witness: Optional[LiftedSegment]
    slope_family_max: dict = field(default_factory=dict)
    n_lines: int = 0
    t_max: float = 0.0


def _primitive_directions(q_max: int) -> list[tuple[int, int]]:
    dirs = [(1, 0), (0, 1)]
    for a in range(1, q_max + 1):
        for b in range(-q_max, q_max + 1):
            if b == 0:
                continue
            if math.gcd(a, abs(b)) == 1:
                dirs.append((a, b))
    return dirs


def _longest_run(inside: np.ndarray, step: float, circular: bool) -> float:
    """Longest stretch of consecutive inside samples, in arclength."""
    if inside.all():
        return math.inf
    if not inside.any():
        return 0.0
    if circular:
        inside = np.concatenate([inside, inside])
    padded = np.concatenate([[False], inside, [False]])
    d = np.diff(padded.astype(np.int8))
    starts = np.nonzero(d == 1)[0]
    ends = np.nonzero(d == -1)[0]
    return float((ends - starts).max()) * step


def _scan_lines(table, origins, direction, length, step):
    """Inside masks for a family of parallel chords; origins is (m, 2)."""
    n_t = max(2, int(math.ceil(length / step)) + 1)
    ts = np.linspace(0.0, length, n_t)
    pts = origins[:, None, :] + ts[None, :, None] * direction[None, None, :]
    inside = table.max_violation(pts[..., 0], pts[..., 1]) <= 0.0
    return inside, ts


def finite_horizon_search(
    table: BilliardTable, t_max: float, grid: Optional[HorizonGrid] = None
) -> HorizonReport:
    """Search for collision-free chords up to length t_max.

    Rational-slope line families are scanned over a full period with dense
    perpendicular offsets (every line of the family lies within half an
    offset spacing of a sampled one); random directions guard against gaps.
    Suspiciously long runs are rescanned at a finer step before being
    believed.
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    grid = grid or HorizonGrid()
    rng = make_rng(grid.seed)
    special = {(1, 0): "h", (0, 1): "v", (1, 1): "diag+", (1, -1): "diag-"}
    report = HorizonReport(
        max_free_flight=0.0, witness=None, slope_family_max={}, n_lines=0, t_max=t_max
    )

    def consider(run: float, origin: np.ndarray, direction: np.ndarray) -> None:
        capped = min(run, t_max)
        if capped > report.max_free_flight:
            report.max_free_flight = capped
        if run >= t_max and report.witness is None:
            report.witness = LiftedSegment(origin.copy(), direction.copy(), t_max)

    for a, b in _primitive_directions(grid.q_max):
        norm = math.hypot(a, b)
        direction = np.array([a, b], dtype=float) / norm
        period = TAU * norm
        offset_period = TAU / norm
        name = special.get((a, b))
        step = grid.fine_step if name else grid.step
        n_off = grid.n_offsets if name else max(
            64, min(grid.n_offsets, int(math.ceil(offset_period / grid.offset_resolution)))
        )
        perp = np.array([-direction[1], direction[0]])
        offsets = np.linspace(0.0, offset_period, n_off, endpoint=False)
        origins = offsets[:, None] * perp[None, :]
        inside, ts = _scan_lines(table, origins, direction, period, step)
        family_max = 0.0
        for k in range(n_off):
            run = _longest_run(inside[k], float(ts[1] - ts[0]), circular=True)
            if math.isfinite(run) and run > 0.4 * t_max and step > grid.fine_step:
                fine_inside, fine_ts = _scan_lines(
                    table, origins[k : k + 1], direction, period, grid.fine_step
                )
                run = _longest_run(fine_inside[0], float(fine_ts[1] - fine_ts[0]), circular=True)
            family_max = max(family_max, min(run, t_max))
            consider(run, origins[k], direction)
        report.n_lines += n_off
        if name:
            report.slope_family_max[name] = family_max

    angles = rng.uniform(0.0, math.pi, size=grid.n_random)
    starts = rng.uniform(0.0, TAU, size=(grid.n_random, 2))
    batch = 200
    for i0 in range(0, grid.n_random, batch):
        for j in range(i0, min(i0 + batch, grid.n_random)):
            direction = np.array([math.cos(angles[j]), math.sin(angles[j])])
            inside, ts = _scan_lines(table, starts[j : j + 1], direction, t_max, grid.step)
            run = _longest_run(inside[0], float(ts[1] - ts[0]), circular=False)
            if math.isfinite(run) and run > 0.4 * t_max:
                fine_inside, fine_ts = _scan_lines(
                    table, starts[j : j + 1], direction, t_max, grid.fine_step
                )
                run = _longest_run(fine_inside[0], float(fine_ts[1] - fine_ts[0]), circular=False)
            consider(run, starts[j], direction)
            report.n_lines += 1
    return report


# ----------------------------------------------------------------------------
# Boundary component counting (periodic marching squares)
# ----------------------------------------------------------------------------


def _cell_crossing_edges(corner_signs: tuple[bool, bool, bool, bool]) -> list[tuple[int, int]]:
    """Pairs of crossed cell edges (0=bottom,1=right,2=top,3=left)."""
    s00, s10, s11, s01 = corner_signs  # (i,j), (i+1,j), (i+1,j+1), (i,j+1)
    idx = (s00 << 3) | (s10 << 2) | (s11 << 1) | s01
    tbl = {
        0: [], 15: [],
        1: [(2, 3)], 14: [(2, 3)],
        2: [(1, 2)], 13: [(1, 2)],
        4: [(0, 1)], 11: [(0, 1)],
        8: [(0, 3)], 7: [(0, 3)],
        3: [(1, 3)], 12: [(1, 3)],
        6: [(0, 2)], 9: [(0, 2)],
        5: [(0, 1), (2, 3)], 10: [(0, 3), (1, 2)],
    }
    return tbl[idx]


def boundary_component_count(table: BilliardTable, n_grid: int = 512) -> int:
    """Number of connected components of the table boundary in the torus.

    Traces each wall's level set by marching squares on a periodic grid and
    unions crossing edges per cell; segments lying outside the table (masked
    by another wall) are discarded.
    """
    ax = np.linspace(0.0, TAU, n_grid, endpoint=False)
    th, ph = np.meshgrid(ax, ax, indexing="ij")
    total = 0
    for wi, w in enumerate(table.walls):
        f = np.asarray(w.signed_value(th, ph), dtype=float)
        others = [u.signed_value(th, ph) for j, u in enumerate(table.walls) if j != wi]
        mask_ok = np.ones_like(f, dtype=bool)
        for o in others:
            mask_ok &= np.asarray(o) <= 0.05
        pos = f > 0
        parent: dict = {}

        def find(x):
            while parent.get(x, x) != x:
                parent[x] = parent.get(parent[x], parent[x])
                x = parent[x]
            return x

        def union(x, y):
            rx, ry = find(x), find(y)
            parent.setdefault(rx, rx)
            parent.setdefault(ry, ry)
            if rx != ry:
                parent[rx] = ry

        def edge_id(i, j, kind):
            return (kind, i % n_grid, j % n_grid)

        nodes = set()
        for i in range(n_grid):
            ip = (i + 1) % n_grid
            for j in range(n_grid):
                jp = (j + 1) % n_grid
                corners = (pos[i, j], pos[ip, j], pos[ip, jp], pos[i, jp])
                if corners[0] == corners[1] == corners[2] == corners[3]:
                    continue
                if not (mask_ok[i, j] and mask_ok[ip, j] and mask_ok[ip, jp] and mask_ok[i, jp]):
                    continue
                edges = {
                    0: edge_id(i, j, "h"),      # between (i,j)-(i+1,j)
                    1: edge_id(ip, j, "v"),     # between (i+1,j)-(i+1,j+1)
                    2: edge_id(i, jp, "h"),     # between (i,j+1)-(i+1,j+1)
                    3: edge_id(i, j, "v"),      # between (i,j)-(i,j+1)
                }
                for e1, e2 in _cell_crossing_edges(corners):
                    n1, n2 = edges[e1], edges[e2]
                    nodes.add(n1)
                    nodes.add(n2)
                    union(n1, n2)
        roots = {find(x) for x in nodes}
        total += len(roots)
    return total


def export_billiard_csv(
    path, breakpoints, records, stride: float = 0.05, seed: Optional[int] = None
) -> None:
    """Write a trajectory polyline as CSV: t, theta, phi, px, py, event."""
    bounce_times = {}
    for r in records:
        bounce_times[round(r.time, 12)] = "grazing" if r.grazing else "bounce"
    rows = []
    t_end = breakpoints[-1][0]
    t = 0.0
    while t < t_end:
        q, p = path_state_at(breakpoints, t)
        rows.append((t, q.theta, q.phi, p[0], p[1], "flight"))
        t += stride
    for r in records:
        rows.append(
            (r.time, r.point.theta, r.point.phi, math.nan, math.nan,
             "grazing" if r.grazing else "bounce")
        )
    q, p = path_state_at(breakpoints, t_end)
    rows.append((t_end, q.theta, q.phi, p[0], p[1], "flight"))
    rows.sort(key=lambda r: r[0])
    with open(path, "w", newline="") as fh:
        if seed is not None:
            fh.write(f"# {rng_header(seed)}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "theta", "phi", "px", "py", "event"])
        for row in rows:
            writer.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])
