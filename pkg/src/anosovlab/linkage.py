"""The explicit Anosov linkage: parameters, configuration charts, implicit
surface, billiard table, and the verification battery for its hypotheses.

Configuration coordinates are (theta, phi, c) plus the massless-vertex pair
(d, e) used only for constraint checking.  The configuration surface over
the table is the union of four graphs indexed by two signs; the single
implicit polynomial eliminating both signs is smooth across the wall folds
but degenerates on the self-intersection curve of the immersion, so
integration-grade charts resolve one sign at a time and a policy switches
between them away from both singular sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .billiard import (
    BilliardTable,
    HorizonGrid,
    Wall,
    finite_horizon_search,
    sample_wall_points,
    wall_curvature,
)
from .errors import InvalidParams, OutsideDomain
from .rng import make_rng
from .surface import (
    Chart,
    FlattenedSurface,
    SurfacePoint,
    normal_curvature,
    surface_point,
    vertical_component,
)
from .torus import TAU, TorusPoint, cosine_curve

RESIDUAL_TOL = 1e-12
RADICAND_CLAMP = -1e-12


@dataclass(frozen=True)
class LinkageParams:
    """Rod lengths (l, r) and the flattening mass parameter epsilon."""

    l: float
    r: float
    epsilon: float = 0.05

    def __post_init__(self):
        if self.l <= 0 or self.r <= 0:
            raise InvalidParams("rod lengths must be positive")
        if not (0.0 < self.epsilon <= 1.0):
            raise InvalidParams("mass parameter epsilon must lie in (0, 1]")


@dataclass(frozen=True)
class ConditionCheck:
    ok: bool
    margin: float


@dataclass(frozen=True)
class ValidityReport:
    conditions: dict

    @property
    def valid(self) -> bool:
        return all(c.ok for c in self.conditions.values())

    @property
    def failed(self) -> list[str]:
        return [k for k, c in self.conditions.items() if not c.ok]


def validate_params(p: LinkageParams) -> ValidityReport:
    """Evaluate the four admissibility inequalities with their margins."""
    margins = {
        "l+r>3": p.l + p.r - 3.0,
        "l<3": 3.0 - p.l,
        "(l-2)^2+r^2<1": 1.0 - ((p.l - 2.0) ** 2 + p.r**2),
        "r<1/2": 0.5 - p.r,
    }
    return ValidityReport({k: ConditionCheck(m > 0.0, m) for k, m in margins.items()})


def require_valid(p: LinkageParams) -> None:
    rep = validate_params(p)
    if not rep.valid:
        raise InvalidParams(f"parameters rejected: {', '.join(rep.failed)}")


@dataclass(frozen=True)
class SheetId:
    e_sign: int
    c_offset_sign: int

    def __post_init__(self):
        if self.e_sign not in (-1, 1) or self.c_offset_sign not in (-1, 1):
            raise ValueError("sheet signs must be +-1")


ALL_SHEETS = (
    SheetId(1, 1),
    SheetId(1, -1),
    SheetId(-1, 1),
    SheetId(-1, -1),
)


@dataclass(frozen=True)
class LinkageConfig:
    theta: float
    phi: float
    c: float
    d: float
    e: float
    l: float
    r: float

    @property
    def a(self):
        return -math.cos(self.theta) - 2.0

    @property
    def f(self):
        return math.sin(self.theta)

    @property
    def b(self):
        return math.cos(self.phi) + 2.0

    @property
    def g(self):
        return math.sin(self.phi)

    def residuals(self) -> tuple[float, float, float, float, float]:
        a, f, b, g = self.a, self.f, self.b, self.g
        return (
            (a + 2.0) ** 2 + f * f - 1.0,
            (b - 2.0) ** 2 + g * g - 1.0,
            (a - self.d) ** 2 + self.e**2 - self.l**2,
            (b - self.d) ** 2 + self.e**2 - self.l**2,
            self.d**2 + (self.c - self.e) ** 2 - self.r**2,
        )


def _uv(theta: float, phi: float) -> tuple[float, float]:
    ct, cp = math.cos(theta), math.cos(phi)
    return (ct + cp + 4.0) / 2.0, (ct - cp) / 2.0


def chart_lift(p: LinkageParams, base: TorusPoint, sheet: SheetId) -> LinkageConfig:
    """Lift a base point to the configuration surface on the chosen sheet.

    Radicands between the clamp tolerance and zero are treated as exact wall
    contact (square root zero); anything more negative is outside the sheet
    domain.
    """
    u, v = _uv(base.theta, base.phi)
    rad_e = p.l * p.l - u * u
    rad_c = p.r * p.r - v * v
    if rad_e < RADICAND_CLAMP or rad_c < RADICAND_CLAMP:
        raise OutsideDomain(
            f"base point outside chart domain: radicands ({rad_e:.3e}, {rad_c:.3e})"
        )
    e = sheet.e_sign * math.sqrt(max(0.0, rad_e))
    c = e + sheet.c_offset_sign * math.sqrt(max(0.0, rad_c))
    d = (-math.cos(base.theta) + math.cos(base.phi)) / 2.0
    return LinkageConfig(theta=base.theta, phi=base.phi, c=c, d=d, e=e, l=p.l, r=p.r)


def chart_lift_batch(p: LinkageParams, theta, phi, e_sign, c_offset_sign):
    """Vectorized lift: returns (c, d, e) arrays; nan outside the domain."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    u = (np.cos(theta) + np.cos(phi) + 4.0) / 2.0
    v = (np.cos(theta) - np.cos(phi)) / 2.0
    rad_e = p.l * p.l - u * u
    rad_c = p.r * p.r - v * v
    bad = (rad_e < RADICAND_CLAMP) | (rad_c < RADICAND_CLAMP)
    e = e_sign * np.sqrt(np.clip(rad_e, 0.0, None))
    c = e + c_offset_sign * np.sqrt(np.clip(rad_c, 0.0, None))
    d = (-np.cos(theta) + np.cos(phi)) / 2.0
    c = np.where(bad, np.nan, c)
    return c, d, e


# ----------------------------------------------------------------------------
# Charts
# ----------------------------------------------------------------------------


def _full_chart(p: LinkageParams) -> Chart:
    l2, r2 = p.l * p.l, p.r * p.r

    def eval10(theta, phi, c):
        st, ct = math.sin(theta), math.cos(theta)
        sp, cp = math.sin(phi), math.cos(phi)
        u = (ct + cp + 4.0) / 2.0
        v = (ct - cp) / 2.0
        A = l2 - u * u
        B = r2 - v * v
        P = c * c + A - B
        c2 = c * c
        At, Ap = u * st, u * sp
        Bt, Bp = v * st, -v * sp
        Pt, Pp = (u - v) * st, (u + v) * sp
        Att = -st * st / 2.0 + u * ct
        Atp = -st * sp / 2.0
        App = -sp * sp / 2.0 + u * cp
        Ptt = (u - v) * ct
        Ptp = -st * sp
        Ppp = (u + v) * cp
        val = P * P - 4.0 * c2 * A
        gt = 2.0 * P * Pt - 4.0 * c2 * At
        gp = 2.0 * P * Pp - 4.0 * c2 * Ap
        gc = 4.0 * c * (P - 2.0 * A)
        htt = 2.0 * Pt * Pt + 2.0 * P * Ptt - 4.0 * c2 * Att
        htp = 2.0 * Pt * Pp + 2.0 * P * Ptp - 4.0 * c2 * Atp
        hpp = 2.0 * Pp * Pp + 2.0 * P * Ppp - 4.0 * c2 * App
        htc = 4.0 * c * Pt - 8.0 * c * At
        hpc = 4.0 * c * Pp - 8.0 * c * Ap
        hcc = 4.0 * (P - 2.0 * A) + 8.0 * c2
        return (val, gt, gp, gc, htt, htp, htc, hpp, hpc, hcc)

    return Chart(name="linkage_full", eval10=eval10)


def _e_resolved_chart(p: LinkageParams, sigma: int) -> Chart:
    """Defining function with the e-sign fixed: valid away from the sum wall."""
    l2, r2 = p.l * p.l, p.r * p.r
    sg = float(sigma)

    def eval10(theta, phi, c):
        st, ct = math.sin(theta), math.cos(theta)
        sp, cp = math.sin(phi), math.cos(phi)
        u = (ct + cp + 4.0) / 2.0
        v = (ct - cp) / 2.0
        A = l2 - u * u
        B = r2 - v * v
        S = math.sqrt(A)
        At, Ap = u * st, u * sp
        Bt, Bp = v * st, -v * sp
        Att = -st * st / 2.0 + u * ct
        Atp = -st * sp / 2.0
        App = -sp * sp / 2.0 + u * cp
        Btt = -st * st / 2.0 + v * ct
        Btp = st * sp / 2.0
        Bpp = -sp * sp / 2.0 - v * cp
        iS = 0.5 / S
        St, Sp = At * iS, Ap * iS
        iS3 = 0.25 / (A * S)
        Stt = Att * iS - At * At * iS3
        Stp = Atp * iS - At * Ap * iS3
        Spp = App * iS - Ap * Ap * iS3
        w = c - sg * S
        val = w * w - B
        gt = -2.0 * w * sg * St - Bt
        gp = -2.0 * w * sg * Sp - Bp
        gc = 2.0 * w
        htt = 2.0 * St * St - 2.0 * w * sg * Stt - Btt
        htp = 2.0 * St * Sp - 2.0 * w * sg * Stp - Btp
        hpp = 2.0 * Sp * Sp - 2.0 * w * sg * Spp - Bpp
        htc = -2.0 * sg * St
        hpc = -2.0 * sg * Sp
        hcc = 2.0
        return (val, gt, gp, gc, htt, htp, htc, hpp, hpc, hcc)

    def dt_scale(theta, phi, c):
        # sqrt(A) must stay real across RK stage excursions: |dA/dt| <= 2 u <= 6.
        u, _ = _uv(theta, phi)
        return max(1e-5, 0.1 * (l2 - u * u) / 6.0)

    return Chart(name=f"linkage_e{sigma:+d}", eval10=eval10, meta=("e", sigma), dt_scale=dt_scale)


def _s_resolved_chart(p: LinkageParams, s: int) -> Chart:
    """Defining function with the c-offset sign fixed: valid near the sum wall."""
    l2, r2 = p.l * p.l, p.r * p.r
    sn = float(s)

    def eval10(theta, phi, c):
        st, ct = math.sin(theta), math.cos(theta)
        sp, cp = math.sin(phi), math.cos(phi)
        u = (ct + cp + 4.0) / 2.0
        v = (ct - cp) / 2.0
        A = l2 - u * u
        B = r2 - v * v
        R = math.sqrt(B)
        At, Ap = u * st, u * sp
        Bt, Bp = v * st, -v * sp
        Att = -st * st / 2.0 + u * ct
        Atp = -st * sp / 2.0
        App = -sp * sp / 2.0 + u * cp
        Btt = -st * st / 2.0 + v * ct
        Btp = st * sp / 2.0
        Bpp = -sp * sp / 2.0 - v * cp
        iR = 0.5 / R
        Rt, Rp = Bt * iR, Bp * iR
        iR3 = 0.25 / (B * R)
        Rtt = Btt * iR - Bt * Bt * iR3
        Rtp = Btp * iR - Bt * Bp * iR3
        Rpp = Bpp * iR - Bp * Bp * iR3
        w = c - sn * R
        val = w * w - A
        gt = -2.0 * w * sn * Rt - At
        gp = -2.0 * w * sn * Rp - Ap
        gc = 2.0 * w
        htt = 2.0 * Rt * Rt - 2.0 * w * sn * Rtt - Att
        htp = 2.0 * Rt * Rp - 2.0 * w * sn * Rtp - Atp
        hpp = 2.0 * Rp * Rp - 2.0 * w * sn * Rpp - App
        htc = -2.0 * sn * Rt
        hpc = -2.0 * sn * Rp
        hcc = 2.0
        return (val, gt, gp, gc, htt, htp, htc, hpp, hpc, hcc)

    def dt_scale(theta, phi, c):
        # sqrt(B) must stay real across RK stage excursions: |dB/dt| <= 2|v| <= 2.
        _, v = _uv(theta, phi)
        return max(1e-5, 0.1 * (r2 - v * v) / 2.0)

    return Chart(name=f"linkage_s{s:+d}", eval10=eval10, meta=("s", s), dt_scale=dt_scale)


def chart_separation_margin(p: LinkageParams) -> float:
    """Largest m with {A <= m} and {B <= m} disjoint over the table.

    Exists exactly because l + r > 3; the chart-switching thresholds are
    fractions of it.
    """
    require_valid(p)

    def g(m):
        return math.sqrt(p.l * p.l - m) + math.sqrt(p.r * p.r - m) - 3.0

    hi = p.r * p.r - 1e-12
    if g(hi) > 0:
        return hi
    return float(brentq(g, 1e-12, hi, xtol=1e-12))


def sheet_of_point(p: LinkageParams, theta: float, phi: float, c: float) -> SheetId:
    """Identify the branch a surface point belongs to (ties at walls are fine)."""
    u, v = _uv(theta, phi)
    S = math.sqrt(max(0.0, p.l * p.l - u * u))
    R = math.sqrt(max(0.0, p.r * p.r - v * v))
    best, best_sheet = math.inf, ALL_SHEETS[0]
    for sheet in ALL_SHEETS:
        res = abs(c - (sheet.e_sign * S + sheet.c_offset_sign * R))
        if res < best:
            best, best_sheet = res, sheet
    return best_sheet


def implicit_G(p: LinkageParams) -> FlattenedSurface:
    """The configuration surface as a flattened implicit surface.

    The global quartic vanishes on all four sheets; the chart policy hands
    the integrator e-resolved charts in the bulk and c-offset-resolved
    charts near the sum wall, switching with hysteresis inside the
    separation margin.
    """
    require_valid(p)
    full = _full_chart(p)
    e_charts = {1: _e_resolved_chart(p, 1), -1: _e_resolved_chart(p, -1)}
    s_charts = {1: _s_resolved_chart(p, 1), -1: _s_resolved_chart(p, -1)}
    m_star = chart_separation_margin(p)
    m_lo, m_hi = 0.3 * m_star, 0.6 * m_star
    l2, r2 = p.l * p.l, p.r * p.r

    def policy(x: float, y: float, c: float, current: Optional[Chart]) -> Chart:
        u, v = _uv(x, y)
        A = l2 - u * u
        if current is None or not current.meta:
            sheet = sheet_of_point(p, x, y, c)
            if A < m_lo:
                return s_charts[sheet.c_offset_sign]
            return e_charts[sheet.e_sign]
        kind, parity = current.meta
        if kind == "e":
            if A < m_lo:
                S = math.sqrt(max(0.0, A))
                s = 1 if c - parity * S >= 0.0 else -1
                return s_charts[s]
            return current
        if A > m_hi:
            B = r2 - v * v
            R = math.sqrt(max(0.0, B))
            sigma = 1 if c - parity * R >= 0.0 else -1
            return e_charts[sigma]
        return current

    def lift(x: float, y: float, sheet: SheetId) -> float:
        cfg = chart_lift(p, TorusPoint(x, y), sheet)
        return cfg.c

    z_max = math.sqrt(l2 - 1.0) + p.r
    return FlattenedSurface(
        name=f"linkage(l={p.l!r}, r={p.r!r})",
        chart=full,
        epsilon=p.epsilon,
        ambient="torus",
        branch_ids=ALL_SHEETS,
        lift=lift,
        chart_policy=policy,
        table=build_table(p),
        base_box=((0.0, TAU), (0.0, TAU)),
        mesh_z=(-1.1 * z_max, 1.1 * z_max),
    )


def build_table(p: LinkageParams) -> BilliardTable:
    """The projected billiard table: three cosine walls on the torus."""
    require_valid(p)
    table = BilliardTable(
        walls=[
            Wall(cosine_curve(1.0, 1.0), level=2.0 * p.l - 4.0, inside_sign=1),
            Wall(cosine_curve(1.0, -1.0), level=2.0 * p.r, inside_sign=1),
            Wall(cosine_curve(-1.0, 1.0), level=2.0 * p.r, inside_sign=1),
        ]
    )
    table.validate()
    return table


# ----------------------------------------------------------------------------
# Closed-form wall curvature sign polynomials
# ----------------------------------------------------------------------------


def wall_sign_polynomial(p: LinkageParams, wall_index: int, cos_theta) -> np.ndarray:
    """Quadratic in cos(theta) carrying the sign of the wall curvature."""
    u = np.asarray(cos_theta, dtype=float)
    if wall_index == 0:
        c1 = 2.0 * p.l - 4.0
        return -c1 * u * u + c1 * c1 * u - c1
    if wall_index == 1:  # cos(theta) - cos(phi) = 2r
        return -2.0 * p.r * u * u + 4.0 * p.r**2 * u - 2.0 * p.r
    if wall_index == 2:  # cos(phi) - cos(theta) = 2r
        return -2.0 * p.r * u * u - 4.0 * p.r**2 * u - 2.0 * p.r
    raise IndexError("wall index out of range")


def wall_sign_discriminant(p: LinkageParams, wall_index: int) -> float:
    if wall_index == 0:
        c1 = 2.0 * p.l - 4.0
        return c1 * c1 * (c1 * c1 - 4.0)
    return 16.0 * p.r**2 * (p.r**2 - 1.0)


# ----------------------------------------------------------------------------
# Assumption battery
# ----------------------------------------------------------------------------


@dataclass
class AssumptionsReport:
    params: LinkageParams
    rejected: bool
    failed_conditions: list
    vertical_tangency_min_h: Optional[float] = None
    vertical_tangency_pass: bool = False
    section_curvature_min: Optional[float] = None
    section_curvature_pass: bool = False
    wall_curvature_max: Optional[float] = None
    wall_polynomial_max: Optional[float] = None
    wall_sign_mismatches: Optional[int] = None
    wall_curvature_pass: bool = False
    horizon_margin: Optional[float] = None
    horizon_free_flight: Optional[float] = None
    horizon_pass: bool = False

    @property
    def all_pass(self) -> bool:
        return (
            not self.rejected
            and self.vertical_tangency_pass
            and self.section_curvature_pass
            and self.wall_curvature_pass
            and self.horizon_pass
        )


def verify_assumptions(
    p: LinkageParams,
    epsilon_probe: float = 1.0,
    n_interior: int = 2000,
    n_section: int = 1000,
    n_wall: int = 10_000,
    t_max: float = 50.0,
    run_search: bool = True,
    horizon_grid: Optional[HorizonGrid] = None,
    seed: int = 0,
) -> AssumptionsReport:
    """Check the four hypotheses behind the hyperbolicity result.

    Invalid parameters are rejected before any search or integration; the
    report then carries the violated conditions.
    """
    validity = validate_params(p)
    if not validity.valid:
        return AssumptionsReport(params=p, rejected=True, failed_conditions=validity.failed)
    report = AssumptionsReport(params=p, rejected=False, failed_conditions=[])
    rng = make_rng(seed)
    surf = implicit_G(LinkageParams(p.l, p.r, 1.0))
    table = surf.table

    # 1: the vertical direction is never tangent over the open table.
    min_h = math.inf
    found = 0
    while found < n_interior:
        th = rng.uniform(0.0, TAU)
        ph = rng.uniform(0.0, TAU)
        if float(table.max_violation(th, ph)) > -0.05:
            continue
        sheet = ALL_SHEETS[int(rng.integers(0, 4))]
        cfg = chart_lift(p, TorusPoint(th, ph), sheet)
        q = surface_point(surf, [th, ph, cfg.c])
        chart = surf.chart_at(th, ph, cfg.c)
        min_h = min(min_h, abs(vertical_component(surf, q, chart)))
        found += 1
    report.vertical_tangency_min_h = min_h
    report.vertical_tangency_pass = min_h > 1e-3

    # 2: nonzero curvature of the vertical section at wall points.
    min_k = math.inf
    per_wall = max(1, n_section // 3)
    ez = np.array([0.0, 0.0, 1.0])
    for wi in range(3):
        for pt in sample_wall_points(table, wi, per_wall, rng):
            sheet = SheetId(1, 1)
            cfg = chart_lift(p, pt, sheet)
            q = surface_point(surf, [pt.theta, pt.phi, cfg.c])
            chart = surf.chart_at(pt.theta, pt.phi, cfg.c)
            k_vert = abs(normal_curvature(surf, q, ez, chart))
            min_k = min(min_k, k_vert)
    report.section_curvature_min = min_k
    report.section_curvature_pass = min_k > 1e-2

    # 3: negative wall curvature, sampled and in closed form.
    max_curv = -math.inf
    mismatches = 0
    per_wall = max(1, n_wall // 3)
    for wi in range(3):
        for pt in sample_wall_points(table, wi, per_wall, rng):
            k = wall_curvature(table, wi, pt)
            max_curv = max(max_curv, k)
            poly = float(wall_sign_polynomial(p, wi, math.cos(pt.theta)))
            if math.copysign(1.0, k) != math.copysign(1.0, poly):
                mismatches += 1
    grid_u = np.linspace(-1.0, 1.0, 4001)
    poly_max = max(float(wall_sign_polynomial(p, wi, grid_u).max()) for wi in range(3))
    report.wall_curvature_max = max_curv
    report.wall_polynomial_max = poly_max
    report.wall_sign_mismatches = mismatches
    report.wall_curvature_pass = max_curv < 0.0 and poly_max < 0.0 and mismatches == 0

    # 4: finite horizon, analytic sufficient condition plus the search.
    margin = 1.0 - ((p.l - 2.0) ** 2 + p.r**2)
    report.horizon_margin = margin
    if run_search:
        horizon = finite_horizon_search(table, t_max, horizon_grid)
        report.horizon_free_flight = horizon.max_free_flight
        report.horizon_pass = margin > 0.0 and horizon.witness is None
    else:
        report.horizon_pass = margin > 0.0
    return report
