"""Batch experiments: flow convergence, certificate pipeline, passage
statistics, and plot/data export.

Every experiment is driven by an ExperimentConfig and a single seed; repeated
runs with the same config produce byte-identical CSV/JSON outputs (floats are
written with repr, JSON keys are sorted, wall-clock values never enter data
files, and matplotlib SVG output is stripped of volatile metadata).
"""

from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .billiard import (
    BilliardState,
    BilliardTable,
    HorizonGrid,
    HorizonReport,
    billiard_path,
    finite_horizon_search,
    path_state_at,
)
from .errors import EmptyDataset, InvalidParams
from .geodesic import (
    GeodesicState,
    integrate_with_events,
    pushforward_initial,
    states_at,
)
from .hyperbolicity import (
    CertificateReport,
    anosov_certificate,
    estimate_kappa,
    lyapunov_exponent,
    random_phase_point,
)
from .linkage import (
    AssumptionsReport,
    LinkageParams,
    SheetId,
    implicit_G,
    validate_params,
    verify_assumptions,
)
from .rng import RNG_NAME, make_rng, rng_header
from .torus import TAU, TorusPoint, direction_angle, torus_distance, wrap_angle

EXPERIMENTS = ("converge", "anosov", "horizon", "curvature_scan", "zone_stats", "mesh")

GRAZING_MARGIN = 0.05       # tangency margin carving the compact test set
INTERIOR_MARGIN = 0.02      # wall-value margin for initial points
PROVEN_REGIME_MAX_EPS = 0.5


@dataclass
class ExperimentConfig:
    experiment: str
    params: LinkageParams
    eps_list: tuple = (0.2, 0.1, 0.05, 0.025)
    delta: float = 0.05
    nu: float = 0.5
    seed: int = 0
    output_dir: Optional[Path] = None
    samples: int = 50
    time: float = 2.5

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        eps = tuple(float(e) for e in self.eps_list)
        if any(not (0.0 < e <= 1.0) for e in eps):
            raise ValueError("every epsilon must lie in (0, 1]")
        if not all(b < a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_list must be strictly decreasing")
        self.eps_list = eps
        if not (0.0 < self.delta < 1.0 and 0.0 < self.nu < 1.0):
            raise ValueError("delta and nu must lie in (0, 1)")
        if self.output_dir is not None:
            self.output_dir = Path(self.output_dir)


@dataclass(frozen=True)
class ConvergenceRow:
    epsilon: float
    sup_dist: float
    n_points: int
    excluded_grazing: int


# ----------------------------------------------------------------------------
# Theorem-style convergence experiment
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class _TestOrbit:
    state: BilliardState
    eval_times: tuple
    breakpoints: tuple
    n_bounces: int


def build_compact_family(
    table: BilliardTable,
    rng: np.random.Generator,
    n_orbits: int,
    t_final: float,
    n_times: int = 6,
    bounce_range: tuple = (1, 1),
) -> tuple[list[_TestOrbit], int]:
    """Compact test family of billiard orbits away from tangencies.

    Orbits whose impacts come closer to tangential than the margin are
    excluded and counted; evaluation times keep the flow endpoint away from
    the walls.
    """
    orbits: list[_TestOrbit] = []
    excluded = 0
    attempts = 0
    while len(orbits) < n_orbits and attempts < 400 * n_orbits:
        attempts += 1
        th = rng.uniform(0.0, TAU)
        ph = rng.uniform(0.0, TAU)
        if float(table.max_violation(th, ph)) > -INTERIOR_MARGIN:
            continue
        ang = rng.uniform(0.0, TAU)
        s = BilliardState(TorusPoint(th, ph), np.array([math.cos(ang), math.sin(ang)]))
        breakpoints, records = billiard_path(table, s, t_final)
        if not (bounce_range[0] <= len(records) <= bounce_range[1]):
            continue
        if any(
            math.sqrt(max(0.0, 1.0 - math.sin(r.incidence_angle) ** 2)) > 1.0 - GRAZING_MARGIN
            for r in records
        ):
            excluded += 1
            continue
        times = []
        for t in np.linspace(0.15 * t_final, t_final, n_times):
            q, _ = path_state_at(breakpoints, float(t))
            if float(table.max_violation(q.theta, q.phi)) <= -INTERIOR_MARGIN:
                times.append(float(t))
        if len(times) < 2:
            continue
        orbits.append(
            _TestOrbit(
                state=s,
                eval_times=tuple(times),
                breakpoints=tuple((t, q.copy(), p.copy()) for t, q, p in breakpoints),
                n_bounces=len(records),
            )
        )
    return orbits, excluded


def run_convergence(cfg: ExperimentConfig) -> list[ConvergenceRow]:
    """Sup distance between projected geodesics and billiard orbits per epsilon.

    The same compact one-bounce family is reused across the epsilon list, so
    rows are directly comparable.
    """
    params = cfg.params
    if not validate_params(params).valid:
        raise InvalidParams("convergence experiment needs valid linkage parameters")
    rng = make_rng(cfg.seed)
    surf1 = implicit_G(LinkageParams(params.l, params.r, 1.0))
    table = surf1.table
    orbits, excluded = build_compact_family(table, rng, cfg.samples, cfg.time)
    sheet = SheetId(1, 1)
    rows = []
    for eps in cfg.eps_list:
        surf = surf1.with_epsilon(float(eps))
        sup_dist = 0.0
        n_pts = 0
        for orbit in orbits:
            s0 = pushforward_initial(surf, orbit.state, sheet)
            geo_states = states_at(surf, s0, orbit.eval_times)
            for t, gs in zip(orbit.eval_times, geo_states):
                q_b, p_b = path_state_at(list(orbit.breakpoints), t)
                q_g = TorusPoint(float(gs.q[0]), float(gs.q[1]))
                p_h = np.array([gs.p[0], gs.p[1]])
                p_h /= np.linalg.norm(p_h)
                d = torus_distance(q_g, q_b) + direction_angle(p_h, p_b)
                sup_dist = max(sup_dist, d)
                n_pts += 1
        rows.append(
            ConvergenceRow(
                epsilon=float(eps), sup_dist=sup_dist, n_points=n_pts, excluded_grazing=excluded
            )
        )
    return rows


# ----------------------------------------------------------------------------
# Certificate pipeline
# ----------------------------------------------------------------------------


@dataclass
class PipelineResult:
    assumptions: AssumptionsReport
    horizon: HorizonReport
    certificates: list[CertificateReport]
    lyapunov: dict
    flags: dict


def run_anosov_pipeline(
    cfg: ExperimentConfig,
    n_lyapunov: int = 0,
    horizon_t_max: float = 50.0,
    certificate_delta: float = 0.9,
    horizon_grid: Optional[HorizonGrid] = None,
) -> PipelineResult:
    """Assumption battery, horizon search, then one certificate per epsilon."""
    params = cfg.params
    validity = validate_params(params)
    assumptions = verify_assumptions(
        params, epsilon_probe=cfg.eps_list[0], run_search=False, seed=cfg.seed
    )
    if not validity.valid or assumptions.rejected or not assumptions.all_pass:
        return PipelineResult(
            assumptions=assumptions,
            horizon=HorizonReport(max_free_flight=math.nan, witness=None),
            certificates=[],
            lyapunov={},
            flags={"aborted": True},
        )
    surf1 = implicit_G(LinkageParams(params.l, params.r, 1.0))
    horizon = finite_horizon_search(surf1.table, horizon_t_max, horizon_grid)
    assumptions.horizon_free_flight = horizon.max_free_flight
    assumptions.horizon_pass = assumptions.horizon_margin > 0 and horizon.witness is None
    certificates = []
    lyap: dict = {}
    for i, eps in enumerate(cfg.eps_list):
        rng = make_rng(cfg.seed, stream=i + 1)
        surf = surf1.with_epsilon(float(eps))
        kappa = estimate_kappa(surf, certificate_delta, float(eps), rng=rng)
        rep = anosov_certificate(
            surf,
            certificate_delta,
            float(eps),
            cfg.samples,
            T=1.0,
            horizon_time=horizon.max_free_flight,
            kappa=kappa,
            rng=rng,
        )
        certificates.append(rep)
        if n_lyapunov > 0:
            exps = []
            for _ in range(n_lyapunov):
                s0 = random_phase_point(surf, rng)
                exps.append(lyapunov_exponent(surf, s0, max(10.0, cfg.time)))
            lyap[float(eps)] = exps
    flags = {
        "aborted": False,
        "outside_proven_regime": [
            float(e) for e in cfg.eps_list if e > PROVEN_REGIME_MAX_EPS
        ],
    }
    return PipelineResult(
        assumptions=assumptions,
        horizon=horizon,
        certificates=certificates,
        lyapunov=lyap,
        flags=flags,
    )


# ----------------------------------------------------------------------------
# Zone passage statistics
# ----------------------------------------------------------------------------


@dataclass
class ZoneStatsResult:
    epsilon: float
    delta: float
    nu: float
    kappa: float
    n_trajectories: int
    n_passages: int
    n_nongrazing: int
    frac_within_sqrt_delta: float
    max_duration_nongrazing: float
    max_abs_dpx_nongrazing: float
    max_int_k_nongrazing: float
    min_int_k: float
    grazing_windows: int
    min_py_drop: float
    py_drop_bound: float
    violations: list = field(default_factory=list)
    passages: list = field(default_factory=list)

    def summary_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "nu": self.nu,
            "kappa": self.kappa,
            "n_trajectories": self.n_trajectories,
            "n_passages": self.n_passages,
            "n_nongrazing": self.n_nongrazing,
            "frac_within_sqrt_delta": self.frac_within_sqrt_delta,
            "max_duration_nongrazing": self.max_duration_nongrazing,
            "max_abs_dpx_nongrazing": self.max_abs_dpx_nongrazing,
            "max_int_k_nongrazing": self.max_int_k_nongrazing,
            "min_int_k": self.min_int_k,
            "grazing_windows": self.grazing_windows,
            "min_py_drop": self.min_py_drop,
            "py_drop_bound": self.py_drop_bound,
            "violations": self.violations,
        }


def run_zone_stats(
    cfg: ExperimentConfig, epsilon: Optional[float] = None, record_stride: float = 2e-3
) -> ZoneStatsResult:
    """Passage statistics for one epsilon (defaults to the first in the list)."""
    params = cfg.params
    eps = float(epsilon if epsilon is not None else cfg.eps_list[0])
    surf = implicit_G(LinkageParams(params.l, params.r, eps))
    rng = make_rng(cfg.seed)
    kappa = estimate_kappa(surf, cfg.delta, eps, samples=1500, rng=rng).kappa
    passages_all = []
    windows = 0
    min_drop = math.inf
    bound = -2.0 * math.sqrt(max(kappa, 0.0))
    for _ in range(cfg.samples):
        while True:
            th = rng.uniform(0.0, TAU)
            ph = rng.uniform(0.0, TAU)
            if float(surf.table.max_violation(th, ph)) < -0.1:
                break
        ang = rng.uniform(0.0, TAU)
        b = BilliardState(TorusPoint(th, ph), np.array([math.cos(ang), math.sin(ang)]))
        s0 = pushforward_initial(surf, b, SheetId(1, 1))
        samples, passages = integrate_with_events(
            surf, s0, cfg.time, cfg.delta, cfg.nu, record_stride=record_stride
        )
        passages_all.extend(passages)
        w, d = _grazing_windows(samples, passages, kappa, cfg.delta)
        windows += w
        min_drop = min(min_drop, d)
    nong = [z for z in passages_all if abs(z.px_in) < 0.5]
    sqrt_d = math.sqrt(cfg.delta)
    violations = []
    for z in nong:
        if z.duration > sqrt_d:
            violations.append({"kind": "duration", "value": z.duration, "t_in": z.t_in})
        if z.integral_k >= 0.0:
            violations.append({"kind": "int_k_sign", "value": z.integral_k, "t_in": z.t_in})
    if min_drop < bound:
        violations.append({"kind": "py_drop", "value": min_drop})
    return ZoneStatsResult(
        epsilon=eps,
        delta=cfg.delta,
        nu=cfg.nu,
        kappa=kappa,
        n_trajectories=cfg.samples,
        n_passages=len(passages_all),
        n_nongrazing=len(nong),
        frac_within_sqrt_delta=(
            sum(1 for z in nong if z.duration <= sqrt_d) / len(nong) if nong else 1.0
        ),
        max_duration_nongrazing=max((z.duration for z in nong), default=0.0),
        max_abs_dpx_nongrazing=max((abs(z.delta_px) for z in nong), default=0.0),
        max_int_k_nongrazing=max((z.integral_k for z in nong), default=-math.inf),
        min_int_k=min((z.integral_k for z in passages_all), default=math.inf),
        grazing_windows=windows,
        min_py_drop=min_drop if windows else math.inf,
        py_drop_bound=bound,
        violations=violations,
        passages=passages_all,
    )


def _grazing_windows(samples, passages, kappa: float, delta: float):
    """Unit-time windows of low accumulated curvature around band entries.

    Window curvature budgets come from the integrator's own quadrature (the
    per-sample running integrals), not from re-integrating possibly
    undersampled pointwise values.  Returns (window count, worst wall-aligned
    momentum drop over windows).
    """
    if not samples or not passages:
        return 0, math.inf
    ts = np.array([s.t for s in samples])
    int_abs_k = np.array([s.int_abs_k for s in samples])
    count = 0
    worst = math.inf
    for z in passages:
        t0 = max(0.0, z.t_in - 1.0 / 3.0)
        t1 = t0 + 1.0
        sel = (ts >= t0) & (ts <= t1)
        if sel.sum() < 4:
            continue
        idx = np.nonzero(sel)[0]
        window_abs = float(int_abs_k[idx[-1]] - int_abs_k[idx[0]])
        if window_abs > 3.0 * kappa * kappa:
            continue
        count += 1
        p0 = None
        drop = 0.0
        for i in idx:
            s = samples[i]
            py_rot = _rotated_py(s, z)
            if p0 is None:
                p0 = py_rot
            drop = min(drop, py_rot - p0)
        worst = min(worst, drop)
    return count, worst


def _rotated_py(sample, passage) -> float:
    beta = passage.frame_angle
    return math.sin(beta) * sample.px + math.cos(beta) * sample.py


# ----------------------------------------------------------------------------
# Plot export
# ----------------------------------------------------------------------------


def _mpl():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "anosovlab"
    return plt


def _savefig(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_table(table: BilliardTable, path, n: int = 400, overlays: Sequence = ()) -> None:
    """Shaded table with obstacles, drawn on the centered fundamental square."""
    plt = _mpl()
    ax_vals = np.linspace(-math.pi, math.pi, n)
    th, ph = np.meshgrid(ax_vals, ax_vals, indexing="ij")
    outside = table.max_violation(th, ph) > 0.0
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.contourf(
        ax_vals, ax_vals, outside.T.astype(float), levels=[-0.5, 0.5, 1.5],
        colors=["0.8", "white"],
    )
    ax.contour(ax_vals, ax_vals, outside.T.astype(float), levels=[0.5], colors="black")
    for xs, ys in overlays:
        ax.plot(xs, ys, lw=0.7)
    ax.set_xlabel("theta")
    ax.set_ylabel("phi")
    ax.set_aspect("equal")
    _savefig(fig, path)
    plt.close(fig)


def count_plot_obstacles(table: BilliardTable, n: int = 400) -> int:
    """Connected obstacle patches in the (non-periodic) plot window."""
    from scipy.ndimage import label

    ax_vals = np.linspace(-math.pi, math.pi, n)
    th, ph = np.meshgrid(ax_vals, ax_vals, indexing="ij")
    outside = table.max_violation(th, ph) > 0.0
    _, count = label(outside)
    return int(count)


def wrap_for_plot(xs: np.ndarray, ys: np.ndarray):
    """Wrap curves to [-pi, pi) with NaN breaks at the seams."""
    xs = (np.asarray(xs) + math.pi) % TAU - math.pi
    ys = (np.asarray(ys) + math.pi) % TAU - math.pi
    jumps = np.nonzero(
        (np.abs(np.diff(xs)) > math.pi) | (np.abs(np.diff(ys)) > math.pi)
    )[0]
    xs = xs.astype(float).copy()
    ys = ys.astype(float).copy()
    xs[jumps] = np.nan
    ys[jumps] = np.nan
    return xs, ys


def plot_convergence(rows: Sequence[ConvergenceRow], path) -> None:
    if not rows:
        raise EmptyDataset("no convergence rows to plot")
    plt = _mpl()
    fig, ax = plt.subplots(figsize=(5, 4))
    eps = [r.epsilon for r in rows]
    sup = [r.sup_dist for r in rows]
    ax.loglog(eps, sup, "o-")
    ax.set_xlabel("flattening parameter")
    ax.set_ylabel("sup distance to billiard flow")
    ax.grid(True, which="both", alpha=0.3)
    _savefig(fig, path)
    plt.close(fig)


def plot_certificate_margins(reports: Sequence[CertificateReport], path) -> None:
    if not reports:
        raise EmptyDataset("no certificate reports to plot")
    plt = _mpl()
    fig, ax = plt.subplots(figsize=(5, 4))
    eps = [r.epsilon for r in reports]
    ax.semilogx(eps, [r.min_u for r in reports], "o-", label="min u(T)")
    ax.semilogx(eps, [r.threshold for r in reports], "s--", label="threshold")
    ax.set_xlabel("flattening parameter")
    ax.set_ylabel("rescaled Riccati value")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    _savefig(fig, path)
    plt.close(fig)


def plot_geodesic_overlay(surf, trajectories: Sequence, path, table=None) -> None:
    """Projected geodesics over the table (trajectories = lists of samples)."""
    if not trajectories:
        raise EmptyDataset("no trajectories to plot")
    overlays = []
    for samples in trajectories:
        xs = np.array([s.x for s in samples])
        ys = np.array([s.y for s in samples])
        overlays.append(wrap_for_plot(xs, ys))
    plot_table(table or surf.table, path, overlays=overlays)


# ----------------------------------------------------------------------------
# Data writers and schemas
# ----------------------------------------------------------------------------


def write_convergence_csv(rows: Sequence[ConvergenceRow], path, seed: int) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {rng_header(seed)}\n")
        w = csv.writer(fh)
        w.writerow(["epsilon", "sup_dist", "n_points", "excluded_grazing"])
        for r in rows:
            w.writerow([repr(r.epsilon), repr(r.sup_dist), r.n_points, r.excluded_grazing])


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


CERTIFICATE_SCHEMA = {
    "type": "object",
    "required": [
        "delta", "epsilon", "kappa", "n_samples", "min_u", "pass", "blowup_count", "runtime",
    ],
    "properties": {
        "delta": {"type": "number"},
        "epsilon": {"type": "number"},
        "kappa": {"type": "number"},
        "kappa_scaled": {"type": "number"},
        "homothety": {"type": "number"},
        "horizon_time": {"type": "number"},
        "T": {"type": "number"},
        "T_run": {"type": "number"},
        "n_samples": {"type": "integer"},
        "min_u": {"type": "number"},
        "threshold": {"type": "number"},
        "threshold_scaled": {"type": "number"},
        "blowup_count": {"type": "integer"},
        "low_curvature_fraction": {"type": "number"},
        "int_k_bound_violations": {"type": "integer"},
        "pass": {"type": "boolean"},
        "pass_scaled": {"type": "boolean"},
        "runtime": {"type": ["number", "null"]},
    },
    "additionalProperties": True,
}

HORIZON_SCHEMA = {
    "type": "object",
    "required": ["max_free_flight", "witness_found", "t_max", "n_lines", "slope_family_max"],
    "properties": {
        "max_free_flight": {"type": "number"},
        "witness_found": {"type": "boolean"},
        "t_max": {"type": "number"},
        "n_lines": {"type": "integer"},
        "slope_family_max": {"type": "object"},
    },
}

ZONE_STATS_SCHEMA = {
    "type": "object",
    "required": [
        "epsilon", "delta", "nu", "kappa", "n_passages", "n_nongrazing",
        "frac_within_sqrt_delta", "min_int_k", "violations",
    ],
}

VALIDITY_SCHEMA = {
    "type": "object",
    "required": ["valid", "conditions"],
    "properties": {
        "valid": {"type": "boolean"},
        "conditions": {"type": "object"},
    },
}


def horizon_dict(rep: HorizonReport) -> dict:
    return {
        "max_free_flight": rep.max_free_flight,
        "witness_found": rep.witness is not None,
        "t_max": rep.t_max,
        "n_lines": rep.n_lines,
        "slope_family_max": dict(sorted(rep.slope_family_max.items())),
    }


def validity_dict(params: LinkageParams) -> dict:
    rep = validate_params(params)
    return {
        "l": params.l,
        "r": params.r,
        "epsilon": params.epsilon,
        "valid": rep.valid,
        "conditions": {
            k: {"ok": c.ok, "margin": c.margin} for k, c in rep.conditions.items()
        },
    }
