"""Command-line interface.

Exit codes: 0 success, 2 invalid linkage parameters, 3 certificate failure,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as xp
from .billiard import (
    BilliardState,
    HorizonGrid,
    billiard_path,
    export_billiard_csv,
    finite_horizon_search,
)
from .errors import GeometryError, InvalidParams
from .geodesic import (
    export_passages_jsonl,
    export_trajectory_csv,
    integrate_with_events,
    pushforward_initial,
)
from .hyperbolicity import export_certificate_json
from .linkage import LinkageParams, SheetId, build_table, implicit_G, validate_params
from .rng import rng_header
from .surface import export_obj
from .torus import TorusPoint

EXIT_OK = 0
EXIT_INVALID_PARAMS = 2
EXIT_CERTIFICATE_FAIL = 3
EXIT_NUMERICAL = 4


def _load_params(args) -> LinkageParams:
    if args.params:
        data = json.loads(Path(args.params).read_text())
        return LinkageParams(
            l=float(data["l"]), r=float(data["r"]),
            epsilon=float(data.get("epsilon", 0.05)),
        )
    return LinkageParams(l=args.l, r=args.r, epsilon=args.epsilon)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _eps_list(args) -> tuple:
    return tuple(float(x) for x in args.eps.split(","))


def _add_common(sub):
    sub.add_argument("--params", help="JSON file with {l, r, epsilon}")
    sub.add_argument("--l", type=float, default=2.8)
    sub.add_argument("--r", type=float, default=0.4)
    sub.add_argument("--epsilon", type=float, default=0.05)
    sub.add_argument("--out", default="out")
    sub.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="anosovlab",
        description="flattened-surface geodesic flows, dispersive torus billiards, "
        "and Riccati hyperbolicity certificates",
    )
    ap.add_argument("--config", help="JSON config mirroring ExperimentConfig")
    sp = ap.add_subparsers(dest="command", required=True)

    s = sp.add_parser("validate", help="check the linkage parameter inequalities")
    _add_common(s)

    s = sp.add_parser("table-plot", help="draw the billiard table")
    _add_common(s)

    s = sp.add_parser("billiard-trace", help="trace one billiard trajectory to CSV")
    _add_common(s)
    s.add_argument("--theta", type=float, default=math.pi)
    s.add_argument("--phi", type=float, default=math.pi)
    s.add_argument("--angle", type=float, default=0.7)
    s.add_argument("--time", type=float, default=10.0)

    s = sp.add_parser("geodesic-trace", help="trace one geodesic with zone events")
    _add_common(s)
    s.add_argument("--theta", type=float, default=math.pi)
    s.add_argument("--phi", type=float, default=math.pi)
    s.add_argument("--angle", type=float, default=0.7)
    s.add_argument("--time", type=float, default=5.0)
    s.add_argument("--delta", type=float, default=0.05)
    s.add_argument("--nu", type=float, default=0.5)

    s = sp.add_parser("converge", help="flow convergence experiment")
    _add_common(s)
    s.add_argument("--eps", default="0.2,0.1,0.05,0.025")
    s.add_argument("--samples", type=int, default=12)
    s.add_argument("--time", type=float, default=2.5)

    s = sp.add_parser("zone-stats", help="near-wall passage statistics")
    _add_common(s)
    s.add_argument("--eps", default="0.02")
    s.add_argument("--delta", type=float, default=0.05)
    s.add_argument("--nu", type=float, default=0.5)
    s.add_argument("--samples", type=int, default=20)
    s.add_argument("--time", type=float, default=4.0)

    s = sp.add_parser("anosov-cert", help="assumptions, horizon, and certificate per epsilon")
    _add_common(s)
    s.add_argument("--eps", default="0.05")
    s.add_argument("--delta", type=float, default=0.9)
    s.add_argument("--samples", type=int, default=50)
    s.add_argument("--time", type=float, default=12.0)
    s.add_argument("--lyapunov", type=int, default=0)

    s = sp.add_parser("horizon", help="free-chord search")
    _add_common(s)
    s.add_argument("--time", type=float, default=50.0)

    s = sp.add_parser("mesh-export", help="OBJ mesh of the configuration surface")
    _add_common(s)

    return ap


def _apply_config(args) -> None:
    if not args.config:
        return
    data = json.loads(Path(args.config).read_text())
    for key, value in data.items():
        if key == "params":
            args.l = float(value.get("l", args.l))
            args.r = float(value.get("r", args.r))
            args.epsilon = float(value.get("epsilon", args.epsilon))
        elif key == "eps_list" and hasattr(args, "eps"):
            args.eps = ",".join(repr(float(v)) for v in value)
        elif key == "output_dir":
            args.out = value
        elif hasattr(args, key):
            setattr(args, key, type(getattr(args, key))(value) if getattr(args, key) is not None else value)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_config(args)
    try:
        return _dispatch(args)
    except InvalidParams as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_INVALID_PARAMS
    except GeometryError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def _dispatch(args) -> int:
    cmd = args.command
    params = _load_params(args)

    if cmd == "validate":
        payload = xp.validity_dict(params)
        print(json.dumps(payload, sort_keys=True, indent=2))
        return EXIT_OK if payload["valid"] else EXIT_INVALID_PARAMS

    if cmd == "table-plot":
        out = _outdir(args)
        table = build_table(params)
        path = out / "table.svg"
        xp.plot_table(table, path)
        print(path)
        return EXIT_OK

    if cmd == "billiard-trace":
        out = _outdir(args)
        table = build_table(params)
        s = BilliardState(
            TorusPoint(args.theta, args.phi),
            np.array([math.cos(args.angle), math.sin(args.angle)]),
        )
        breakpoints, records = billiard_path(table, s, args.time)
        path = out / "billiard_trace.csv"
        export_billiard_csv(path, breakpoints, records, seed=args.seed)
        print(path)
        return EXIT_OK

    if cmd == "geodesic-trace":
        out = _outdir(args)
        surf = implicit_G(params)
        b = BilliardState(
            TorusPoint(args.theta, args.phi),
            np.array([math.cos(args.angle), math.sin(args.angle)]),
        )
        s0 = pushforward_initial(surf, b, SheetId(1, 1))
        samples, passages = integrate_with_events(
            surf, s0, args.time, args.delta, args.nu, record_stride=1e-3
        )
        csv_path = out / "geodesic_trace.csv"
        export_trajectory_csv(csv_path, samples, seed=args.seed)
        jsonl_path = out / "zone_passages.jsonl"
        export_passages_jsonl(jsonl_path, passages)
        print(csv_path)
        print(jsonl_path)
        return EXIT_OK

    if cmd == "converge":
        out = _outdir(args)
        cfg = xp.ExperimentConfig(
            experiment="converge", params=params, eps_list=_eps_list(args),
            seed=args.seed, samples=args.samples, time=args.time, output_dir=out,
        )
        rows = run_rows = xp.run_convergence(cfg)
        xp.write_convergence_csv(rows, out / "convergence.csv", args.seed)
        xp.plot_convergence(rows, out / "convergence.svg")
        for r in rows:
            print(f"epsilon={r.epsilon!r} sup_dist={r.sup_dist!r} n={r.n_points}")
        return EXIT_OK

    if cmd == "zone-stats":
        out = _outdir(args)
        eps_list = _eps_list(args)
        cfg = xp.ExperimentConfig(
            experiment="zone_stats", params=params, eps_list=eps_list,
            delta=args.delta, nu=args.nu, seed=args.seed,
            samples=args.samples, time=args.time, output_dir=out,
        )
        summaries = []
        for eps in eps_list:
            res = xp.run_zone_stats(cfg, epsilon=eps)
            export_passages_jsonl(out / f"passages_eps{eps!r}.jsonl", res.passages)
            summaries.append(res.summary_dict())
        xp.write_json(out / "zone_stats.json", {"rng": rng_header(args.seed), "runs": summaries})
        print(out / "zone_stats.json")
        return EXIT_OK

    if cmd == "anosov-cert":
        out = _outdir(args)
        cfg = xp.ExperimentConfig(
            experiment="anosov", params=params, eps_list=_eps_list(args),
            delta=args.delta, seed=args.seed, samples=args.samples,
            time=args.time, output_dir=out,
        )
        result = xp.run_anosov_pipeline(
            cfg, n_lyapunov=args.lyapunov, certificate_delta=args.delta
        )
        if result.flags.get("aborted"):
            failing = result.assumptions.failed_conditions or ["assumption battery"]
            print(f"aborted: parameters rejected ({', '.join(map(str, failing))})", file=sys.stderr)
            return EXIT_INVALID_PARAMS
        xp.write_json(out / "horizon.json", xp.horizon_dict(result.horizon))
        all_pass = True
        for rep in result.certificates:
            path = out / f"certificate_eps{rep.epsilon!r}.json"
            export_certificate_json(path, rep)
            flagged = rep.epsilon > xp.PROVEN_REGIME_MAX_EPS
            tag = " [outside proven regime]" if flagged else ""
            print(
                f"epsilon={rep.epsilon!r}: pass={rep.passed} min_u={rep.min_u!r} "
                f"threshold={rep.threshold!r} blowups={rep.blowup_count}{tag}"
            )
            print(f"  runtime: {rep.runtime:.1f}s", file=sys.stderr)
            if not rep.passed and not flagged:
                all_pass = False
        xp.plot_certificate_margins(result.certificates, out / "certificate_margins.svg")
        return EXIT_OK if all_pass else EXIT_CERTIFICATE_FAIL

    if cmd == "horizon":
        out = _outdir(args)
        table = build_table(params)
        rep = finite_horizon_search(table, args.time, HorizonGrid(seed=args.seed))
        payload = xp.horizon_dict(rep)
        xp.write_json(out / "horizon.json", payload)
        print(json.dumps(payload, sort_keys=True, indent=2))
        return EXIT_OK

    if cmd == "mesh-export":
        out = _outdir(args)
        surf = implicit_G(params)
        path = out / "surface.obj"
        export_obj(surf, path)
        print(path)
        return EXIT_OK

    raise RuntimeError(f"unhandled command {cmd}")


if __name__ == "__main__":
    sys.exit(main())
