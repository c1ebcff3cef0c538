"""Acceptance suite: one test per criterion, with pinned tolerances and the
stated runtime budgets.  Each test prints a PASS line with the measured
numbers (run with -s or -v to see them)."""

import math
import time

import numpy as np
import pytest

from anosovlab.billiard import HorizonGrid, finite_horizon_search, sample_wall_points, wall_curvature
from anosovlab.experiments import ExperimentConfig, run_convergence, run_zone_stats, write_convergence_csv, write_json
from anosovlab.geodesic import GeodesicState, export_passages_jsonl, integrate_plain
from anosovlab.hyperbolicity import (
    anosov_certificate,
    estimate_kappa,
    export_certificate_json,
    lyapunov_exponent,
    random_phase_point,
    riccati_constant,
)
from anosovlab.linkage import (
    LinkageParams,
    build_table,
    implicit_G,
    validate_params,
    wall_sign_discriminant,
    wall_sign_polynomial,
)
from anosovlab.rng import make_rng
from anosovlab.surface import normal_curvature, surface_point, tube_surface
from conftest import random_tangent_state

PARAMS = LinkageParams(2.8, 0.4)


def _report(criterion: str, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: PASS ({detail})")


def test_criterion_1_parameter_gate():
    t0 = time.perf_counter()
    n_rounds = 200
    for _ in range(n_rounds):
        rep = validate_params(PARAMS)
    elapsed = (time.perf_counter() - t0) / n_rounds
    margins = [rep.conditions[k].margin for k in ("l+r>3", "l<3", "(l-2)^2+r^2<1", "r<1/2")]
    assert margins == pytest.approx([0.2, 0.2, 0.2, 0.1], abs=1e-12)
    bad1 = validate_params(LinkageParams(2.8, 0.6))
    assert not bad1.valid and bad1.failed == ["r<1/2"]
    bad2 = validate_params(LinkageParams(2.95, 0.4))
    assert not bad2.valid and "(l-2)^2+r^2<1" in bad2.failed
    assert elapsed < 1e-3
    _report("1 parameter gate", f"margins {margins}, {elapsed * 1e6:.0f} us per call")


def test_criterion_2_wall_negativity():
    t0 = time.perf_counter()
    table = build_table(PARAMS)
    rng = make_rng(2)
    n_total = 0
    worst = -math.inf
    for wi in range(3):
        pts = sample_wall_points(table, wi, 3334, rng)
        cos_th = np.array([math.cos(p.theta) for p in pts])
        polys = wall_sign_polynomial(PARAMS, wi, cos_th)
        for p, poly in zip(pts, polys):
            k = wall_curvature(table, wi, p)
            worst = max(worst, k)
            assert k < 0.0
            assert math.copysign(1.0, k) == math.copysign(1.0, float(poly))
            n_total += 1
    assert n_total >= 10_000
    assert wall_sign_discriminant(PARAMS, 0) == pytest.approx(-3.6864, abs=1e-9)
    assert wall_sign_discriminant(PARAMS, 1) == pytest.approx(-2.1504, abs=1e-9)
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    _report("2 wall negativity", f"{n_total} points, max curvature {worst:.4f}, {elapsed:.2f} s")


def test_criterion_3_ellipse_oracle():
    rng = make_rng(3)
    worst = 0.0
    for _ in range(1000):
        eps = float(rng.uniform(0.02, 0.8))
        t = float(rng.uniform(0.0, 2 * math.pi))
        surf = tube_surface(eps)
        q = surface_point(surf, [0.0, math.cos(t), math.sin(t)])
        sec = np.array([0.0, -math.sin(t), eps * math.cos(t)])
        sec /= np.linalg.norm(sec)
        got = normal_curvature(surf, q, sec)
        expect = eps / (eps**2 * math.cos(t) ** 2 + math.sin(t) ** 2) ** 1.5
        worst = max(worst, abs(got - expect))
        assert abs(got - expect) <= 1e-8 * max(1.0, expect)

    # steep-zone infimum of the section curvature against the closed bound
    for eps, nu in ((0.05, 0.5), (0.08, 0.3), (0.1, 0.6)):
        surf = tube_surface(eps)
        bound = (nu * (2.0 - nu)) ** 1.5 / eps**2
        tau = eps * (1.0 - nu) / math.sqrt(nu * (2.0 - nu))
        t_edge = math.atan(tau)
        inf_k = math.inf
        for t in np.linspace(-t_edge, t_edge, 2001):
            q = surface_point(surf, [0.0, math.cos(t), math.sin(t)])
            nz = abs(eps * math.sin(t) / math.sqrt(
                eps**2 * math.sin(t) ** 2 + (math.cos(t)) ** 2 * 1.0
            ))
            sec = np.array([0.0, -math.sin(t), eps * math.cos(t)])
            sec /= np.linalg.norm(sec)
            inf_k = min(inf_k, normal_curvature(surf, q, sec))
        assert inf_k >= bound * (1.0 - 1e-9)
        assert inf_k <= bound * 1.01
    _report("3 ellipse oracle", f"1000 closed-form pairs (max err {worst:.2e}), infimum within 1%")


def test_criterion_4_integrator_fidelity():
    t0 = time.perf_counter()
    surf = implicit_G(LinkageParams(PARAMS.l, PARAMS.r, 0.05))
    rng = make_rng(4)
    worst_g = worst_speed = worst_rev5 = 0.0
    rev20 = []
    for i in range(100):
        s0 = random_tangent_state(surf, rng)
        mid, g1, sp1 = integrate_plain(surf, s0, 5.0)
        end, g2, sp2 = integrate_plain(surf, mid, 15.0)
        back, g3, sp3 = integrate_plain(surf, GeodesicState(q=mid.q, p=-mid.p), 5.0)
        worst_g = max(worst_g, g1, g2, g3)
        worst_speed = max(worst_speed, sp1, sp2, sp3)
        worst_rev5 = max(
            worst_rev5,
            float(np.linalg.norm(back.q - s0.q) + np.linalg.norm(back.p + s0.p)),
        )
        if i < 5:  # reported, not asserted: chaotic amplification over t=20
            b20, _, _ = integrate_plain(surf, GeodesicState(q=end.q, p=-end.p), 20.0)
            rev20.append(float(np.linalg.norm(b20.q - s0.q) + np.linalg.norm(b20.p + s0.p)))
    elapsed = time.perf_counter() - t0
    assert worst_g <= 1e-8
    assert worst_speed <= 1e-8
    assert worst_rev5 <= 1e-6
    assert elapsed < 60.0
    _report(
        "4 integrator fidelity",
        f"drift |G|<= {worst_g:.1e}, speed drift <= {worst_speed:.1e}, "
        f"reversal(T=5) <= {worst_rev5:.1e}, reversal(t=20) sample {max(rev20):.1e}, "
        f"{elapsed:.0f} s",
    )


def test_criterion_5_convergence(tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        experiment="converge", params=PARAMS, eps_list=(0.2, 0.1, 0.05, 0.025),
        seed=5, samples=20, time=2.5,
    )
    rows = run_convergence(cfg)
    write_convergence_csv(rows, tmp_path / "convergence.csv", cfg.seed)
    sups = [r.sup_dist for r in rows]
    for a, b in zip(sups, sups[1:]):
        assert b <= a * 1.05
    assert sups[-1] < 0.05
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0
    _report("5 convergence", f"sup_dist {['%.4f' % s for s in sups]}, {elapsed:.0f} s")


def test_criterion_6_zone_passage_bounds():
    t0 = time.perf_counter()
    maxima = {}
    for eps in (0.04, 0.02, 0.01):
        cfg = ExperimentConfig(
            experiment="zone_stats", params=PARAMS, eps_list=(eps,),
            delta=0.05, nu=0.5, seed=77, samples=10, time=4.0,
        )
        res = run_zone_stats(cfg, epsilon=eps)
        assert res.n_nongrazing >= 3
        assert res.frac_within_sqrt_delta == 1.0
        assert res.max_int_k_nongrazing < 0.0
        assert not [v for v in res.violations if v["kind"] in ("duration", "int_k_sign")]
        maxima[eps] = abs(res.max_int_k_nongrazing)
        if eps == 0.02:
            main = res
    ratio = max(maxima.values()) / min(maxima.values())
    assert ratio <= 2.0
    elapsed = time.perf_counter() - t0
    _report(
        "6 zone passage bounds",
        f"eps=0.02: {main.n_nongrazing} nongrazing, all within sqrt(delta) "
        f"(max dur {main.max_duration_nongrazing:.4f} vs {math.sqrt(0.05):.4f}), "
        f"intK ceiling stable x{ratio:.2f}, {elapsed:.0f} s",
    )


def test_criterion_7_riccati_oracles():
    _, us, blow = riccati_constant(-1.0, 1.0)
    assert blow is None
    assert us[-1] == pytest.approx(0.7615941559557649, abs=1e-6)
    _, _, blow = riccati_constant(1.0, 2.0)
    assert blow == pytest.approx(math.pi / 2, abs=1e-4)
    _report("7 riccati oracles", f"u(1)={us[-1]:.9f}, blowup at {blow:.6f}")


def test_criterion_8_anosov_certificate(tmp_path):
    t0 = time.perf_counter()
    eps = 0.02
    delta = 0.9
    surf = implicit_G(LinkageParams(PARAMS.l, PARAMS.r, eps))
    horizon = finite_horizon_search(build_table(PARAMS), 50.0, HorizonGrid(seed=8))
    assert horizon.witness is None
    rng = make_rng(8)
    kappa = estimate_kappa(surf, delta, eps, samples=2500, rng=rng)
    report = anosov_certificate(
        surf, delta, eps, 200, T=1.0, horizon_time=horizon.max_free_flight,
        kappa=kappa, rng=rng,
    )
    export_certificate_json(tmp_path / "certificate.json", report)
    assert report.blowup_count == 0
    assert report.min_u >= report.threshold
    assert report.passed

    exponents = []
    for _ in range(20):
        s0 = random_phase_point(surf, rng)
        exponents.append(lyapunov_exponent(surf, s0, 20.0))
    assert all(x > 0 for x in exponents)
    assert max(exponents) <= 2.0 * min(exponents)
    elapsed = time.perf_counter() - t0
    assert elapsed < 600.0
    _report(
        "8 anosov certificate",
        f"min_u={report.min_u:.2f} >= threshold {report.threshold:.3f} "
        f"(kappa={report.kappa:.3f}, homothety={report.homothety:.4f}), 0 blowups, "
        f"exponents in [{min(exponents):.2f}, {max(exponents):.2f}], {elapsed:.0f} s",
    )


def test_criterion_9_finite_horizon():
    t0 = time.perf_counter()
    table = build_table(PARAMS)
    rep = finite_horizon_search(table, 50.0, HorizonGrid(seed=9))
    assert rep.witness is None
    assert rep.max_free_flight < 50.0
    for fam in ("diag+", "diag-"):
        assert rep.slope_family_max[fam] < 50.0
    # the sufficient slope-obstruction condition holds with margin
    assert (PARAMS.l - 2.0) ** 2 + PARAMS.r**2 == pytest.approx(0.8, abs=1e-12)
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0
    _report(
        "9 finite horizon",
        f"max free chord {rep.max_free_flight:.3f}, slope +-1 max "
        f"{rep.slope_family_max['diag+']:.3f}/{rep.slope_family_max['diag-']:.3f}, "
        f"{rep.n_lines} lines, {elapsed:.0f} s",
    )


def test_criterion_10_determinism(tmp_path):
    def emit(sub):
        out = tmp_path / sub
        out.mkdir()
        cfg = ExperimentConfig(
            experiment="converge", params=PARAMS, eps_list=(0.2, 0.1),
            seed=2026, samples=4, time=2.0,
        )
        rows = run_convergence(cfg)
        write_convergence_csv(rows, out / "conv.csv", cfg.seed)
        zcfg = ExperimentConfig(
            experiment="zone_stats", params=PARAMS, eps_list=(0.05,),
            delta=0.05, nu=0.5, seed=2026, samples=3, time=2.0,
        )
        res = run_zone_stats(zcfg)
        write_json(out / "zone.json", res.summary_dict())
        export_passages_jsonl(out / "passages.jsonl", res.passages)
        surf = implicit_G(LinkageParams(PARAMS.l, PARAMS.r, 0.1))
        cert = anosov_certificate(
            surf, 0.9, 0.1, 3, T=1.0, horizon_time=10.8, rng=make_rng(2026)
        )
        export_certificate_json(out / "cert.json", cert)
        return out

    a = emit("runA")
    b = emit("runB")
    names = ["conv.csv", "zone.json", "passages.jsonl", "cert.json"]
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    _report("10 determinism", f"byte-identical outputs: {', '.join(names)}")
