import math

import numpy as np
import pytest

from anosovlab.billiard import BilliardState
from anosovlab.errors import NoSuchBranch
from anosovlab.geodesic import (
    GeodesicState,
    geodesic_step,
    integrate_plain,
    integrate_with_events,
    project_state,
    pushforward_initial,
    state_invariants,
    states_at,
    export_trajectory_csv,
    export_passages_jsonl,
)
from anosovlab.linkage import LinkageParams, SheetId, implicit_G
from anosovlab.surface import plane_surface, sphere_surface, tube_surface
from anosovlab.torus import TorusPoint
from conftest import random_tangent_state


def test_flat_region_straight_line():
    surf = plane_surface(1.0)
    s0 = GeodesicState(q=[0.2, 0.3, 0.0], p=[0.6, 0.8, 0.0])
    out, max_g, max_sp = integrate_plain(surf, s0, 1.0)
    np.testing.assert_allclose(out.q, [0.8, 1.1, 0.0], atol=1e-10)
    np.testing.assert_allclose(out.p, s0.p, atol=1e-10)
    assert max_g <= 1e-10 and max_sp <= 1e-10


def test_sphere_great_circle_period():
    surf = sphere_surface(1.0, 1.0)
    s0 = GeodesicState(q=[1.0, 0.0, 0.0], p=[0.0, 1.0, 0.0])
    out, _, _ = integrate_plain(surf, s0, 2 * math.pi)
    assert np.linalg.norm(out.q - s0.q) < 1e-6
    assert np.linalg.norm(out.p - s0.p) < 1e-6


def test_tube_axial_momentum_conserved():
    surf = tube_surface(0.5)
    q0 = np.array([0.0, math.cos(0.3), 0.5 * math.sin(0.3)])
    sec = np.array([0.0, -math.sin(0.3), 0.5 * math.cos(0.3)])
    sec /= np.linalg.norm(sec)
    p0 = 0.6 * np.array([1.0, 0.0, 0.0]) + 0.8 * sec
    s0 = GeodesicState(q=q0, p=p0 / np.linalg.norm(p0))
    out, _, _ = integrate_plain(surf, s0, 10.0)
    assert abs(out.p[0] - s0.p[0]) <= 1e-8


def test_single_step_respects_invariants(linkage_surface_unit, rng):
    surf = linkage_surface_unit.with_epsilon(0.05)
    s0 = random_tangent_state(surf, rng)
    s1 = geodesic_step(surf, s0, 0.01)
    assert 0 < s1.t <= 0.01 + 1e-12
    g, sp, pn = state_invariants(surf, s1)
    assert g <= 1e-8 and sp <= 1e-8 and pn <= 1e-8


def test_constraint_drift_and_reversal(linkage_surface_unit, rng):
    surf = linkage_surface_unit.with_epsilon(0.05)
    for _ in range(3):
        s0 = random_tangent_state(surf, rng)
        fwd, max_g, max_sp = integrate_plain(surf, s0, 5.0)
        assert max_g <= 1e-8 and max_sp <= 1e-8
        back, _, _ = integrate_plain(surf, GeodesicState(q=fwd.q, p=-fwd.p), 5.0)
        assert np.linalg.norm(back.q - s0.q) <= 1e-6
        assert np.linalg.norm(back.p + s0.p) <= 1e-6


def test_states_at_hits_exact_times(linkage_surface_unit, rng):
    surf = linkage_surface_unit.with_epsilon(0.1)
    s0 = random_tangent_state(surf, rng)
    times = [0.0, 0.37, 1.0, 1.41]
    states = states_at(surf, s0, times)
    assert [s.t for s in states] == pytest.approx(times, abs=1e-12)
    # piecewise runs agree with a single run
    direct, _, _ = integrate_plain(surf, s0, 1.41)
    assert np.linalg.norm(states[-1].q - direct.q) < 1e-9


def test_pushforward_roundtrip(params, linkage_surface_unit):
    surf = linkage_surface_unit.with_epsilon(0.05)
    b = BilliardState(TorusPoint(math.pi - 0.4, math.pi + 0.2),
                      np.array([math.cos(0.9), math.sin(0.9)]))
    s0 = pushforward_initial(surf, b, SheetId(1, 1))
    g, sp, pn = state_invariants(surf, s0)
    assert g <= 1e-10 and sp <= 1e-12 and pn <= 1e-10
    back = project_state(s0)
    assert abs(back.q.theta - b.q.theta) < 1e-10
    assert abs(back.q.phi - b.q.phi) < 1e-10
    assert np.linalg.norm(back.p - b.p) < 1e-10


def test_pushforward_lifted_height(params, linkage_surface_unit):
    surf = linkage_surface_unit.with_epsilon(0.05)
    b = BilliardState(TorusPoint(math.pi, math.pi), np.array([1.0, 0.0]))
    s0 = pushforward_initial(surf, b, SheetId(1, 1))
    assert s0.q[2] / surf.epsilon == pytest.approx(math.sqrt(6.84) + 0.4, abs=1e-10)


def test_pushforward_level_sheet_keeps_horizontal():
    # at the top of the sphere the sheet is level: the lift stays horizontal
    surf = sphere_surface(1.0, 0.5)
    b = BilliardState(TorusPoint(0.0, 0.0), np.array([1.0, 0.0]))
    s0 = pushforward_initial(surf, b, 1.0)
    np.testing.assert_allclose(s0.p, [1.0, 0.0, 0.0], atol=1e-12)


def test_pushforward_missing_branch(params, linkage_surface_unit):
    surf = linkage_surface_unit.with_epsilon(0.05)
    outside = BilliardState(TorusPoint(0.05, 0.05), np.array([1.0, 0.0]))
    with pytest.raises(NoSuchBranch):
        pushforward_initial(surf, outside, SheetId(1, 1))


def test_no_band_entry_no_passages(linkage_surface_unit):
    surf = linkage_surface_unit.with_epsilon(0.05)
    b = BilliardState(TorusPoint(math.pi, math.pi), np.array([1.0, 0.0]))
    s0 = pushforward_initial(surf, b, SheetId(1, 1))
    samples, passages = integrate_with_events(surf, s0, 0.4, 0.05, 0.5, record_stride=5e-3)
    assert passages == []
    assert all(not s.in_band for s in samples)


def test_zone_passages_reference_bounds(linkage_surface_unit, rng):
    # nongrazing passages at eps=0.02, delta=0.05: short, nearly straight in
    # the wall-tangent component, with a strictly negative curvature integral
    surf = linkage_surface_unit.with_epsilon(0.02)
    delta, nu = 0.05, 0.5
    collected = []
    tries = 0
    while len(collected) < 4 and tries < 30:
        tries += 1
        s0 = random_tangent_state(surf, rng)
        _, passages = integrate_with_events(surf, s0, 3.0, delta, nu, record_stride=None)
        collected.extend(p for p in passages if abs(p.px_in) < 0.5)
    assert collected, "no nongrazing passages found"
    for z in collected:
        assert z.t_out - z.t_in <= math.sqrt(delta)
        assert abs(z.delta_px) <= 0.05
        assert z.integral_k <= -0.01
        assert z.entered_steep


def test_passage_momentum_reversal(linkage_surface_unit, rng):
    # wall-frame p_y flips sign through a nongrazing bounce: delta_py ~ -2 py_in
    surf = linkage_surface_unit.with_epsilon(0.02)
    found = 0
    for _ in range(20):
        s0 = random_tangent_state(surf, rng)
        _, passages = integrate_with_events(surf, s0, 3.0, 0.05, 0.5, record_stride=None)
        for z in passages:
            if abs(z.px_in) < 0.5:
                found += 1
                assert z.delta_py == pytest.approx(-2.0 * z.py_in, abs=0.08)
        if found >= 4:
            return
    assert found > 0


def test_event_times_consistent(linkage_surface_unit, rng):
    surf = linkage_surface_unit.with_epsilon(0.05)
    s0 = random_tangent_state(surf, rng)
    _, passages = integrate_with_events(surf, s0, 4.0, 0.1, 0.5, record_stride=None)
    for z in passages:
        assert z.t_out > z.t_in
        assert z.duration == pytest.approx(z.t_out - z.t_in)


def test_trajectory_exports(tmp_path, linkage_surface_unit, rng):
    import json

    surf = linkage_surface_unit.with_epsilon(0.05)
    s0 = random_tangent_state(surf, rng)
    samples, passages = integrate_with_events(surf, s0, 2.0, 0.1, 0.5, record_stride=1e-2)
    csv_path = tmp_path / "traj.csv"
    export_trajectory_csv(csv_path, samples, seed=3)
    lines = csv_path.read_text().splitlines()
    assert lines[1] == "t,X,Y,Z,px,py,pz,H,K,in_band,in_steep"
    assert len(lines) > 100
    jsonl = tmp_path / "passages.jsonl"
    export_passages_jsonl(jsonl, passages)
    for line in jsonl.read_text().splitlines():
        rec = json.loads(line)
        assert set(rec) >= {"t_in", "t_out", "delta_px", "delta_py", "integral_k",
                            "entered_steep", "component_id"}


def test_near_straightness_shrinks_with_epsilon(linkage_surface_unit):
    # unit-time windows with small accumulated |K| stay nearly straight in
    # momentum, with a bound that shrinks as the flattening decreases
    from anosovlab.hyperbolicity import random_phase_point
    from anosovlab.rng import make_rng

    sups = []
    for eps in (0.1, 0.05, 0.025):
        surf = linkage_surface_unit.with_epsilon(eps)
        rng = make_rng(31)
        worst = 0.0
        windows = 0
        for _ in range(25):
            s0 = random_phase_point(surf, rng)
            samples, _ = integrate_with_events(surf, s0, 2.0, 0.1, 0.5, record_stride=5e-3)
            ts = np.array([s.t for s in samples])
            iks = np.array([s.int_abs_k for s in samples])
            ps = np.array([[s.px, s.py, s.pz] for s in samples])
            for start in (0.0, 0.5, 1.0):
                sel = np.nonzero((ts >= start) & (ts <= start + 1.0))[0]
                if len(sel) < 10 or iks[sel[-1]] - iks[sel[0]] > 0.5:
                    continue
                windows += 1
                mid = np.nonzero((ts >= start + 1 / 3) & (ts <= start + 2 / 3))[0]
                if len(mid) < 3:
                    continue
                worst = max(worst, float(np.max(np.linalg.norm(ps[mid] - ps[mid[0]], axis=1))))
        assert windows > 10
        sups.append(worst)
    assert sups[0] > sups[1] > sups[2]
    assert sups[2] < 0.05


def test_geodesic_tracks_billiard_between_walls(params, linkage_surface_unit):
    # short interior segment: projection of the geodesic follows the chord
    surf = linkage_surface_unit.with_epsilon(0.05)
    b = BilliardState(TorusPoint(math.pi - 0.2, math.pi + 0.1),
                      np.array([math.cos(0.4), math.sin(0.4)]))
    s0 = pushforward_initial(surf, b, SheetId(1, -1))
    out, _, _ = integrate_plain(surf, s0, 0.5)
    proj = project_state(out)
    expected = b.q.as_array() + 0.5 * b.p
    assert abs(proj.q.theta - expected[0]) < 5e-3
    assert abs(proj.q.phi - expected[1]) < 5e-3
