import math

import numpy as np
import pytest

from anosovlab.errors import DegenerateNormal, EmptySample, OutsideDomain
from anosovlab.linkage import LinkageParams, chart_lift, SheetId, implicit_G
from anosovlab.rng import make_rng
from anosovlab.surface import (
    SurfacePoint,
    curvature_blowup_scan,
    darboux_along,
    flatten_tangent,
    normal_curvature,
    normal_epsilon,
    oriented_shape,
    plane_surface,
    project_to_surface,
    sample_surface_points,
    scaled_vertical_from_h,
    shape_operator,
    sphere_surface,
    surface_point,
    tangent_basis,
    tube_surface,
    vertical_component,
    zone_membership,
    export_obj,
)
from anosovlab.torus import TorusPoint


# ----------------------------------------------------------------------------
# normals
# ----------------------------------------------------------------------------


def test_normal_vertical_fixed_by_flattening():
    surf = sphere_surface(1.0, 0.37)
    q = surface_point(surf, [0.0, 0.0, 1.0])
    n = normal_epsilon(surf, q)
    np.testing.assert_allclose(n, [0.0, 0.0, 1.0], atol=1e-14)


def test_normal_horizontal_fixed_by_flattening():
    surf = sphere_surface(1.0, 0.37)
    q = surface_point(surf, [0.0, 1.0, 0.0])
    n = normal_epsilon(surf, q)
    np.testing.assert_allclose(n, [0.0, 1.0, 0.0], atol=1e-14)


def test_normal_rescaling_formula():
    # unscaled normal (0, 1/sqrt2, 1/sqrt2) at eps = 0.5 rescales to (0,1,2)/sqrt5
    surf = sphere_surface(1.0, 0.5)
    q = surface_point(surf, [0.0, 1.0 / math.sqrt(2), 1.0 / math.sqrt(2)])
    n = normal_epsilon(surf, q)
    np.testing.assert_allclose(n, np.array([0.0, 1.0, 2.0]) / math.sqrt(5), atol=1e-12)


@pytest.mark.parametrize("maker", [sphere_surface, tube_surface])
def test_normal_routes_agree_random(maker, rng):
    surf = maker(epsilon=0.2) if maker is tube_surface else maker(1.0, 0.2)
    for pt, _ in sample_surface_points(surf, 2000, rng):
        normal_epsilon(surf, pt)  # raises NormalConsistencyError on mismatch


def test_normal_routes_agree_linkage(linkage_surface_unit, rng):
    surf = linkage_surface_unit.with_epsilon(0.1)
    count = 0
    for pt, _ in sample_surface_points(surf, 2000, rng):
        chart = surf.chart_at(pt.x, pt.y, pt.z)
        normal_epsilon(surf, pt, chart)
        count += 1
    assert count == 2000


# ----------------------------------------------------------------------------
# vertical component and zones
# ----------------------------------------------------------------------------


def test_vertical_component_zero_at_wall():
    surf = tube_surface(0.3)
    q = surface_point(surf, [0.2, 1.0, 0.0])
    assert vertical_component(surf, q) == pytest.approx(0.0, abs=1e-14)


def test_vertical_component_independent_of_epsilon():
    for eps in (0.3, 0.05):
        surf = sphere_surface(1.0, eps)
        q = surface_point(surf, [0.1, 0.2, math.sqrt(1 - 0.01 - 0.04)])
        assert vertical_component(surf, q) == pytest.approx(q.z, abs=1e-12)


def test_vertical_component_graph_vs_implicit(params):
    # graph chart normal z-component 1/sqrt(1 + |grad h|^2) vs the implicit value
    surf = implicit_G(LinkageParams(params.l, params.r, 1.0))
    base = TorusPoint(math.pi, math.pi)
    cfg = chart_lift(params, base, SheetId(1, 1))
    q = surface_point(surf, [base.theta, base.phi, cfg.c])
    h = 1e-6
    cp = chart_lift(params, TorusPoint(base.theta + h, base.phi), SheetId(1, 1)).c
    cm = chart_lift(params, TorusPoint(base.theta - h, base.phi), SheetId(1, 1)).c
    dp = chart_lift(params, TorusPoint(base.theta, base.phi + h), SheetId(1, 1)).c
    dm = chart_lift(params, TorusPoint(base.theta, base.phi - h), SheetId(1, 1)).c
    grad = np.array([(cp - cm) / (2 * h), (dp - dm) / (2 * h)])
    expected = 1.0 / math.sqrt(1.0 + float(grad @ grad))
    assert abs(vertical_component(surf, q)) == pytest.approx(expected, abs=1e-6)


def test_zone_membership_examples():
    surf = tube_surface(0.3)
    wall = surface_point(surf, [0.0, 1.0, 0.0])
    flags = zone_membership(surf, wall, delta=0.01, nu=0.99)
    assert flags.in_band and flags.in_steep

    top = sphere_surface(1.0, 0.3)
    pole = surface_point(top, [0.0, 0.0, 1.0])
    flags = zone_membership(top, pole, delta=0.9, nu=0.9)
    assert not flags.in_band and not flags.in_steep


def test_zone_membership_h_formula():
    # h = 0.05 at eps = 0.01: scaled vertical component ~ 0.98
    nz = scaled_vertical_from_h(0.05, 0.01)
    assert nz == pytest.approx(5.0 / math.sqrt(0.9975 + 25.0), abs=1e-12)
    surf = sphere_surface(1.0, 0.01)
    q = surface_point(surf, [0.0, math.sqrt(1 - 0.05**2), 0.05])
    for nu, expect in ((0.01, True), (0.03, False)):
        flags = zone_membership(surf, q, delta=0.1, nu=nu)
        assert flags.in_band
        assert flags.in_steep == expect


# ----------------------------------------------------------------------------
# shape operator
# ----------------------------------------------------------------------------


def test_sphere_shape_values(rng):
    surf = sphere_surface(1.0, 1.0)
    for pt, _ in sample_surface_points(surf, 50, rng):
        data, op = shape_operator(surf, pt)
        assert data.k_plus == pytest.approx(1.0, abs=1e-9)
        assert data.k_minus == pytest.approx(1.0, abs=1e-9)
        assert data.gauss == pytest.approx(1.0, abs=1e-9)
        assert data.gauss == pytest.approx(data.k_plus * data.k_minus, abs=1e-9)
        # operator symmetry on the tangent plane
        t1, t2 = tangent_basis(data.normal)
        assert float(t1 @ op @ t2) == pytest.approx(float(t2 @ op @ t1), abs=1e-9)


def test_cylinder_shape_values(rng):
    surf = tube_surface(1.0)
    for pt, _ in sample_surface_points(surf, 50, rng):
        data, _ = shape_operator(surf, pt)
        ks = sorted([data.k_plus, data.k_minus])
        assert ks[0] == pytest.approx(0.0, abs=1e-9)
        assert ks[1] == pytest.approx(1.0, abs=1e-9)
        assert data.gauss == pytest.approx(0.0, abs=1e-9)


def test_flattened_tube_section_curvature_closed_form(rng):
    for _ in range(200):
        eps = rng.uniform(0.03, 0.8)
        t = rng.uniform(0.0, 2 * math.pi)
        surf = tube_surface(eps)
        q = surface_point(surf, [0.0, math.cos(t), math.sin(t)])
        sec = np.array([0.0, -math.sin(t) * 1.0, eps * math.cos(t)])
        sec /= np.linalg.norm(sec)
        got = normal_curvature(surf, q, sec)
        expect = eps / (eps**2 * math.cos(t) ** 2 + math.sin(t) ** 2) ** 1.5
        assert got == pytest.approx(expect, rel=1e-10)


def test_degenerate_normal_raises():
    surf = sphere_surface(1.0, 1.0)
    q = SurfacePoint(np.zeros(3), np.zeros(3))
    with pytest.raises(DegenerateNormal):
        normal_epsilon(surf, q)


# ----------------------------------------------------------------------------
# Darboux frame along curves
# ----------------------------------------------------------------------------


def _circle_samples(z0: float, n: int, ds: float):
    r = math.sqrt(1.0 - z0 * z0)
    ss = np.arange(n) * ds
    return np.stack([r * np.cos(ss / r), r * np.sin(ss / r), np.full(n, z0)], axis=1)


def test_darboux_great_circle():
    surf = sphere_surface(1.0, 1.0)
    out = darboux_along(surf, _circle_samples(0.0, 2000, 1e-3))
    assert np.max(np.abs(np.abs(out.gamma_n) - 1.0)) < 1e-5
    assert np.max(np.abs(out.gamma_g)) < 1e-5
    assert np.max(np.abs(out.tau_g[1:-1])) < 1e-4
    assert np.max(out.residual) < 1e-5


def test_darboux_latitude_circle():
    surf = sphere_surface(1.0, 1.0)
    z0 = 0.6
    out = darboux_along(surf, _circle_samples(z0, 2000, 1e-3))
    expect = z0 / math.sqrt(1.0 - z0 * z0)
    assert np.max(np.abs(np.abs(out.gamma_g) - expect)) < 1e-4
    # |gamma_N| = k * sqrt(1 - <N, T x n>^2) for the planar section
    k = 1.0 / math.sqrt(1.0 - z0 * z0)
    mask = ~out.zero_curvature
    lhs = np.abs(out.gamma_n[mask])
    n_cross = np.abs(z0)  # <N, T x n> = z0 for a latitude circle
    rhs = out.curvature[mask] * math.sqrt(1.0 - n_cross**2)
    assert np.max(np.abs(lhs - rhs)) < 1e-5
    assert np.max(np.abs(out.curvature[mask] - k)) < 1e-4


def test_darboux_geodesic_has_zero_geodesic_curvature():
    from anosovlab.geodesic import GeodesicState, states_at

    surf = tube_surface(0.5)
    q0 = np.array([0.0, math.cos(0.4), 0.5 * math.sin(0.4)])
    sec = np.array([0.0, -math.sin(0.4), 0.5 * math.cos(0.4)])
    sec /= np.linalg.norm(sec)
    p0 = 0.5 * np.array([1.0, 0.0, 0.0]) + math.sqrt(1 - 0.25) * sec
    s0 = GeodesicState(q=q0, p=p0 / np.linalg.norm(p0))
    times = np.arange(0.0, 1.0, 1e-3)
    states = states_at(surf, s0, times)
    samples = np.array([s.q for s in states])
    out = darboux_along(surf, samples)
    assert np.max(np.abs(out.gamma_g)) < 1e-4


# ----------------------------------------------------------------------------
# Lemma-style invariants
# ----------------------------------------------------------------------------


def test_sign_persistence_under_flattening(linkage_surface_unit, rng):
    surf1 = linkage_surface_unit
    tested = 0
    while tested < 120:
        (pt, _), = sample_surface_points(surf1, 1, rng)
        chart = surf1.chart_at(pt.x, pt.y, pt.z)
        n = normal_epsilon(surf1, pt, chart)
        t1, t2 = tangent_basis(n)
        a = rng.uniform(0, 2 * math.pi)
        pvec = math.cos(a) * t1 + math.sin(a) * t2
        g1 = normal_curvature(surf1, pt, pvec, chart)
        if abs(g1) < 1e-3:
            continue
        tested += 1
        ref = math.copysign(1.0, g1)
        for eps in (0.5, 0.1, 0.02):
            s = surf1.with_epsilon(eps)
            spt = SurfacePoint(pt.position, np.array([pt.x, pt.y, eps * pt.z]))
            ge = normal_curvature(s, spt, flatten_tangent(pvec, eps), chart)
            assert math.copysign(1.0, ge) == ref


def _band_points(surf, delta, n, rng):
    """Near-wall band points, sampled by walking inward from the walls."""
    from anosovlab.billiard import sample_wall_points

    pts = []
    table = surf.table
    attempts = 0
    while len(pts) < n and attempts < 40:
        attempts += 1
        for wi in range(len(table.walls)):
            for w in sample_wall_points(table, wi, max(2, n // 9), rng):
                d = rng.uniform(0.0, 0.02)
                nrm = table.inward_normal(wi, w.theta, w.phi)
                th, ph = w.theta + d * nrm[0], w.phi + d * nrm[1]
                sheet = SheetId(
                    1 if rng.random() < 0.5 else -1, 1 if rng.random() < 0.5 else -1
                )
                try:
                    z = surf.lift(th, ph, sheet)
                except OutsideDomain:
                    continue
                pt = SurfacePoint(
                    np.array([th, ph, z]), np.array([th, ph, surf.epsilon * z])
                )
                chart = surf.chart_at(th, ph, z)
                if abs(vertical_component(surf, pt, chart)) <= delta:
                    pts.append((pt, chart))
                if len(pts) >= n:
                    return pts
    return pts


def test_submersion_bound_in_band(linkage_surface_unit, rng):
    surf = linkage_surface_unit
    pts = _band_points(surf, 0.1, 300, rng)
    assert len(pts) >= 200
    h = 1e-5
    worst = math.inf
    for pt, chart in pts:
        n1 = np.array(chart.eval10(pt.x, pt.y, pt.z)[1:4])
        n1 /= np.linalg.norm(n1)
        t1, t2 = tangent_basis(n1)
        comps = []
        for t in (t1, t2):
            qp = project_to_surface(surf, pt.position + h * t, chart)
            qm = project_to_surface(surf, pt.position - h * t, chart)
            hp = vertical_component(surf, SurfacePoint(qp, qp), chart)
            hm = vertical_component(surf, SurfacePoint(qm, qm), chart)
            comps.append((hp - hm) / (2 * h))
        worst = min(worst, math.hypot(*comps))
    assert worst >= 0.5


@pytest.mark.parametrize("eps", [0.05, 0.02])
def test_gauss_negative_in_band(linkage_surface_unit, rng, eps):
    surf = linkage_surface_unit.with_epsilon(eps)
    pts = _band_points(surf, 0.1, 10_000, rng)
    assert len(pts) >= 5000
    worst = -math.inf
    for pt, chart in pts:
        worst = max(worst, oriented_shape(surf, pt, chart).gauss)
    assert worst < 0.0


def test_blowup_scan_tube_bound_and_rate(rng):
    surf = tube_surface(1.0)
    q0 = surface_point(surf, [0.0, 1.0, 0.0])
    nu, alpha = 0.5, 0.1
    rows = curvature_blowup_scan(
        surf, q0, alpha=alpha, nu=nu, radius=0.35, eps_list=(0.2, 0.1, 0.05), rng=rng
    )
    for r in rows:
        bound = (nu * (2 - nu)) ** 1.5 / r.epsilon**2
        assert r.inf_gamma_n >= (1.0 - alpha**2) * bound * 0.999
    for a, b in zip(rows, rows[1:]):
        assert 3.5 <= b.inf_gamma_n / a.inf_gamma_n <= 4.5


def test_blowup_scan_linkage(linkage_surface_unit, params, rng):
    th = math.acos(0.8)
    cfg = chart_lift(params, TorusPoint(th, th), SheetId(1, 1))
    q0 = surface_point(linkage_surface_unit, [th, th, cfg.c])
    rows = curvature_blowup_scan(
        linkage_surface_unit, q0, alpha=0.5, nu=0.5, radius=0.3,
        eps_list=(0.2, 0.1, 0.05), n_base=150, rng=rng,
    )
    for a, b in zip(rows, rows[1:]):
        assert 3.5 <= b.inf_gamma_n / a.inf_gamma_n <= 4.5
    assert all(r.sup_k_minus < -0.5 for r in rows)
    spread = max(r.sup_k_minus for r in rows) - min(r.sup_k_minus for r in rows)
    assert spread < 0.5  # transverse curvature stays pinned while gamma_N blows up


def test_blowup_scan_empty_sample():
    surf = plane_surface(0.5)
    q0 = surface_point(surf, [0.0, 0.0, 0.0])
    with pytest.raises((EmptySample, ValueError)):
        curvature_blowup_scan(surf, q0, 0.5, 0.5, 0.1, (0.1,))


def test_projection_converges(rng):
    surf = sphere_surface(1.0, 0.4)
    for _ in range(50):
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        start = 1.4 * v * np.array([1.0, 1.0, 0.4])
        q = project_to_surface(surf, start)
        assert abs(surf.chart.eval10(q[0], q[1], q[2] / 0.4)[0]) <= 1e-12


def test_obj_export(tmp_path):
    surf = sphere_surface(1.0, 0.5)
    path = tmp_path / "sphere.obj"
    export_obj(surf, path, n_base=24, n_z=16)
    text = path.read_text().splitlines()
    n_v = sum(1 for line in text if line.startswith("v "))
    n_f = sum(1 for line in text if line.startswith("f "))
    assert n_v > 100 and n_f > 100
