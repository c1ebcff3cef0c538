"""Unit-speed geodesic integration on flattened implicit surfaces.

The stepper is an embedded Dormand-Prince 5(4) pair on the ambient state
(q, p) followed by Newton projection of q onto the zero set and tangent
projection plus renormalization of p.  Auxiliary scalar channels driven by
the Gaussian curvature at the moving point (compactified Riccati variable,
Jacobi pair, running curvature integral) ride along inside the same adaptive
steps, so every quadrature in the package shares the integrator's error
control.

The hot loop is deliberately scalar Python on tuples: surfaces are evaluated
through a single chart call per stage and trajectories at desk scale run at
tens of thousands of steps per second.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import NoSuchBranch, OutsideDomain, StepUnderflow
from .rng import rng_header
from .surface import Chart, FlattenedSurface, scaled_vertical_from_h
from .torus import TorusPoint, wrap_angle

TOL_DEFAULT = 1e-10
DT_FLOOR = 1e-14
BASE_CAP = 0.05
SAMPLE_STRIDE = 1e-3
EVENT_TIME_TOL = 1e-10

# Dormand-Prince 5(4) tableau.
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)

AUX_SLOTS = {"riccati": 1, "jacobi": 2, "intk": 1, "intabsk": 1}


def aux_layout(modes: Sequence[str]) -> dict:
    offset = 6
    layout = {}
    for m in modes:
        layout[m] = offset
        offset += AUX_SLOTS[m]
    layout["total"] = offset
    return layout


def default_aux_init(modes: Sequence[str]) -> tuple:
    vals: list[float] = []
    for m in modes:
        if m == "riccati":
            vals.append(0.0)  # arctan of u(0) = 0
        elif m == "jacobi":
            vals.extend([1.0, 0.0])
        elif m in ("intk", "intabsk"):
            vals.append(0.0)
    return tuple(vals)


def _make_deriv(chart: Chart, eps: float, modes: Sequence[str]):
    """Derivative of the full state tuple; also returns |k+|+|k-| and K.

    The principal-curvature sum drives the step cap, so the tangent 2x2 of
    the shape operator is computed on every call; the normal-normal hessian
    block (huge for flattened surfaces) must not throttle bulk steps.
    """
    f = chart.eval10
    ie = 1.0 / eps
    mode_r = "riccati" in modes
    mode_j = "jacobi" in modes
    mode_i = "intk" in modes
    mode_a = "intabsk" in modes
    sqrt = math.sqrt
    cos = math.cos
    sin = math.sin

    def deriv(s):
        x = s[0]
        y = s[1]
        z = s[2]
        px = s[3]
        py = s[4]
        pz = s[5]
        (_, gx, gy, gz, hxx, hxy, hxz, hyy, hyz, hzz) = f(x, y, z * ie)
        gz *= ie
        hxz *= ie
        hyz *= ie
        hzz *= ie * ie
        hp1 = hxx * px + hxy * py + hxz * pz
        hp2 = hxy * px + hyy * py + hyz * pz
        hp3 = hxz * px + hyz * py + hzz * pz
        php = px * hp1 + py * hp2 + pz * hp3
        g2 = gx * gx + gy * gy + gz * gz
        coef = php / g2
        gn = sqrt(g2)
        nx, ny, nz = gx / gn, gy / gn, gz / gn
        anx, any_, anz = abs(nx), abs(ny), abs(nz)
        if anx <= any_ and anx <= anz:
            t1x, t1y, t1z = 1.0 - nx * nx, -nx * ny, -nx * nz
        elif any_ <= anz:
            t1x, t1y, t1z = -ny * nx, 1.0 - ny * ny, -ny * nz
        else:
            t1x, t1y, t1z = -nz * nx, -nz * ny, 1.0 - nz * nz
        tn = sqrt(t1x * t1x + t1y * t1y + t1z * t1z)
        t1x /= tn
        t1y /= tn
        t1z /= tn
        t2x = ny * t1z - nz * t1y
        t2y = nz * t1x - nx * t1z
        t2z = nx * t1y - ny * t1x
        H1x = hxx * t1x + hxy * t1y + hxz * t1z
        H1y = hxy * t1x + hyy * t1y + hyz * t1z
        H1z = hxz * t1x + hyz * t1y + hzz * t1z
        H2x = hxx * t2x + hxy * t2y + hxz * t2z
        H2y = hxy * t2x + hyy * t2y + hyz * t2z
        H2z = hxz * t2x + hyz * t2y + hzz * t2z
        s11 = (t1x * H1x + t1y * H1y + t1z * H1z) / gn
        s12 = (t2x * H1x + t2y * H1y + t2z * H1z) / gn
        s22 = (t2x * H2x + t2y * H2y + t2z * H2z) / gn
        mean = 0.5 * (s11 + s22)
        half = 0.5 * (s11 - s22)
        disc = sqrt(half * half + s12 * s12)
        bound = 2.0 * max(abs(mean), disc)  # |k+| + |k-|
        # product form: mean^2 - disc^2 loses all digits when one principal
        # curvature dwarfs the other (wall folds)
        K = s11 * s22 - s12 * s12
        if not (mode_r or mode_j or mode_i or mode_a):
            return (px, py, pz, -coef * gx, -coef * gy, -coef * gz), bound, K
        aux: list[float] = []
        i = 6
        if mode_r:
            v = s[i]
            i += 1
            cv = cos(v)
            sv = sin(v)
            aux.append(-K * cv * cv - sv * sv)
        if mode_j:
            J = s[i]
            Jp = s[i + 1]
            i += 2
            aux.append(Jp)
            aux.append(-K * J)
        if mode_i:
            aux.append(K)
        if mode_a:
            aux.append(abs(K))
        return (px, py, pz, -coef * gx, -coef * gy, -coef * gz) + tuple(aux), bound, K

    return deriv


def _make_core_deriv(chart: Chart, eps: float):
    """(q', p') only; used for the inner Runge-Kutta stages of plain runs."""
    f = chart.eval10
    ie = 1.0 / eps

    def core(x, y, z, px, py, pz):
        (_, gx, gy, gz, hxx, hxy, hxz, hyy, hyz, hzz) = f(x, y, z * ie)
        gz *= ie
        hxz *= ie
        hyz *= ie
        hzz *= ie * ie
        php = (
            px * (hxx * px + hxy * py + hxz * pz)
            + py * (hxy * px + hyy * py + hyz * pz)
            + pz * (hxz * px + hyz * py + hzz * pz)
        )
        coef = php / (gx * gx + gy * gy + gz * gz)
        return px, py, pz, -coef * gx, -coef * gy, -coef * gz

    return core


def _run_plain(surf: FlattenedSurface, y0: tuple, T: float, tol: float):
    """Fast no-channel integration loop; returns (final state tuple, drift maxima).

    Same scheme as ``step_stream`` (Dormand-Prince 5(4), projection, chart
    switching, curvature cap) with the stage arithmetic unrolled; drift is
    measured against the surface's global implicit function at every
    accepted step endpoint.
    """
    eps = surf.epsilon
    ie = 1.0 / eps
    gfun = surf.chart.eval10
    chart = surf.chart_at(y0[0], y0[1], y0[2] * ie, None)
    y = _project_state(chart, eps, tuple(float(v) for v in y0))
    full = _make_deriv(chart, eps, ())
    core = _make_core_deriv(chart, eps)
    f0, bound, _ = full(y)
    t = 0.0
    dt_prop = 1e-3
    max_g = 0.0
    max_speed = 0.0
    while t < T - 1e-14:
        x0, yy0, z0, px0, py0, pz0 = y
        k1x, k1y, k1z, k1u, k1v, k1w = f0
        cap = BASE_CAP / (1.0 + bound)
        if chart.dt_scale is not None:
            cap = min(cap, chart.dt_scale(x0, yy0, z0 * ie))
        dt = min(dt_prop, cap, T - t)
        clipped = dt < dt_prop
        while True:
            if dt < DT_FLOOR:
                raise StepUnderflow(f"step underflow at t={t:.6f}")
            try:
                a = dt * _A21
                k2x, k2y, k2z, k2u, k2v, k2w = core(
                    x0 + a * k1x, yy0 + a * k1y, z0 + a * k1z,
                    px0 + a * k1u, py0 + a * k1v, pz0 + a * k1w,
                )
                b1, b2 = dt * _A31, dt * _A32
                k3x, k3y, k3z, k3u, k3v, k3w = core(
                    x0 + b1 * k1x + b2 * k2x, yy0 + b1 * k1y + b2 * k2y,
                    z0 + b1 * k1z + b2 * k2z, px0 + b1 * k1u + b2 * k2u,
                    py0 + b1 * k1v + b2 * k2v, pz0 + b1 * k1w + b2 * k2w,
                )
                c1, c2, c3 = dt * _A41, dt * _A42, dt * _A43
                k4x, k4y, k4z, k4u, k4v, k4w = core(
                    x0 + c1 * k1x + c2 * k2x + c3 * k3x,
                    yy0 + c1 * k1y + c2 * k2y + c3 * k3y,
                    z0 + c1 * k1z + c2 * k2z + c3 * k3z,
                    px0 + c1 * k1u + c2 * k2u + c3 * k3u,
                    py0 + c1 * k1v + c2 * k2v + c3 * k3v,
                    pz0 + c1 * k1w + c2 * k2w + c3 * k3w,
                )
                d1, d2, d3, d4 = dt * _A51, dt * _A52, dt * _A53, dt * _A54
                k5x, k5y, k5z, k5u, k5v, k5w = core(
                    x0 + d1 * k1x + d2 * k2x + d3 * k3x + d4 * k4x,
                    yy0 + d1 * k1y + d2 * k2y + d3 * k3y + d4 * k4y,
                    z0 + d1 * k1z + d2 * k2z + d3 * k3z + d4 * k4z,
                    px0 + d1 * k1u + d2 * k2u + d3 * k3u + d4 * k4u,
                    py0 + d1 * k1v + d2 * k2v + d3 * k3v + d4 * k4v,
                    pz0 + d1 * k1w + d2 * k2w + d3 * k3w + d4 * k4w,
                )
                e1, e2, e3, e4, e5 = dt * _A61, dt * _A62, dt * _A63, dt * _A64, dt * _A65
                k6x, k6y, k6z, k6u, k6v, k6w = core(
                    x0 + e1 * k1x + e2 * k2x + e3 * k3x + e4 * k4x + e5 * k5x,
                    yy0 + e1 * k1y + e2 * k2y + e3 * k3y + e4 * k4y + e5 * k5y,
                    z0 + e1 * k1z + e2 * k2z + e3 * k3z + e4 * k4z + e5 * k5z,
                    px0 + e1 * k1u + e2 * k2u + e3 * k3u + e4 * k4u + e5 * k5u,
                    py0 + e1 * k1v + e2 * k2v + e3 * k3v + e4 * k4v + e5 * k5v,
                    pz0 + e1 * k1w + e2 * k2w + e3 * k3w + e4 * k4w + e5 * k5w,
                )
                w1, w3, w4, w5, w6 = dt * _B1, dt * _B3, dt * _B4, dt * _B5, dt * _B6
                nx = x0 + w1 * k1x + w3 * k3x + w4 * k4x + w5 * k5x + w6 * k6x
                ny = yy0 + w1 * k1y + w3 * k3y + w4 * k4y + w5 * k5y + w6 * k6y
                nz = z0 + w1 * k1z + w3 * k3z + w4 * k4z + w5 * k5z + w6 * k6z
                nu = px0 + w1 * k1u + w3 * k3u + w4 * k4u + w5 * k5u + w6 * k6u
                nv = py0 + w1 * k1v + w3 * k3v + w4 * k4v + w5 * k5v + w6 * k6v
                nw = pz0 + w1 * k1w + w3 * k3w + w4 * k4w + w5 * k5w + w6 * k6w
                k7 = core(nx, ny, nz, nu, nv, nw)  # error stage at the raw point
                y_proj = _project_state(chart, eps, (nx, ny, nz, nu, nv, nw))
                new_chart = surf.chart_at(y_proj[0], y_proj[1], y_proj[2] * ie, chart)
                if new_chart is not chart:
                    chart = new_chart
                    full = _make_deriv(chart, eps, ())
                    core = _make_core_deriv(chart, eps)
                    y_proj = _project_state(chart, eps, y_proj)
                f1, bound1, _ = full(y_proj)
            except (ValueError, ZeroDivisionError, OverflowError):
                dt *= 0.25
                clipped = False
                continue
            err = 0.0
            scale = tol * dt
            for yi, ka, kc, kd, ke, kg, kh in zip(
                (x0, yy0, z0, px0, py0, pz0), f0, (k3x, k3y, k3z, k3u, k3v, k3w),
                (k4x, k4y, k4z, k4u, k4v, k4w), (k5x, k5y, k5z, k5u, k5v, k5w),
                (k6x, k6y, k6z, k6u, k6v, k6w), k7,
            ):
                ei = dt * (_E1 * ka + _E3 * kc + _E4 * kd + _E5 * ke + _E6 * kg + _E7 * kh)
                r = ei / (scale * (1.0 + abs(yi) + 1e-3 * abs(ka)))
                err += r * r
            err = math.sqrt(err / 6.0)
            if err <= 1.0 or dt <= DT_FLOOR * 4:
                break
            dt *= max(0.2, 0.9 * err ** (-0.2))
            clipped = False
        t += dt
        y = y_proj
        f0, bound = f1, bound1
        gv = gfun(y[0], y[1], y[2] * ie)[0]
        if abs(gv) > max_g:
            max_g = abs(gv)
        sp = abs(math.sqrt(y[3] * y[3] + y[4] * y[4] + y[5] * y[5]) - 1.0)
        if sp > max_speed:
            max_speed = sp
        if not clipped:
            dt_prop = dt * min(5.0, max(0.2, 0.9 * err ** (-0.2))) if err > 0.0 else dt * 5.0
    return y, max_g, max_speed


def _project_state(chart: Chart, eps: float, s: tuple) -> tuple:
    """Newton-project q onto the chart zero set, retangent and renormalize p.

    Raises ValueError when the residual will not converge, which happens
    exactly when a trial step has left the chart's surface region (for
    example jumping past a wall fold); the step controller treats that as a
    rejection.
    """
    x, y, z, px, py, pz = s[:6]
    f = chart.eval10
    ie = 1.0 / eps
    v = math.inf
    for _ in range(12):
        v, gx, gy, gz = f(x, y, z * ie)[:4]
        gz *= ie
        g2 = gx * gx + gy * gy + gz * gz
        if abs(v) <= 5e-13:
            break
        if g2 < 1e-18:
            raise ValueError("projection hit a vanishing gradient")
        step = v / g2
        x -= step * gx
        y -= step * gy
        z -= step * gz
    else:
        v = f(x, y, z * ie)[0]
        if abs(v) > 5e-12:
            raise ValueError(f"projection did not converge, residual {v:.3e}")
    v, gx, gy, gz = f(x, y, z * ie)[:4]
    gz *= ie
    g2 = gx * gx + gy * gy + gz * gz
    pn = (px * gx + py * gy + pz * gz) / g2
    px -= pn * gx
    py -= pn * gy
    pz -= pn * gz
    norm = math.sqrt(px * px + py * py + pz * pz)
    px /= norm
    py /= norm
    pz /= norm
    return (x, y, z, px, py, pz) + s[6:]


@dataclass
class StepRecord:
    t0: float
    t1: float
    y0: tuple
    y1: tuple
    f0: tuple
    f1: tuple
    chart: Chart
    k_start: float  # Gaussian curvature at the step start (0 if not tracked)


def step_stream(
    surf: FlattenedSurface,
    y0: tuple,
    T: float,
    aux_modes: Sequence[str] = (),
    tol: float = TOL_DEFAULT,
    dt_init: float = 1e-3,
    stop_times: Sequence[float] = (),
    chart: Optional[Chart] = None,
    max_steps: int = 50_000_000,
):
    """Generator of accepted integrator steps from t=0 to t=T.

    Stops in ``stop_times`` are hit exactly (steps are clipped).  The state
    tuple is (x, y, z, px, py, pz) + aux in scaled coordinates.
    """
    eps = surf.epsilon
    t = 0.0
    expected = aux_layout(aux_modes)["total"]
    if len(y0) != expected:
        raise ValueError(f"state tuple has {len(y0)} slots, layout needs {expected}")
    stops = sorted(set(float(s) for s in stop_times if 0.0 < s < T)) + [float(T)]
    chart = chart or surf.chart_at(y0[0], y0[1], y0[2] / eps, None)
    y = _project_state(chart, eps, tuple(float(v) for v in y0))
    deriv = _make_deriv(chart, eps, aux_modes)
    f0, bound, k0 = deriv(y)
    dt_prop = dt_init
    n_steps = 0
    stop_idx = 0
    while t < T - 1e-14:
        while stop_idx < len(stops) and stops[stop_idx] <= t + 1e-14:
            stop_idx += 1
        next_stop = stops[stop_idx] if stop_idx < len(stops) else T
        cap = BASE_CAP / (1.0 + bound)
        if chart.dt_scale is not None:
            cap = min(cap, chart.dt_scale(y[0], y[1], y[2] / eps))
        dt = min(dt_prop, cap, next_stop - t)
        clipped = dt < dt_prop
        while True:
            if dt < DT_FLOOR:
                raise StepUnderflow(f"step underflow at t={t:.6f}, q=({y[0]:.4f},{y[1]:.4f},{y[2]:.4f})")
            try:
                k1 = f0
                y2 = tuple(yi + dt * _A21 * k1i for yi, k1i in zip(y, k1))
                k2 = deriv(y2)[0]
                y3 = tuple(yi + dt * (_A31 * a + _A32 * b) for yi, a, b in zip(y, k1, k2))
                k3 = deriv(y3)[0]
                y4 = tuple(
                    yi + dt * (_A41 * a + _A42 * b + _A43 * c)
                    for yi, a, b, c in zip(y, k1, k2, k3)
                )
                k4 = deriv(y4)[0]
                y5 = tuple(
                    yi + dt * (_A51 * a + _A52 * b + _A53 * c + _A54 * d)
                    for yi, a, b, c, d in zip(y, k1, k2, k3, k4)
                )
                k5 = deriv(y5)[0]
                y6 = tuple(
                    yi + dt * (_A61 * a + _A62 * b + _A63 * c + _A64 * d + _A65 * e)
                    for yi, a, b, c, d, e in zip(y, k1, k2, k3, k4, k5)
                )
                k6 = deriv(y6)[0]
                y_new = tuple(
                    yi + dt * (_B1 * a + _B3 * c + _B4 * d + _B5 * e + _B6 * g)
                    for yi, a, c, d, e, g in zip(y, k1, k3, k4, k5, k6)
                )
                # The error stage must use the unprojected point: near the
                # wall folds the derivative gradient is large enough to turn
                # the projection displacement into a dt-independent bias.
                k7 = deriv(y_new)[0]
                y_proj = _project_state(chart, eps, y_new)
                new_chart = surf.chart_at(y_proj[0], y_proj[1], y_proj[2] / eps, chart)
                if new_chart is not chart:
                    chart = new_chart
                    deriv = _make_deriv(chart, eps, aux_modes)
                    y_proj = _project_state(chart, eps, y_proj)
                f1, bound1, k_next = deriv(y_proj)
            except (ValueError, ZeroDivisionError, OverflowError):
                dt *= 0.25
                clipped = False
                continue
            err = 0.0
            scale = tol * dt
            for yi, a, c, d, e, g, h in zip(y, k1, k3, k4, k5, k6, k7):
                ei = dt * (_E1 * a + _E3 * c + _E4 * d + _E5 * e + _E6 * g + _E7 * h)
                # the derivative term keeps the roundoff floor of huge
                # fold-zone accelerations below the acceptance threshold
                w = scale * (1.0 + abs(yi) + 1e-3 * abs(a))
                r = ei / w
                err += r * r
            err = math.sqrt(err / len(y))
            if err <= 1.0 or dt <= DT_FLOOR * 4:
                break
            dt *= max(0.2, 0.9 * err ** (-0.2))
            clipped = False
        t_new = next_stop if abs(t + dt - next_stop) < 1e-13 else t + dt
        yield StepRecord(t0=t, t1=t_new, y0=y, y1=y_proj, f0=f0, f1=f1, chart=chart, k_start=k0)
        t = t_new
        y = y_proj
        f0, bound, k0 = f1, bound1, k_next
        fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** (-0.2)))
        if not clipped:
            dt_prop = dt * fac
        n_steps += 1
        if n_steps > max_steps:
            raise RuntimeError("step count exceeded max_steps")


def hermite_state(rec: StepRecord, t: float) -> tuple:
    """Cubic Hermite interpolant of the state inside one accepted step."""
    h = rec.t1 - rec.t0
    tau = (t - rec.t0) / h
    t2 = tau * tau
    t3 = t2 * tau
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    h10 = t3 - 2.0 * t2 + tau
    h01 = -2.0 * t3 + 3.0 * t2
    h11 = t3 - t2
    return tuple(
        h00 * a + h10 * h * fa + h01 * b + h11 * h * fb
        for a, fa, b, fb in zip(rec.y0, rec.f0, rec.y1, rec.f1)
    )


# ----------------------------------------------------------------------------
# Public state types and wrappers
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class GeodesicState:
    """Scaled-coordinates phase point on the flattened surface."""

    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))

    def as_tuple(self) -> tuple:
        return (*(float(v) for v in self.q), *(float(v) for v in self.p))


def state_invariants(surf: FlattenedSurface, s: GeodesicState) -> tuple[float, float, float]:
    """(|constraint|, |speed - 1|, |normal component of p|) at the state."""
    chart = surf.chart_at(s.q[0], s.q[1], s.q[2] / surf.epsilon)
    ie = 1.0 / surf.epsilon
    v, gx, gy, gz = chart.eval10(s.q[0], s.q[1], s.q[2] * ie)[:4]
    gz *= ie
    g = np.array([gx, gy, gz])
    n = g / np.linalg.norm(g)
    return (
        abs(float(v)),
        abs(float(np.linalg.norm(s.p)) - 1.0),
        abs(float(np.dot(s.p, n))),
    )


def geodesic_step(surf: FlattenedSurface, s: GeodesicState, dt: float) -> GeodesicState:
    """Advance by a single accepted adaptive step of size at most dt."""
    for rec in step_stream(surf, s.as_tuple(), dt):
        y = rec.y1
        return GeodesicState(q=np.array(y[:3]), p=np.array(y[3:6]), t=s.t + rec.t1)
    return s


def integrate_plain(
    surf: FlattenedSurface,
    s: GeodesicState,
    T: float,
    tol: float = TOL_DEFAULT,
) -> tuple[GeodesicState, float, float]:
    """Integrate without events; returns (state, max |G|, max |1 - speed|).

    Drift maxima are measured at every accepted step endpoint against the
    global implicit function.
    """
    y_final, max_g, max_speed = _run_plain(surf, s.as_tuple(), float(T), tol)
    return (
        GeodesicState(q=np.array(y_final[:3]), p=np.array(y_final[3:6]), t=s.t + T),
        max_g,
        max_speed,
    )


def states_at(
    surf: FlattenedSurface,
    s: GeodesicState,
    times: Sequence[float],
    tol: float = TOL_DEFAULT,
) -> list[GeodesicState]:
    """States at the requested times (hit exactly by step clipping)."""
    times = sorted(float(t) for t in times)
    if not times:
        return []
    T = times[-1]
    out = []
    idx = 0
    if times[0] == 0.0:
        out.append(GeodesicState(q=s.q.copy(), p=s.p.copy(), t=s.t))
        idx = 1
    for rec in step_stream(surf, s.as_tuple(), T, stop_times=times[:-1], tol=tol):
        while idx < len(times) and abs(rec.t1 - times[idx]) < 1e-12:
            out.append(
                GeodesicState(q=np.array(rec.y1[:3]), p=np.array(rec.y1[3:6]), t=s.t + rec.t1)
            )
            idx += 1
    return out


# ----------------------------------------------------------------------------
# Lifts between the billiard and the surface
# ----------------------------------------------------------------------------


def pushforward_initial(surf: FlattenedSurface, b, z_branch) -> GeodesicState:
    """Lift a billiard phase point to the chosen sheet of the flattened surface."""
    theta, phi = b.q.theta, b.q.phi
    if surf.table is not None and float(surf.table.max_violation(theta, phi)) >= -1e-9:
        raise NoSuchBranch("base point is not in the open table interior")
    try:
        z = surf.lift(theta, phi, z_branch)
    except (OutsideDomain, NoSuchBranch) as exc:
        raise NoSuchBranch(f"no branch over base point: {exc}") from exc
    chart = surf.chart_at(theta, phi, z)
    _, gx, gy, gz = chart.eval10(theta, phi, z)[:4]
    hx = -gx / gz
    hy = -gy / gz
    eps = surf.epsilon
    px, py = float(b.p[0]), float(b.p[1])
    pz = eps * (hx * px + hy * py)
    p = np.array([px, py, pz])
    p /= np.linalg.norm(p)
    return GeodesicState(q=np.array([theta, phi, eps * z]), p=p, t=0.0)


def project_state(s: GeodesicState):
    """The billiard phase point under the tangent-bundle projection."""
    from .billiard import BilliardState

    ph = np.array([s.p[0], s.p[1]])
    n = np.linalg.norm(ph)
    if n < 1e-12:
        raise ValueError("horizontal speed vanishes; projection undefined")
    return BilliardState(TorusPoint(float(s.q[0]), float(s.q[1])), ph / n)


# ----------------------------------------------------------------------------
# Zone events and passage records
# ----------------------------------------------------------------------------


@dataclass
class ZonePassage:
    t_in: float
    t_out: float
    delta_px: float
    delta_py: float
    integral_k: float
    entered_steep: bool
    component_id: int
    px_in: float
    py_in: float
    frame_angle: float = 0.0  # rotation sending the wall's outward normal to -e_y
    duration: float = field(init=False)

    def __post_init__(self):
        self.duration = self.t_out - self.t_in

    def to_dict(self) -> dict:
        return {
            "t_in": self.t_in,
            "t_out": self.t_out,
            "duration": self.duration,
            "delta_px": self.delta_px,
            "delta_py": self.delta_py,
            "integral_k": self.integral_k,
            "entered_steep": self.entered_steep,
            "component_id": self.component_id,
            "px_in": self.px_in,
            "py_in": self.py_in,
            "frame_angle": self.frame_angle,
        }


@dataclass
class TrajectorySample:
    t: float
    x: float
    y: float
    z: float
    px: float
    py: float
    pz: float
    h: float
    k: float
    in_band: bool
    in_steep: bool
    int_k: float = 0.0      # integral of K from t = 0 (integrator quadrature)
    int_abs_k: float = 0.0  # integral of |K| from t = 0


def _indicator(chart: Chart, eps: float, x: float, y: float, z: float) -> tuple[float, float]:
    """(vertical normal component h, scaled vertical component) at a point."""
    _, gx, gy, gz = chart.eval10(x, y, z / eps)[:4]
    n = math.sqrt(gx * gx + gy * gy + gz * gz)
    h = gz / n
    return h, scaled_vertical_from_h(h, eps)


def _point_curvature(chart: Chart, eps: float, x: float, y: float, z: float) -> float:
    d = chart.eval10(x, y, z / eps)
    ie = 1.0 / eps
    gx, gy, gz = d[1], d[2], d[3] * ie
    H = np.array(
        [[d[4], d[5], d[6] * ie],
         [d[5], d[7], d[8] * ie],
         [d[6] * ie, d[8] * ie, d[9] * ie * ie]]
    )
    g = np.array([gx, gy, gz])
    gn = float(np.linalg.norm(g))
    nrm = g / gn
    e = np.zeros(3)
    e[int(np.argmin(np.abs(nrm)))] = 1.0
    t1 = e - float(e @ nrm) * nrm
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(nrm, t1)
    s11 = float(t1 @ H @ t1) / gn
    s12 = float(t1 @ H @ t2) / gn
    s22 = float(t2 @ H @ t2) / gn
    return s11 * s22 - s12 * s12


def _advance_from(
    surf: FlattenedSurface, chart: Chart, y0: tuple, dt: float, aux_modes: Sequence[str]
) -> tuple:
    """Integrate exactly dt from a step-start state (used by event bisection)."""
    if dt <= 0.0:
        return y0
    y = y0
    for rec in step_stream(surf, y0, dt, aux_modes=aux_modes, chart=chart, dt_init=min(1e-3, dt)):
        y = rec.y1
    return y


def _wall_frame(table, theta: float, phi: float) -> tuple[int, np.ndarray, float]:
    """Nearest wall index and the rotation sending its outward normal to -e_y."""
    best, best_i = -math.inf, 0
    for i, w in enumerate(table.walls):
        v = float(w.signed_value(theta, phi))
        if v > best:
            best, best_i = v, i
    n = table.outward_normal(best_i, theta, phi)
    beta = -0.5 * math.pi - math.atan2(n[1], n[0])
    R = np.array([[math.cos(beta), -math.sin(beta)], [math.sin(beta), math.cos(beta)]])
    return best_i, R, beta


def integrate_with_events(
    surf: FlattenedSurface,
    s0: GeodesicState,
    T: float,
    delta: float,
    nu: float,
    record_stride: Optional[float] = SAMPLE_STRIDE,
    tol: float = TOL_DEFAULT,
    aux_extra: Sequence[str] = (),
) -> tuple[list[TrajectorySample], list[ZonePassage]]:
    """Integrate to arclength T, detecting near-wall band and steep-zone
    crossings and assembling one passage record per maximal band interval.

    Crossing times are bisected to 1e-10 by re-integration from the step
    start, so the curvature integral per passage uses exactly the channel
    quadrature of the main integrator.
    """
    if not (0.0 < delta < 1.0 and 0.0 < nu < 1.0):
        raise ValueError("delta and nu must lie in (0, 1)")
    eps = surf.epsilon
    aux_modes = tuple(dict.fromkeys(["intk", "intabsk", *aux_extra]))
    layout = aux_layout(aux_modes)
    intk_slot = layout["intk"]
    intabsk_slot = layout["intabsk"]
    y0 = s0.as_tuple() + default_aux_init(aux_modes)

    samples: list[TrajectorySample] = []
    passages: list[ZonePassage] = []

    def band_fn(chart, y):
        h, _ = _indicator(chart, eps, y[0], y[1], y[2])
        return abs(h) - delta

    def steep_fn(chart, y):
        _, nz = _indicator(chart, eps, y[0], y[1], y[2])
        return abs(nz) - (1.0 - nu)

    def bisect_event(rec: StepRecord, fn, t_lo: float, t_hi: float) -> tuple[float, tuple]:
        """Refine the crossing of fn's sign in (t_lo, t_hi] on the true flow.

        Returns the earliest time on the t_hi side of the crossing together
        with the integrated state (including channels) at that time.
        """
        y_hi = _advance_from(surf, rec.chart, rec.y0, t_hi - rec.t0, aux_modes)
        hi_positive = fn(rec.chart, y_hi) > 0.0
        while t_hi - t_lo > EVENT_TIME_TOL:
            t_mid = 0.5 * (t_lo + t_hi)
            y_mid = _advance_from(surf, rec.chart, rec.y0, t_mid - rec.t0, aux_modes)
            if (fn(rec.chart, y_mid) > 0.0) == hi_positive:
                t_hi, y_hi = t_mid, y_mid
            else:
                t_lo = t_mid
        return t_hi, y_hi

    # Passage state.
    in_band = None
    entry: Optional[dict] = None
    steep_flag = False

    sample_next = 0.0

    def emit_sample(t, y, chart):
        h, nz = _indicator(chart, eps, y[0], y[1], y[2])
        k = _point_curvature(chart, eps, y[0], y[1], y[2])
        samples.append(
            TrajectorySample(
                t=t, x=y[0], y=y[1], z=y[2], px=y[3], py=y[4], pz=y[5],
                h=h, k=k, in_band=abs(h) <= delta, in_steep=abs(nz) < 1.0 - nu,
                int_k=y[intk_slot], int_abs_k=y[intabsk_slot],
            )
        )

    first_chart = surf.chart_at(y0[0], y0[1], y0[2] / eps, None)
    in_band = band_fn(first_chart, y0) <= 0.0
    if in_band:
        wall_idx, R, beta = (
            _wall_frame(surf.table, y0[0], y0[1]) if surf.table else (0, np.eye(2), 0.0)
        )
        p_in = R @ np.array([y0[3], y0[4]])
        entry = {
            "t": 0.0, "R": R, "beta": beta, "wall": wall_idx, "intk": 0.0,
            "px": float(p_in[0]), "py": float(p_in[1]), "partial": True,
        }
    if record_stride:
        emit_sample(0.0, y0, first_chart)
        sample_next = record_stride

    for rec in step_stream(surf, y0, T, aux_modes=aux_modes, tol=tol):
        # sub-sampling grid for event detection and recording
        n_sub = max(1, int(math.ceil((rec.t1 - rec.t0) / SAMPLE_STRIDE)))
        sub_ts = [rec.t0 + (rec.t1 - rec.t0) * (j + 1) / n_sub for j in range(n_sub)]
        prev_t = rec.t0
        prev_band = in_band
        for t_sub in sub_ts:
            y_sub = rec.y1 if t_sub == rec.t1 else hermite_state(rec, t_sub)
            band_now = band_fn(rec.chart, y_sub) <= 0.0
            if band_now != prev_band:
                t_ev, y_ev = bisect_event(rec, band_fn, prev_t, t_sub)
                if band_now:
                    wall_idx, R, beta = (
                        _wall_frame(surf.table, y_ev[0], y_ev[1])
                        if surf.table
                        else (0, np.eye(2), 0.0)
                    )
                    p_in = R @ np.array([y_ev[3], y_ev[4]])
                    entry = {
                        "t": t_ev, "R": R, "beta": beta, "wall": wall_idx,
                        "intk": y_ev[intk_slot],
                        "px": float(p_in[0]), "py": float(p_in[1]), "partial": False,
                    }
                    steep_flag = False
                elif entry is not None:
                    p_out = entry["R"] @ np.array([y_ev[3], y_ev[4]])
                    if not entry.get("partial"):
                        passages.append(
                            ZonePassage(
                                t_in=entry["t"],
                                t_out=t_ev,
                                delta_px=float(p_out[0]) - entry["px"],
                                delta_py=float(p_out[1]) - entry["py"],
                                integral_k=float(y_ev[intk_slot]) - entry["intk"],
                                entered_steep=steep_flag,
                                component_id=entry["wall"],
                                px_in=entry["px"],
                                py_in=entry["py"],
                                frame_angle=entry["beta"],
                            )
                        )
                    entry = None
                    steep_flag = False
            if band_now and steep_fn(rec.chart, y_sub) < 0.0:
                steep_flag = True
            prev_band = band_now
            prev_t = t_sub
        in_band = prev_band
        if record_stride:
            while sample_next <= rec.t1 + 1e-15:
                y_s = rec.y1 if abs(sample_next - rec.t1) < 1e-15 else hermite_state(rec, sample_next)
                emit_sample(min(sample_next, rec.t1), y_s, rec.chart)
                sample_next += record_stride
    return samples, passages


# ----------------------------------------------------------------------------
# Export
# ----------------------------------------------------------------------------


def export_trajectory_csv(path, samples: list[TrajectorySample], seed: Optional[int] = None) -> None:
    with open(path, "w", newline="") as fh:
        if seed is not None:
            fh.write(f"# {rng_header(seed)}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "X", "Y", "Z", "px", "py", "pz", "H", "K", "in_band", "in_steep"])
        for s in samples:
            writer.writerow(
                [repr(s.t), repr(wrap_angle(s.x)), repr(wrap_angle(s.y)), repr(s.z),
                 repr(s.px), repr(s.py), repr(s.pz), repr(s.h), repr(s.k),
                 int(s.in_band), int(s.in_steep)]
            )


def export_passages_jsonl(path, passages: list[ZonePassage]) -> None:
    with open(path, "w") as fh:
        for p in passages:
            fh.write(json.dumps(p.to_dict(), sort_keys=True) + "\n")
