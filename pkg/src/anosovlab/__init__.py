"""Numerical laboratory for flattened-surface geodesic flows, dispersive
torus billiards, and Riccati hyperbolicity certificates."""

from .billiard import (
    BilliardState,
    BilliardTable,
    BounceRecord,
    HorizonGrid,
    HorizonReport,
    Wall,
    billiard_flow,
    boundary_component_count,
    finite_horizon_search,
    wall_curvature,
)
from .geodesic import (
    GeodesicState,
    ZonePassage,
    geodesic_step,
    integrate_plain,
    integrate_with_events,
    pushforward_initial,
)
from .hyperbolicity import (
    CertificateReport,
    KappaEstimate,
    RiccatiTrace,
    anosov_certificate,
    estimate_kappa,
    lyapunov_exponent,
    riccati_along,
)
from .linkage import (
    LinkageConfig,
    LinkageParams,
    SheetId,
    build_table,
    chart_lift,
    implicit_G,
    validate_params,
    verify_assumptions,
)
from .surface import (
    Chart,
    FlattenedSurface,
    ShapeData,
    SurfacePoint,
    curvature_blowup_scan,
    darboux_along,
    normal_epsilon,
    shape_operator,
    sphere_surface,
    surface_point,
    tube_surface,
    vertical_component,
    zone_membership,
)
from .torus import (
    ImplicitCurve,
    LiftedSegment,
    TorusPoint,
    segment_curve_crossing,
    torus_distance,
)

__version__ = "0.1.0"
