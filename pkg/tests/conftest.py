import math

import numpy as np
import pytest

from anosovlab.linkage import LinkageParams, build_table, implicit_G
from anosovlab.rng import make_rng


@pytest.fixture(scope="session")
def params():
    return LinkageParams(2.8, 0.4, 0.05)


@pytest.fixture(scope="session")
def table(params):
    return build_table(params)


@pytest.fixture(scope="session")
def linkage_surface_unit(params):
    """Configuration surface at flattening 1 (clone with .with_epsilon as needed)."""
    return implicit_G(LinkageParams(params.l, params.r, 1.0))


@pytest.fixture()
def rng():
    return make_rng(20240810)


def random_tangent_state(surf, rng):
    """Uniform phase point on the flattened surface (shared test helper)."""
    from anosovlab.geodesic import GeodesicState
    from anosovlab.surface import normal_epsilon, sample_surface_points, tangent_basis

    (pt, _), = sample_surface_points(surf, 1, rng)
    n = normal_epsilon(surf, pt)
    t1, t2 = tangent_basis(n)
    a = rng.uniform(0.0, 2.0 * math.pi)
    return GeodesicState(q=pt.scaled_position, p=math.cos(a) * t1 + math.sin(a) * t2)
