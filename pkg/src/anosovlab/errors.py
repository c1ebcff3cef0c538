"""Exception types shared across the package."""


class GeometryError(Exception):
    """Base class for all geometric / numerical failures in this package."""


class TangencyUnresolved(GeometryError):
    """A level-set extremum touches the target level without a sign change.

    The caller decides the grazing policy; the crossing search refuses to
    guess on its own.
    """


class GrazingImpact(GeometryError):
    """A billiard impact closer to tangential than the configured tolerance."""


class EscapedDomain(GeometryError):
    """Numerical drift placed a trajectory point outside the billiard table."""


class NotOnWall(GeometryError):
    """A point handed to a wall-local computation is not on that wall."""


class DegenerateNormal(GeometryError):
    """The implicit-surface gradient is too small to define a normal."""


class NormalConsistencyError(GeometryError):
    """The two independent normal computations disagree beyond tolerance."""


class StepUnderflow(GeometryError):
    """The adaptive integrator needs a step below the hard floor."""


class ZeroCurvature(GeometryError):
    """A curve sample has vanishing curvature; frame decomposition skipped."""


class RiccatiBlowup(GeometryError):
    """The Riccati solution diverged (conjugate-point analogue)."""


class EmptySample(GeometryError):
    """A sampling request produced no admissible points."""


class NoSuchBranch(GeometryError):
    """Requested lift branch does not exist over the given base point."""


class OutsideDomain(GeometryError):
    """Base point lies outside the chart domain (negative radicand)."""


class InvalidParams(GeometryError):
    """Linkage parameters violate the validity inequalities."""


class HorizonPreconditionFailed(GeometryError):
    """Certificate precondition on the rescaled horizon time is unmet."""


class EmptyDataset(GeometryError):
    """Plot export called with nothing to draw."""
