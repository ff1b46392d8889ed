"""Exception types shared across the toolkit."""


class DepthVOError(Exception):
    """Base class for all toolkit errors."""


class NonPositiveDepth(DepthVOError):
    """A depth value is zero or negative where a positive one is required."""


class TooFewPoses(DepthVOError):
    """A trajectory operation needs more poses than were supplied."""


class DegenerateConfiguration(DepthVOError):
    """Point configuration is rank-deficient (e.g. collinear positions)."""


class SingularNormalMatrix(DepthVOError):
    """The 2x2 normal system of the scale-shift fit is numerically singular."""


class InsufficientOverlap(DepthVOError):
    """Too few jointly-valid pixels between two depth maps."""


class NoValidTriplets(DepthVOError):
    """Every sampled triplet was rejected as degenerate."""


class EmptySparseSet(DepthVOError):
    """A sparse depth map with no samples where at least one is required."""


class MissingGroundTruth(DepthVOError):
    """The oracle provider has no ground-truth depth for the requested frame."""


class MissingFile(DepthVOError):
    """The file-backed provider found no depth map for the requested frame."""


class TooFewPoints(DepthVOError):
    """Rank statistics need at least two projected points."""


class UnknownId(DepthVOError):
    """A map-point id was referenced that does not exist in the local map."""


class MissingDepth(DepthVOError):
    """A keyframe is missing the depth map required for the operation."""


class MissingPose(DepthVOError):
    """A frame is missing the pose required for the operation."""


class InsufficientObservations(DepthVOError):
    """Pose estimation needs at least three observed map points."""


class Diverged(DepthVOError):
    """Iterative pose refinement failed to decrease the cost."""


class LowParallax(DepthVOError):
    """Triangulation rays are too close to parallel."""


class NegativeDepth(DepthVOError):
    """A triangulated point has non-positive depth in one of the views."""


class TrackingLost(DepthVOError):
    """Pose estimation failed mid-sequence; partial results are attached."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NoVisibleLandmarks(DepthVOError):
    """No generated landmark is visible in any frame of the sequence."""


class EmptyPairSet(DepthVOError):
    """Scale recovery received no (z_vo, z_pred) pairs."""


class EmptyOverlap(DepthVOError):
    """Depth metric evaluation found no jointly-valid pixels."""


class NoTimestampOverlap(DepthVOError):
    """Trajectory association found no timestamp matches within tolerance."""


class ConfigError(DepthVOError):
    """A run configuration failed schema validation."""
