"""Skeleton geometry: keypoints, limb orientations, limb lengths, reconstruction.

The pose model is a rooted spanning tree over 13 named keypoints with the
nose as root.  Each of the 12 tree edges ("limbs") carries two per-frame
quantities: the image-plane orientation of the child keypoint relative to
its parent, and the Euclidean limb length in pixels.  Root position plus
all limb angles and lengths recover the pose exactly, so a sequence can be
round-tripped through the angle representation, denoised there, and
rebuilt.

Angles follow the four-quadrant arctangent convention with range (-pi, pi]:
0 points along +x, +pi/2 along +y, and the branch cut sits on the negative
x axis where the angle is +pi, never -pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLimbError, InsufficientDataError, ShapeError

KEYPOINT_NAMES = (
    "nose",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
)
N_KEYPOINTS = 13
ROOT = 0

# Tree edges as (parent, child), listed so every parent appears as a child
# (or is the root) on an earlier edge; reconstruction walks them in order.
EDGES = (
    (0, 1),
    (0, 2),
    (1, 3),
    (3, 5),
    (2, 4),
    (4, 6),
    (1, 7),
    (2, 8),
    (7, 9),
    (9, 11),
    (8, 10),
    (10, 12),
)
N_LIMBS = 12
EDGE_NAMES = tuple(
    f"{KEYPOINT_NAMES[p]}_to_{KEYPOINT_NAMES[c]}" for p, c in EDGES
)

_PARENTS = np.array([p for p, _ in EDGES])
_CHILDREN = np.array([c for _, c in EDGES])


@dataclass
class PoseSequence:
    """A sequence of 2D poses in pixel coordinates.

    xy has shape (n_frames, 13, 2) and must be finite; fps is the capture
    rate.  Instances are treated as immutable once constructed.
    """

    xy: np.ndarray
    fps: float

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=float)
        if self.xy.ndim != 3 or self.xy.shape[1:] != (N_KEYPOINTS, 2):
            raise ShapeError(
                f"pose array must be (n_frames, {N_KEYPOINTS}, 2), got {self.xy.shape}"
            )
        if self.xy.shape[0] < 1:
            raise ShapeError("pose sequence needs at least one frame")
        if not np.isfinite(self.xy).all():
            bad = np.argwhere(~np.isfinite(self.xy).all(axis=2))
            frame, joint = bad[0]
            raise ShapeError(
                f"non-finite coordinate at frame {frame}, "
                f"keypoint {KEYPOINT_NAMES[joint]}"
            )
        self.fps = float(self.fps)
        if not (self.fps > 0):
            raise ShapeError(f"fps must be positive, got {self.fps}")

    @property
    def n_frames(self) -> int:
        return self.xy.shape[0]


def wrap_angle(theta):
    """Map angles to the canonical branch (-pi, pi]."""
    theta = np.asarray(theta, dtype=float)
    out = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    # mod can land on -pi for inputs just below the branch point
    out = np.where(out == -np.pi, np.pi, out)
    return out if out.ndim else float(out)


def limb_orientation(parent, child) -> float:
    """Orientation of the child keypoint seen from its parent, in (-pi, pi].

    Equivalent to the piecewise arctangent over the four quadrants with the
    two degenerate verticals mapped to +-pi/2 and the negative x axis to +pi.
    """
    px, py = float(parent[0]), float(parent[1])
    cx, cy = float(child[0]), float(child[1])
    dx, dy = cx - px, cy - py
    if dx == 0.0 and dy == 0.0:
        raise DegenerateLimbError("coincident parent and child keypoints")
    ang = math.atan2(dy, dx)
    return math.pi if ang == -math.pi else ang


def limb_length(parent, child) -> float:
    dx = float(child[0]) - float(parent[0])
    dy = float(child[1]) - float(parent[1])
    return math.hypot(dx, dy)


def _deltas(xy: np.ndarray) -> np.ndarray:
    return xy[..., _CHILDREN, :] - xy[..., _PARENTS, :]


def _raise_degenerate(mask: np.ndarray):
    """mask is (n, 12) or (12,); raise naming the first offending edge."""
    idx = np.argwhere(mask)
    if mask.ndim == 1:
        edge = int(idx[0][0])
        raise DegenerateLimbError(
            f"coincident keypoints on limb {EDGE_NAMES[edge]}"
        )
    frame, edge = idx[0]
    raise DegenerateLimbError(
        f"coincident keypoints on limb {EDGE_NAMES[int(edge)]} at frame {int(frame)}"
    )


def angles_from_pose(xy: np.ndarray) -> np.ndarray:
    """Convert one (13, 2) pose into the 12 limb orientations."""
    xy = np.asarray(xy, dtype=float)
    if xy.shape != (N_KEYPOINTS, 2):
        raise ShapeError(f"pose must be ({N_KEYPOINTS}, 2), got {xy.shape}")
    d = _deltas(xy)
    zero = (d[:, 0] == 0.0) & (d[:, 1] == 0.0)
    if zero.any():
        _raise_degenerate(zero)
    ang = np.arctan2(d[:, 1], d[:, 0])
    return np.where(ang == -np.pi, np.pi, ang)


def limb_lengths_from_pose(xy: np.ndarray) -> np.ndarray:
    """Euclidean lengths of the 12 limbs of one (13, 2) pose."""
    xy = np.asarray(xy, dtype=float)
    if xy.shape != (N_KEYPOINTS, 2):
        raise ShapeError(f"pose must be ({N_KEYPOINTS}, 2), got {xy.shape}")
    d = _deltas(xy)
    return np.hypot(d[:, 0], d[:, 1])


def pose_to_angles(seq: PoseSequence) -> np.ndarray:
    """All limb orientations of a sequence, shape (n_frames, 12)."""
    d = _deltas(seq.xy)
    zero = (d[..., 0] == 0.0) & (d[..., 1] == 0.0)
    if zero.any():
        _raise_degenerate(zero)
    ang = np.arctan2(d[..., 1], d[..., 0])
    return np.where(ang == -np.pi, np.pi, ang)


def pose_to_limb_lengths(seq: PoseSequence) -> np.ndarray:
    """All limb lengths of a sequence, shape (n_frames, 12)."""
    d = _deltas(seq.xy)
    return np.hypot(d[..., 0], d[..., 1])


def reconstruct_pose(base, theta, lengths) -> np.ndarray:
    """Rebuild a (13, 2) pose from root position, limb angles, and lengths."""
    theta = np.asarray(theta, dtype=float)
    lengths = np.asarray(lengths, dtype=float)
    if theta.shape != (N_LIMBS,) or lengths.shape != (N_LIMBS,):
        raise ShapeError("theta and lengths must both have shape (12,)")
    if not (lengths > 0).all():
        edge = int(np.argmin(lengths > 0))
        raise DegenerateLimbError(
            f"non-positive length for limb {EDGE_NAMES[edge]}"
        )
    xy = np.empty((N_KEYPOINTS, 2))
    xy[ROOT] = np.asarray(base, dtype=float)
    for e, (p, c) in enumerate(EDGES):
        xy[c, 0] = xy[p, 0] + lengths[e] * math.cos(theta[e])
        xy[c, 1] = xy[p, 1] + lengths[e] * math.sin(theta[e])
    return xy


def reconstruct_sequence(base, theta, lengths, fps: float = 30.0) -> PoseSequence:
    """Vectorized reconstruction of a whole sequence.

    base is (n, 2), theta and lengths are (n, 12); returns a PoseSequence.
    """
    base = np.asarray(base, dtype=float)
    theta = np.asarray(theta, dtype=float)
    lengths = np.asarray(lengths, dtype=float)
    n = base.shape[0]
    if base.shape != (n, 2) or theta.shape != (n, N_LIMBS) or lengths.shape != (n, N_LIMBS):
        raise ShapeError(
            "base must be (n, 2) and theta/lengths (n, 12) with matching n"
        )
    if not (lengths > 0).all():
        frame, edge = np.argwhere(~(lengths > 0))[0]
        raise DegenerateLimbError(
            f"non-positive length for limb {EDGE_NAMES[int(edge)]} at frame {int(frame)}"
        )
    xy = np.empty((n, N_KEYPOINTS, 2))
    xy[:, ROOT, :] = base
    cos = np.cos(theta)
    sin = np.sin(theta)
    for e, (p, c) in enumerate(EDGES):
        xy[:, c, 0] = xy[:, p, 0] + lengths[:, e] * cos[:, e]
        xy[:, c, 1] = xy[:, p, 1] + lengths[:, e] * sin[:, e]
    return PoseSequence(xy=xy, fps=fps)


def unwrap_joint_angles(theta: np.ndarray) -> np.ndarray:
    """Remove 2*pi jumps along time so each joint series is continuous.

    theta is (n, 12) (or any (n, k)); frame 0 is unchanged and every output
    value stays congruent to its input modulo 2*pi.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2:
        raise ShapeError(f"angle series must be 2-D, got shape {theta.shape}")
    return np.unwrap(theta, axis=0)


def velocity_series(positions: np.ndarray, fps: float) -> np.ndarray:
    """Per-frame velocity in px/s: central differences inside, one-sided at ends."""
    positions = np.asarray(positions, dtype=float)
    if positions.shape[0] < 2:
        raise InsufficientDataError("velocity needs at least two frames")
    if not (fps > 0):
        raise ShapeError(f"fps must be positive, got {fps}")
    return np.gradient(positions, axis=0) * float(fps)
