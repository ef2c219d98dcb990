"""Metamorphic transformations: panning, 2D rotation, affine and perspective warps.

Coordinates are continuous pixel coordinates with the origin at the top-left corner;
pixel (row i, col j) covers [j, j+1) x [i, i+1) and its centre is (j + 0.5, i + 0.5).
Every spec lowers to a forward 3x3 matrix H. Warping is by inverse mapping: each output
pixel centre is sent through H^-1 and the source is sampled bilinearly, with 0.0 (black)
outside the image.
"""

import hashlib
import logging
import math
from typing import Sequence

import numpy as np

from triage.core.errors import TransformError
from triage.models.transform import (
    AffineSpec,
    PanSpec,
    PerspectiveSpec,
    RotateSpec,
    TransformKind,
    TransformPolicy,
    TransformSpec,
)

logger = logging.getLogger(__name__)

# Inverse-mapped coordinates this close to an integer are snapped onto it.
SNAP_EPSILON = 1e-9
MIN_DETERMINANT = 1e-9

_EXACT_QUARTER_TURNS = {0: (1.0, 0.0), 1: (0.0, 1.0), 2: (-1.0, 0.0), 3: (0.0, -1.0)}


def identity_spec(kind: TransformKind | str) -> TransformSpec:
    kind = TransformKind(kind)
    if kind is TransformKind.PAN:
        return PanSpec()
    if kind is TransformKind.ROTATE2D:
        return RotateSpec()
    if kind is TransformKind.AFFINE:
        return AffineSpec()
    return PerspectiveSpec()


def _cos_sin(degrees: float) -> tuple[float, float]:
    turns, remainder = divmod(degrees, 90.0)
    if remainder == 0.0:
        return _EXACT_QUARTER_TURNS[int(turns) % 4]
    radians = math.radians(degrees)
    return math.cos(radians), math.sin(radians)


def forward_matrix(spec: TransformSpec, shape: Sequence[int]) -> np.ndarray:
    """Forward 3x3 matrix of a spec for images of `shape` (height, width, ...)."""
    height, width = shape[0], shape[1]
    if isinstance(spec, PanSpec):
        return np.array([[1.0, 0.0, spec.dx], [0.0, 1.0, spec.dy], [0.0, 0.0, 1.0]])
    if isinstance(spec, RotateSpec):
        # Counter-clockwise as displayed (y points down), about the image centre.
        c, s = _cos_sin(spec.angle)
        cx, cy = width / 2.0, height / 2.0
        return np.array(
            [
                [c, s, cx - c * cx - s * cy],
                [-s, c, cy + s * cx - c * cy],
                [0.0, 0.0, 1.0],
            ]
        )
    if isinstance(spec, AffineSpec):
        return np.array([*spec.matrix, (0.0, 0.0, 1.0)], dtype=np.float64)
    return np.array(spec.matrix, dtype=np.float64)


def _affine_inverse(matrix: np.ndarray) -> np.ndarray:
    # Closed form so that translations invert exactly.
    a, b, tx = matrix[0]
    c, d, ty = matrix[1]
    det = a * d - b * c
    if abs(det) <= MIN_DETERMINANT:
        raise TransformError(f"affine matrix is not invertible (det={det:g}).")
    ia, ib, ic, id_ = d / det, -b / det, -c / det, a / det
    return np.array(
        [
            [ia, ib, -(ia * tx + ib * ty)],
            [ic, id_, -(ic * tx + id_ * ty)],
            [0.0, 0.0, 1.0],
        ]
    )


def inverse_matrix(matrix: np.ndarray) -> np.ndarray:
    if not np.isfinite(matrix).all():
        raise TransformError("transform matrix has non-finite entries.")
    if matrix[2, 0] == 0.0 and matrix[2, 1] == 0.0 and matrix[2, 2] == 1.0:
        return _affine_inverse(matrix)
    det = float(np.linalg.det(matrix))
    if abs(det) <= MIN_DETERMINANT:
        raise TransformError(f"perspective matrix is not invertible (det={det:g}).")
    inverse = np.linalg.inv(matrix)
    return inverse / inverse[2, 2]


def inverse_spec(spec: TransformSpec, shape: Sequence[int]) -> TransformSpec:
    if isinstance(spec, PanSpec):
        return PanSpec(dx=-spec.dx, dy=-spec.dy)
    if isinstance(spec, RotateSpec):
        return RotateSpec(angle=-spec.angle)
    inverse = inverse_matrix(forward_matrix(spec, shape))
    if isinstance(spec, AffineSpec):
        return AffineSpec(matrix=tuple(tuple(float(v) for v in row) for row in inverse[:2]))
    return PerspectiveSpec(matrix=tuple(tuple(float(v) for v in row) for row in inverse))


def _snap(values: np.ndarray) -> np.ndarray:
    nearest = np.rint(values)
    return np.where(np.abs(values - nearest) < SNAP_EPSILON, nearest, values)


def _bilinear(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample `image` at index coordinates (xs, ys); neighbours outside the image read 0."""
    height, width = image.shape[0], image.shape[1]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = (xs - x0)[..., np.newaxis]
    fy = (ys - y0)[..., np.newaxis]
    result = np.zeros(xs.shape + (image.shape[2],), dtype=np.float64)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi, yi = x0 + dx, y0 + dy
            inside = (xi >= 0) & (xi < width) & (yi >= 0) & (yi < height)
            values = np.zeros_like(result)
            values[inside] = image[yi[inside], xi[inside]]
            result += wx * wy * values
    return result


def warp(image: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Inverse-map `image` through the forward matrix `matrix`."""
    inverse = inverse_matrix(matrix)
    height, width = image.shape[0], image.shape[1]
    cols, rows = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)
    source = inverse @ np.stack([cols.ravel(), rows.ravel(), np.ones(cols.size)])
    w = source[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = source[0] / w - 0.5
        ys = source[1] / w - 0.5
    # Points mapped to or beyond infinity sample nothing.
    far = ~np.isfinite(xs) | ~np.isfinite(ys) | (w <= 0)
    xs = np.where(far, -2.0, _snap(xs)).reshape(height, width)
    ys = np.where(far, -2.0, _snap(ys)).reshape(height, width)
    out = _bilinear(image, xs, ys)
    # Bilinear weights sum to one; clipping only removes rounding overshoot.
    return np.clip(out, 0.0, 1.0)


def apply_transform(image: np.ndarray, spec: TransformSpec) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise TransformError(f"expected an (height, width, channels) image, got shape {image.shape}.")
    return warp(image, forward_matrix(spec, image.shape))


def compose_check(image: np.ndarray, spec: TransformSpec) -> float:
    """Max deviation of apply(apply(image, spec), inverse(spec)) from `image` on the interior.

    The interior is where the same round trip keeps an all-ones image at 1, i.e. where
    no border fill leaked in.
    """
    image = np.asarray(image, dtype=np.float64)
    inverse = inverse_spec(spec, image.shape)
    round_trip = apply_transform(apply_transform(image, spec), inverse)
    ones = np.ones_like(image)
    coverage = apply_transform(apply_transform(ones, spec), inverse)
    interior = coverage >= 1.0 - 1e-9
    if not interior.any():
        return 0.0
    return float(np.max(np.abs(round_trip - image)[interior]))


def stable_draw_index(sample_id: str) -> int:
    """64-bit draw index for a sample, identical in every run and every subset."""
    return int.from_bytes(hashlib.sha256(sample_id.encode("utf-8")).digest()[:8], "big")


def _corner_homography(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    # Eight-unknown DLT with h33 fixed to 1.
    system, rhs = [], []
    for (x, y), (u, v) in zip(source, target):
        system.append([x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y])
        system.append([0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y])
        rhs.extend([u, v])
    try:
        h = np.linalg.solve(np.array(system), np.array(rhs))
    except np.linalg.LinAlgError:
        raise TransformError("jittered corners do not define a homography.")
    return np.append(h, 1.0).reshape(3, 3)


def choice(policy: TransformPolicy, draw_index: int, shape: Sequence[int]) -> TransformSpec:
    """Draw one spec. A pure function of (policy.seed, draw_index) for a given policy and shape."""
    if not policy.kinds:
        raise TransformError("transform policy enables no kinds.")
    rng = np.random.default_rng([policy.seed, draw_index % 2**64])
    kind = policy.kinds[int(rng.integers(len(policy.kinds)))]
    height, width = float(shape[0]), float(shape[1])

    def uniform(bounds: tuple[float, float], scale: float = 1.0) -> float:
        return float(rng.uniform(bounds[0], bounds[1])) * scale

    if kind is TransformKind.PAN:
        return PanSpec(dx=uniform(policy.pan_fraction, width), dy=uniform(policy.pan_fraction, height))
    if kind is TransformKind.ROTATE2D:
        return RotateSpec(angle=uniform(policy.rotate_degrees))
    if kind is TransformKind.AFFINE:
        linear = np.eye(2) + np.array(
            [[uniform(policy.affine_linear) for _ in range(2)] for _ in range(2)]
        )
        shift = np.array(
            [uniform(policy.affine_shift_fraction, width), uniform(policy.affine_shift_fraction, height)]
        )
        # Perturb about the image centre so the content stays in frame.
        centre = np.array([width / 2.0, height / 2.0])
        offset = centre - linear @ centre + shift
        matrix = np.hstack([linear, offset[:, np.newaxis]])
        return AffineSpec(matrix=tuple(tuple(float(v) for v in row) for row in matrix))
    corners = np.array([[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]])
    jitter = np.array(
        [
            [uniform(policy.perspective_fraction, width), uniform(policy.perspective_fraction, height)]
            for _ in range(4)
        ]
    )
    matrix = _corner_homography(corners, corners + jitter)
    return PerspectiveSpec(matrix=tuple(tuple(float(v) for v in row) for row in matrix))
