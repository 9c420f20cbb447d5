"""
Rectangle detector for the photo-link area

Binarizes the ROI with Otsu's threshold (minority class as foreground),
labels 8-connected blobs, traces each outer boundary, simplifies it with
Douglas-Peucker and keeps the simplified polygons that look like a filled
rectangle.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from ..tools.frame_io import GrayFrame, write_frame_file
from ..utils.config_loader import ShapeParams
from ..utils.regions import RoiRegion

logger = logging.getLogger(__name__)

Point = Tuple[int, int]

# clockwise as displayed (y grows downward), starting West
_NEIGHBORS: Tuple[Point, ...] = (
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
)
_DIRECTION = {offset: i for i, offset in enumerate(_NEIGHBORS)}
_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Binarized ROI; origin is the ROI's top-left corner in frame coordinates."""

    bits: np.ndarray
    origin: Point = (0, 0)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(np.count_nonzero(self.bits))


@dataclass(frozen=True)
class Blob:
    label: int
    area: int
    bbox: Tuple[int, int, int, int]
    contour: Tuple[Point, ...]


@dataclass(frozen=True)
class Quadrilateral:
    """Four corners in frame coordinates, counter-clockwise as displayed."""

    corners: Tuple[Point, Point, Point, Point]

    @property
    def bbox(self) -> Tuple[int, int, int, int]:
        xs = [p[0] for p in self.corners]
        ys = [p[1] for p in self.corners]
        return min(xs), min(ys), max(xs) - min(xs) + 1, max(ys) - min(ys) + 1


def otsu_threshold(values: np.ndarray) -> Optional[int]:
    """
    Otsu's global threshold over 8-bit values.

    Returns:
        The largest value of the dark class, or None for a single-valued input
    """
    hist = np.bincount(values.ravel(), minlength=256).astype(np.int64)
    n = int(hist.sum())
    levels = np.arange(256, dtype=np.int64)
    w0 = np.cumsum(hist)
    s0 = np.cumsum(hist * levels)
    total = int(s0[-1])

    valid = (w0 > 0) & (w0 < n)
    if not valid.any():
        return None
    diff = (total * w0 - n * s0).astype(np.float64)
    denominator = np.where(valid, w0 * (n - w0), 1).astype(np.float64)
    between = np.where(valid, diff * diff / denominator, -1.0)
    return int(np.argmax(between))


def binarize(gray: GrayFrame, roi: RoiRegion) -> BinaryImage:
    """
    Threshold the ROI and mark its minority class.

    Ties go to the dark class; a single-valued ROI yields an empty image.

    Raises:
        RegionError: ROI is not within the frame
    """
    roi.require_within(gray.width, gray.height)
    values = gray.pixels[roi.slices()]
    threshold = otsu_threshold(values)
    if threshold is None:
        return BinaryImage(np.zeros(values.shape, dtype=bool), (roi.x, roi.y))
    dark = values <= threshold
    dark_count = int(np.count_nonzero(dark))
    bits = dark if dark_count <= values.size - dark_count else ~dark
    return BinaryImage(bits, (roi.x, roi.y))


def trace_boundary(mask: np.ndarray) -> List[Point]:
    """
    Moore-neighbor trace of the outer boundary of a single 8-connected blob.

    Starts at the raster-first pixel with the West neighbor as backtrack and
    stops when the start pixel is about to be left the same way it was first
    left. Points are (x, y) in mask coordinates.
    """
    padded = np.pad(mask.astype(bool), 1, constant_values=False)
    rows, cols = np.nonzero(padded)
    if rows.size == 0:
        return []
    start = (int(cols[0]), int(rows[0]))

    contour = [start]
    p, back = start, 0
    limit = 4 * rows.size + 8
    while len(contour) <= limit:
        found: Optional[Tuple[Point, int]] = None
        for i in range(1, 9):
            d = (back + i) % 8
            q = (p[0] + _NEIGHBORS[d][0], p[1] + _NEIGHBORS[d][1])
            if padded[q[1], q[0]]:
                prev = _NEIGHBORS[(back + i - 1) % 8]
                checked = (p[0] + prev[0], p[1] + prev[1])
                found = (q, _DIRECTION[(checked[0] - q[0], checked[1] - q[1])])
                break
        if found is None:
            break
        q, back = found
        if p == start and len(contour) > 1 and q == contour[1]:
            contour.pop()
            break
        contour.append(q)
        p = q
    return [(x - 1, y - 1) for x, y in contour]


def connected_components(image: BinaryImage) -> List[Blob]:
    """Label 8-connected blobs and trace their contours in frame coordinates."""
    labels, count = ndimage.label(image.bits, structure=_EIGHT_CONNECTED)
    if count == 0:
        return []

    ox, oy = image.origin
    blobs = []
    for label, window in enumerate(ndimage.find_objects(labels), start=1):
        if window is None:
            continue
        rows, cols = window
        sub = labels[window] == label
        contour = tuple((x + cols.start + ox, y + rows.start + oy) for x, y in trace_boundary(sub))
        blobs.append(
            Blob(
                label=label,
                area=int(np.count_nonzero(sub)),
                bbox=(cols.start + ox, rows.start + oy, sub.shape[1], sub.shape[0]),
                contour=contour,
            )
        )
    return blobs


def _segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    length2 = float(ab @ ab)
    if length2 == 0.0:
        return np.hypot(*(points - a).T)
    t = np.clip(((points - a) @ ab) / length2, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.hypot(*(points - closest).T)


def _simplify_open(points: np.ndarray, epsilon: float) -> List[int]:
    keep = [0, len(points) - 1]
    stack = [(0, len(points) - 1)]
    while stack:
        first, last = stack.pop()
        if last - first < 2:
            continue
        inner = points[first + 1 : last]
        distances = _segment_distance(inner, points[first], points[last])
        k = int(np.argmax(distances))
        if distances[k] > epsilon:
            split = first + 1 + k
            keep.append(split)
            stack.append((first, split))
            stack.append((split, last))
    return sorted(set(keep))


def simplify_polygon(contour: Sequence[Point], epsilon: float) -> List[Point]:
    """
    Douglas-Peucker simplification of a closed contour.

    The contour is split at its two most distant points and each half is
    simplified as an open chain; collinear input collapses to two points and
    a contour of one repeated point keeps its two endpoints.
    """
    if len(contour) < 3:
        return list(contour)
    points = np.asarray(contour, dtype=np.float64)
    deltas = points[:, None, :] - points[None, :, :]
    distance2 = (deltas * deltas).sum(axis=-1)
    i, j = divmod(int(np.argmax(distance2)), len(points))
    if distance2[i, j] == 0.0:
        return [tuple(contour[0]), tuple(contour[-1])]
    i, j = min(i, j), max(i, j)

    first = np.arange(i, j + 1)
    second = np.concatenate([np.arange(j, len(points)), np.arange(0, i + 1)])
    kept_first = [first[k] for k in _simplify_open(points[first], epsilon)]
    kept_second = [second[k] for k in _simplify_open(points[second], epsilon)]
    indices = kept_first[:-1] + kept_second[:-1]
    if len(indices) < 2:
        indices = [i, j]
    return [tuple(contour[k]) for k in indices]


def _signed_area2(polygon: Sequence[Point]) -> float:
    total = 0.0
    for k, (x1, y1) in enumerate(polygon):
        x2, y2 = polygon[(k + 1) % len(polygon)]
        total += x1 * y2 - x2 * y1
    return total


def min_area_rectangle(polygon: Sequence[Point]) -> float:
    """Area of the smallest rectangle enclosing a convex polygon, any orientation."""
    points = np.asarray(polygon, dtype=np.float64)
    best = math.inf
    for k in range(len(points)):
        edge = points[(k + 1) % len(points)] - points[k]
        length = math.hypot(edge[0], edge[1])
        if length == 0.0:
            continue
        u = edge / length
        v = np.array([-u[1], u[0]])
        along = points @ u
        across = points @ v
        best = min(best, float((along.max() - along.min()) * (across.max() - across.min())))
    return 0.0 if math.isinf(best) else best


def is_rectangle(polygon: Sequence[Point], params: ShapeParams, blob_area: int) -> bool:
    """Four vertices, convex, near-right angles and a high fill ratio."""
    if len(polygon) != 4:
        return False

    crosses = []
    for k in range(4):
        p0, p1, p2 = polygon[k - 1], polygon[k], polygon[(k + 1) % 4]
        a = (p0[0] - p1[0], p0[1] - p1[1])
        b = (p2[0] - p1[0], p2[1] - p1[1])
        la, lb = math.hypot(*a), math.hypot(*b)
        if la == 0.0 or lb == 0.0:
            return False
        crosses.append(a[0] * b[1] - a[1] * b[0])
        cosine = max(-1.0, min(1.0, (a[0] * b[0] + a[1] * b[1]) / (la * lb)))
        if abs(math.degrees(math.acos(cosine)) - 90.0) > params.angle_tolerance:
            return False
    if not (all(c > 0 for c in crosses) or all(c < 0 for c in crosses)):
        return False

    enclosing = min_area_rectangle(polygon)
    if enclosing <= 0.0:
        return False
    return blob_area / enclosing >= params.fill_ratio_min


def order_corners(polygon: Sequence[Point]) -> Tuple[Point, Point, Point, Point]:
    """Counter-clockwise as displayed, starting from the top-left-most corner."""
    corners = [tuple(p) for p in polygon]
    if _signed_area2(corners) > 0:
        corners.reverse()
    start = min(range(len(corners)), key=lambda k: (corners[k][1], corners[k][0]))
    ordered = corners[start:] + corners[:start]
    return tuple(ordered)  # type: ignore[return-value]


def detect_rectangles(gray: GrayFrame, roi: RoiRegion, params: ShapeParams) -> List[Quadrilateral]:
    """
    Find rectangle-shaped blobs inside the ROI.

    Returns:
        Quadrilaterals in frame coordinates, in blob label order
    """
    image = binarize(gray, roi)
    min_area = params.min_area_fraction * roi.area
    found: List[Quadrilateral] = []
    polygons: List[List[Point]] = []

    for blob in connected_components(image):
        if blob.area < min_area:
            continue
        epsilon = params.dp_epsilon_fraction * len(blob.contour)
        polygon = simplify_polygon(blob.contour, epsilon)
        polygons.append(polygon)
        if is_rectangle(polygon, params, blob.area):
            found.append(Quadrilateral(order_corners(polygon)))
        else:
            logger.debug(f"Blob {blob.label} (area {blob.area}) rejected: {len(polygon)} vertices")

    if params.debug_dir is not None:
        _dump_debug(image, polygons, Path(params.debug_dir), gray.timestamp)
    return found


def _dump_debug(
    image: BinaryImage, polygons: List[List[Point]], debug_dir: Path, timestamp: int
) -> None:
    debug_dir.mkdir(parents=True, exist_ok=True)
    pixels = np.where(image.bits, 255, 0).astype(np.uint8)
    ox, oy = image.origin
    for polygon in polygons:
        for x, y in polygon:
            pixels[y - oy, x - ox] = 128
    write_frame_file(GrayFrame(pixels, timestamp), debug_dir / f"shape_{timestamp}.pgm")
