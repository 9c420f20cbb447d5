"""
Tests for the photo-link rectangle detector
"""

import math

import numpy as np
import pytest

from src.detectors.shape_detector import (
    BinaryImage,
    Quadrilateral,
    binarize,
    connected_components,
    detect_rectangles,
    is_rectangle,
    min_area_rectangle,
    order_corners,
    otsu_threshold,
    simplify_polygon,
    trace_boundary,
)
from src.simulator import PastedRect, polygon_mask
from src.tools.frame_io import GrayFrame
from src.utils.config_loader import ShapeParams
from src.utils.regions import EventKind, RoiRegion

WALL = 200
PHOTO = 40


def photo_roi(rect=(20, 10, 120, 100)):
    return RoiRegion(id=3, kind=EventKind.PHOTO_LINK, rect=rect)


def wall_with(mask, offset=(0, 0), width=160, height=120):
    """Paint mask (a local patch) onto a bright wall at offset."""
    pixels = np.full((height, width), WALL, dtype=np.uint8)
    ox, oy = offset
    region = pixels[oy : oy + mask.shape[0], ox : ox + mask.shape[1]]
    region[mask] = PHOTO
    return GrayFrame(pixels)


def rotated_rect_patch(angle, size=70):
    """A 44x32 rectangle rotated about the center of a size x size patch."""
    rect = PastedRect(name="photo", intensity=PHOTO, rect=(13, 19, 44, 32), angle=angle)
    return polygon_mask(size, size, rect.corners())


def distance_to_polygon(point, polygon):
    best = math.inf
    p = np.asarray(point, dtype=np.float64)
    for k in range(len(polygon)):
        a = np.asarray(polygon[k], dtype=np.float64)
        b = np.asarray(polygon[(k + 1) % len(polygon)], dtype=np.float64)
        ab = b - a
        length2 = float(ab @ ab)
        t = 0.0 if length2 == 0.0 else min(max(float((p - a) @ ab) / length2, 0.0), 1.0)
        best = min(best, float(np.hypot(*(p - (a + t * ab)))))
    return best


def triangle_area(corners):
    (ax, ay), (bx, by), (cx, cy) = corners
    return abs((bx - ax) * (cy - ay) - (cx - ax) * (by - ay)) / 2.0


def min_angle(corners):
    """Smallest interior angle in degrees."""
    angles = []
    for k in range(3):
        a, b, c = (np.asarray(corners[(k + j) % 3], dtype=np.float64) for j in range(3))
        u, v = b - a, c - a
        cosine = float(u @ v) / (np.hypot(*u) * np.hypot(*v))
        angles.append(math.degrees(math.acos(min(max(cosine, -1.0), 1.0))))
    return min(angles)


class TestBinarize:
    """Tests for Otsu binarization with the minority rule."""

    def test_minority_dark_class(self):
        """Test 10% value-30 pixels on a value-200 ROI are the foreground."""
        pixels = np.full((10, 10), 200, dtype=np.uint8)
        pixels[2, :] = 30
        image = binarize(GrayFrame(pixels), photo_roi((0, 0, 10, 10)))
        assert np.array_equal(image.bits, pixels == 30)

    def test_minority_bright_class(self):
        """Test bright specks on a dark wall are the foreground."""
        pixels = np.full((10, 10), 20, dtype=np.uint8)
        pixels[4:6, 4:6] = 240
        image = binarize(GrayFrame(pixels), photo_roi((0, 0, 10, 10)))
        assert np.array_equal(image.bits, pixels == 240)

    def test_uniform_roi_is_empty(self):
        """Test a single-valued ROI gives an empty image."""
        uniform = GrayFrame(np.full((10, 10), 90, dtype=np.uint8))
        image = binarize(uniform, photo_roi((0, 0, 10, 10)))
        assert image.count() == 0
        assert otsu_threshold(np.full((3, 3), 90, dtype=np.uint8)) is None

    def test_even_split_goes_dark(self):
        """Test a half 0, half 255 ROI marks the dark half."""
        pixels = np.zeros((10, 10), dtype=np.uint8)
        pixels[:, 5:] = 255
        image = binarize(GrayFrame(pixels), photo_roi((0, 0, 10, 10)))
        assert np.array_equal(image.bits, pixels == 0)

    def test_origin_is_roi_corner(self):
        """Test the binary image remembers where the ROI sits."""
        frame = wall_with(np.ones((3, 3), dtype=bool), (40, 30))
        image = binarize(frame, photo_roi())
        assert image.origin == (20, 10)
        assert image.width == 120 and image.height == 100


class TestConnectedComponents:
    """Tests for 8-connected labeling and boundary tracing."""

    def test_empty(self):
        """Test an empty image has no blobs."""
        assert connected_components(BinaryImage(np.zeros((5, 5), dtype=bool))) == []

    def test_two_squares(self):
        """Test two disjoint 3x3 squares."""
        bits = np.zeros((10, 10), dtype=bool)
        bits[1:4, 1:4] = True
        bits[6:9, 5:8] = True
        blobs = connected_components(BinaryImage(bits))
        assert [b.area for b in blobs] == [9, 9]

    def test_diagonal_is_one_blob(self):
        """Test corner-touching pixels join under 8-connectivity."""
        blobs = connected_components(BinaryImage(np.eye(6, dtype=bool)))
        assert len(blobs) == 1
        assert blobs[0].area == 6

    def test_labels_partition_pixels(self):
        """Test blob areas add up to the set-pixel count."""
        rng = np.random.default_rng(4)
        bits = rng.random((30, 30)) < 0.3
        blobs = connected_components(BinaryImage(bits))
        assert sum(b.area for b in blobs) == int(bits.sum())

    def test_contour_in_frame_coordinates(self):
        """Test contours start at the top-left-most pixel, offset by the origin."""
        bits = np.zeros((10, 10), dtype=bool)
        bits[2:5, 3:7] = True
        (blob,) = connected_components(BinaryImage(bits, origin=(100, 50)))
        assert blob.contour[0] == (103, 52)
        assert blob.bbox == (103, 52, 4, 3)
        assert set(blob.contour) == {
            (x + 100, y + 50)
            for y in range(2, 5)
            for x in range(3, 7)
            if y in (2, 4) or x in (3, 6)
        }

    def test_single_pixel_contour(self):
        """Test an isolated pixel traces to itself."""
        bits = np.zeros((3, 3), dtype=bool)
        bits[1, 1] = True
        assert trace_boundary(bits) == [(1, 1)]


class TestSimplifyPolygon:
    """Tests for Douglas-Peucker on closed contours."""

    def rectangle_contour(self):
        bits = np.zeros((40, 50), dtype=bool)
        bits[5:35, 5:45] = True
        return trace_boundary(bits)

    def triangle_contour(self):
        corners = np.array([[10.0, 10.0], [70.0, 10.0], [40.0, 60.0]])
        return trace_boundary(polygon_mask(80, 80, corners))

    def test_rectangle_corners(self):
        """Test a 40x30 rectangle reduces to its four corners."""
        polygon = simplify_polygon(self.rectangle_contour(), 2.0)
        assert set(polygon) == {(5, 5), (44, 5), (44, 34), (5, 34)}

    def test_triangle(self):
        """Test a triangle reduces to three vertices."""
        assert len(simplify_polygon(self.triangle_contour(), 2.5)) == 3

    def test_huge_epsilon(self):
        """Test everything within epsilon collapses to two points."""
        assert len(simplify_polygon(self.rectangle_contour(), 100.0)) == 2

    def test_repeated_point_keeps_endpoints(self):
        """Test a contour of one repeated point returns its two endpoints."""
        assert simplify_polygon([(4, 7)] * 5, 1.0) == [(4, 7), (4, 7)]

    @pytest.mark.parametrize("epsilon", [1.0, 2.0, 4.0])
    def test_dropped_points_within_epsilon(self, epsilon):
        """Test no dropped contour point lies farther than epsilon from the result."""
        corners = PastedRect(name="r", intensity=0, rect=(20, 25, 40, 24), angle=20.0).corners()
        contour = trace_boundary(polygon_mask(80, 80, corners))
        polygon = simplify_polygon(contour, epsilon)
        assert set(polygon) <= set(contour)
        for point in contour:
            assert distance_to_polygon(point, polygon) <= epsilon + 1e-9


class TestIsRectangle:
    """Tests for the rectangle acceptance rule."""

    def test_axis_aligned(self):
        """Test a filled axis-aligned rectangle."""
        corners = [(0, 0), (39, 0), (39, 29), (0, 29)]
        assert min_area_rectangle(corners) == pytest.approx(39 * 29)
        assert is_rectangle(corners, ShapeParams(), 1200)

    def test_rotated_square(self):
        """Test a filled square turned 45 degrees."""
        corners = [(20, 0), (40, 20), (20, 40), (0, 20)]
        area = int(polygon_mask(41, 41, np.array(corners, dtype=np.float64)).sum())
        assert is_rectangle(corners, ShapeParams(), area)

    def test_wrong_vertex_count(self):
        """Test triangles and pentagons are rejected."""
        assert not is_rectangle([(0, 0), (10, 0), (5, 8)], ShapeParams(), 40)
        assert not is_rectangle([(0, 0), (10, 0), (12, 6), (5, 10), (-2, 6)], ShapeParams(), 100)

    def test_skewed_parallelogram(self):
        """Test 60 degree corners fail the angle check."""
        corners = [(0, 0), (30, 0), (40, 17), (10, 17)]
        assert not is_rectangle(corners, ShapeParams(), 510)

    def test_low_fill(self):
        """Test an outline-like blob fails the fill ratio."""
        corners = [(0, 0), (39, 0), (39, 29), (0, 29)]
        assert not is_rectangle(corners, ShapeParams(), 500)

    def test_non_convex(self):
        """Test a self-crossing quadrilateral is rejected."""
        corners = [(0, 0), (30, 30), (30, 0), (0, 30)]
        assert not is_rectangle(corners, ShapeParams(angle_tolerance=44.0), 900)


class TestOrderCorners:
    """Tests for corner ordering."""

    def test_counter_clockwise_from_top_left(self):
        """Test clockwise input comes back counter-clockwise as displayed."""
        clockwise = [(44, 5), (44, 34), (5, 34), (5, 5)]
        assert order_corners(clockwise) == ((5, 5), (5, 34), (44, 34), (44, 5))

    def test_bbox(self):
        """Test the inclusive bounding box of a quadrilateral."""
        quad = Quadrilateral(((5, 5), (5, 34), (44, 34), (44, 5)))
        assert quad.bbox == (5, 5, 40, 30)


class TestDetectRectangles:
    """Tests for the full detection pipeline."""

    def test_pasted_photo(self):
        """Test a dark 40x30 photo on a bright wall yields its corners."""
        mask = np.zeros((30, 40), dtype=bool)
        mask[:] = True
        found = detect_rectangles(wall_with(mask, (50, 40)), photo_roi(), ShapeParams())
        assert len(found) == 1
        expected = ((50, 40), (50, 69), (89, 69), (89, 40))
        for got, want in zip(found[0].corners, expected):
            assert math.dist(got, want) <= 2.0

    def test_blank_wall(self):
        """Test an empty wall has no rectangles."""
        blank = wall_with(np.zeros((1, 1), dtype=bool))
        assert detect_rectangles(blank, photo_roi(), ShapeParams()) == []

    def test_below_area_gate(self):
        """Test a photo smaller than the area fraction is ignored."""
        small = np.ones((10, 10), dtype=bool)
        assert detect_rectangles(wall_with(small, (60, 50)), photo_roi(), ShapeParams()) == []

    @pytest.mark.parametrize("angle", [0.0, 15.0, 30.0, 45.0])
    @pytest.mark.parametrize("offset", [(22, 12), (35, 20), (50, 28), (60, 35), (68, 38)])
    def test_rotations_detected(self, angle, offset):
        """Test rotated photos are found near their true position."""
        found = detect_rectangles(
            wall_with(rotated_rect_patch(angle), offset), photo_roi(), ShapeParams()
        )
        assert len(found) == 1
        center = np.mean(np.asarray(found[0].corners, dtype=np.float64), axis=0)
        assert math.dist(center, (offset[0] + 34.5, offset[1] + 34.5)) <= 2.0

    @pytest.mark.parametrize("angle", [0.0, 30.0])
    def test_translation_shifts_corners(self, angle):
        """Test an integer shift moves every corner by the same amount."""
        patch = rotated_rect_patch(angle)
        first = detect_rectangles(wall_with(patch, (25, 15)), photo_roi(), ShapeParams())
        second = detect_rectangles(wall_with(patch, (32, 24)), photo_roi(), ShapeParams())
        assert len(first) == len(second) == 1
        shifted = tuple((x + 7, y + 9) for x, y in first[0].corners)
        assert second[0].corners == shifted

    @pytest.mark.parametrize("radius", [12, 20, 30])
    def test_disks_rejected(self, radius):
        """Test filled disks are never rectangles."""
        ys, xs = np.mgrid[0:70, 0:70]
        disk = (xs - 34.5) ** 2 + (ys - 34.5) ** 2 <= radius**2
        assert detect_rectangles(wall_with(disk, (40, 30)), photo_roi(), ShapeParams()) == []

    @pytest.mark.parametrize(
        "corners",
        [
            [[10.0, 10.0], [60.0, 10.0], [35.0, 55.0]],
            [[5.0, 60.0], [35.0, 5.0], [65.0, 60.0]],
            [[10.0, 10.0], [60.0, 30.0], [15.0, 60.0]],
        ],
    )
    def test_triangles_rejected(self, corners):
        """Test filled triangles are never rectangles."""
        triangle = polygon_mask(70, 70, np.array(corners))
        assert detect_rectangles(wall_with(triangle, (40, 30)), photo_roi(), ShapeParams()) == []

    def test_debug_dump(self, tmp_path):
        """Test a debug directory receives one image per call."""
        params = ShapeParams(debug_dir=tmp_path)
        detect_rectangles(wall_with(np.ones((30, 40), dtype=bool), (50, 40)), photo_roi(), params)
        assert (tmp_path / "shape_0.pgm").exists()


class TestRandomPlacements:
    """Seeded random photos, disks and triangles anywhere in the ROI."""

    @staticmethod
    def offset(rng):
        return int(rng.integers(20, 71)), int(rng.integers(10, 41))

    @pytest.mark.parametrize("seed", range(20))
    def test_rectangle_corners(self, seed):
        """Test every ordered corner of a random rotated photo is within 2 px."""
        rng = np.random.default_rng(seed)
        w, h = 2 * int(rng.integers(18, 25)), 2 * int(rng.integers(13, 19))
        rect = PastedRect(
            name="photo",
            intensity=PHOTO,
            rect=(35 - w // 2, 35 - h // 2, w, h),
            angle=float(rng.uniform(0.0, 45.0)),
        )
        ox, oy = self.offset(rng)
        frame = wall_with(polygon_mask(70, 70, rect.corners()), (ox, oy))
        found = detect_rectangles(frame, photo_roi(), ShapeParams())
        assert len(found) == 1

        truth = order_corners([(x + ox, y + oy) for x, y in rect.corners()])
        errors = [
            max(math.dist(found[0].corners[k], truth[(k + shift) % 4]) for k in range(4))
            for shift in range(4)
        ]
        assert min(errors) <= 2.0

    @pytest.mark.parametrize("seed", range(20))
    def test_disks_rejected(self, seed):
        """Test a random disk is never reported."""
        rng = np.random.default_rng(100 + seed)
        radius = int(rng.integers(10, 31))
        ys, xs = np.mgrid[0:70, 0:70]
        disk = (xs - 34.5) ** 2 + (ys - 34.5) ** 2 <= radius**2
        frame = wall_with(disk, self.offset(rng))
        assert detect_rectangles(frame, photo_roi(), ShapeParams()) == []

    @pytest.mark.parametrize("seed", range(20))
    def test_triangles_rejected(self, seed):
        """Test a random well-shaped triangle is never reported."""
        rng = np.random.default_rng(200 + seed)
        while True:
            corners = rng.uniform(5.0, 65.0, (3, 2))
            if triangle_area(corners) >= 600.0 and min_angle(corners) >= 25.0:
                break
        frame = wall_with(polygon_mask(70, 70, corners), self.offset(rng))
        assert detect_rectangles(frame, photo_roi(), ShapeParams()) == []
