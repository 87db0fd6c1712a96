"""
Oriented boxes, point containment, hulls and rotated IoU.

Conventions: ``l`` runs along the heading (yaw=0 puts it on +x), ``w`` is
lateral, ``h`` vertical; yaw lives in (-pi, pi]. Everything is float64.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .exceptions import DegenerateHull, InvalidBox

# Closed containment slack in meters. Surface samples stored as float32 are
# off their face by ~1e-6 m; this keeps them inside their own box.
SURFACE_TOLERANCE = 1e-4

# on-edge classification for polygon clipping
CLIP_EPS = 1e-12

# relative singular-value floor below which a point set counts as collinear
COLLINEAR_RTOL = 1e-9


def normalize_yaw(yaw):
    """Map an angle into (-pi, pi]."""
    yaw = math.fmod(float(yaw), 2.0 * math.pi)
    if yaw <= -math.pi:
        yaw += 2.0 * math.pi
    elif yaw > math.pi:
        yaw -= 2.0 * math.pi
    return yaw


@dataclass(frozen=True)
class OrientedBox3:
    cx: float
    cy: float
    cz: float
    l: float
    w: float
    h: float
    yaw: float = 0.0

    def __post_init__(self):
        values = (self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw)
        if not all(math.isfinite(v) for v in values):
            raise InvalidBox(f"non-finite box field in {values}")
        if self.l <= 0 or self.w <= 0 or self.h <= 0:
            raise InvalidBox(f"box extents must be positive, got l={self.l} w={self.w} h={self.h}")
        for name in ('cx', 'cy', 'cz', 'l', 'w', 'h'):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, 'yaw', normalize_yaw(self.yaw))

    @classmethod
    def from_array(cls, values):
        cx, cy, cz, l, w, h, yaw = (float(v) for v in values)
        return cls(cx, cy, cz, l, w, h, yaw)

    def as_list(self):
        """[cx, cy, cz, l, w, h, yaw], the order every file format uses."""
        return [self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw]

    @property
    def center_xy(self):
        return self.cx, self.cy

    @property
    def z_min(self):
        return self.cz - self.h / 2

    @property
    def z_max(self):
        return self.cz + self.h / 2

    @property
    def bev_area(self):
        return self.l * self.w

    @property
    def volume(self):
        return self.l * self.w * self.h

    @property
    def bev_radius(self):
        """Half diagonal of the footprint."""
        return 0.5 * math.hypot(self.l, self.w)

    def corners_bev(self):
        """Footprint corners, counter-clockwise, shape (4, 2)."""
        hl, hw = self.l / 2, self.w / 2
        local = np.array([[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.cx, self.cy])

    def to_local(self, points):
        """Express world points (N, 2+) in the box frame, same column count."""
        pts = np.asarray(points, dtype=np.float64)
        out = np.array(pts, dtype=np.float64, copy=True)
        dx = pts[:, 0] - self.cx
        dy = pts[:, 1] - self.cy
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        out[:, 0] = c * dx + s * dy
        out[:, 1] = -s * dx + c * dy
        if pts.shape[1] > 2:
            out[:, 2] = pts[:, 2] - self.cz
        return out

    def replace(self, **changes):
        values = dict(cx=self.cx, cy=self.cy, cz=self.cz, l=self.l, w=self.w, h=self.h, yaw=self.yaw)
        values.update(changes)
        return OrientedBox3(**values)


def _readonly(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PointCloud:
    """World-frame points of one view; ``ground`` flags ground returns."""
    points: np.ndarray
    ground: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 3)
        if not np.isfinite(pts).all():
            raise ValueError("point cloud holds non-finite coordinates")
        if self.ground is None:
            ground = np.zeros(len(pts), dtype=bool)
        else:
            ground = np.array(self.ground, dtype=bool, copy=True).reshape(-1)
            if len(ground) != len(pts):
                raise ValueError(f"ground mask has {len(ground)} entries for {len(pts)} points")
        object.__setattr__(self, 'points', _readonly(pts))
        object.__setattr__(self, 'ground', _readonly(ground))

    def __len__(self):
        return len(self.points)

    def objects(self):
        """Non-ground points, shape (N, 3)."""
        if not self.ground.any():
            return self.points
        return self.points[~self.ground]

    def with_points(self, points):
        return PointCloud(points, self.ground)


@dataclass(frozen=True, eq=False)
class Polygon2:
    vertices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'vertices', _readonly(np.array(self.vertices, dtype=np.float64).reshape(-1, 2)))

    def __len__(self):
        return len(self.vertices)

    @property
    def area(self):
        return polygon_area(self.vertices)


def points_in_box(points, box, bev=False):
    """Boolean mask of points (N, 3) inside ``box``; ``bev`` ignores z."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return np.zeros(0, dtype=bool)
    local = box.to_local(pts)
    tol = SURFACE_TOLERANCE
    inside = (np.abs(local[:, 0]) <= box.l / 2 + tol) & (np.abs(local[:, 1]) <= box.w / 2 + tol)
    if not bev:
        inside &= np.abs(local[:, 2]) <= box.h / 2 + tol
    return inside


def point_in_box(p, box):
    return bool(points_in_box(np.asarray(p, dtype=np.float64).reshape(1, 3), box)[0])


def scale_box(box, factor):
    """Grow (factor > 0) or shrink the footprint; height and pose stay put."""
    factor = float(factor)
    if not factor > -1.0:
        raise InvalidBox(f"scale factor must exceed -1, got {factor}")
    return box.replace(l=box.l * (1.0 + factor), w=box.w * (1.0 + factor))


def polygon_area(vertices):
    """Signed shoelace area; positive for counter-clockwise input."""
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 2)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _is_collinear(pts):
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return sv[0] == 0.0 or sv[-1] <= COLLINEAR_RTOL * sv[0]


def convex_hull_2d(points):
    """
    Convex hull of 2D points as a CCW polygon of extreme points only.

    Raises DegenerateHull for fewer than three distinct points or collinear
    input; callers decide what a missing hull means.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts):
        pts = np.unique(pts, axis=0)
    if len(pts) < 3 or _is_collinear(pts):
        raise DegenerateHull(f"{len(pts)} distinct point(s) do not span a polygon")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateHull(str(exc).splitlines()[0]) from exc
    # qhull lists 2D hull vertices counter-clockwise
    return Polygon2(pts[hull.vertices])


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def clip_convex(subject, clip):
    """Sutherland-Hodgman: part of convex ``subject`` inside convex CCW ``clip``."""
    output = [tuple(p) for p in np.asarray(subject, dtype=np.float64)]
    clip = [tuple(p) for p in np.asarray(clip, dtype=np.float64)]
    for i in range(len(clip)):
        if not output:
            break
        a, b = clip[i], clip[(i + 1) % len(clip)]
        candidates, output = output, []
        prev = candidates[-1]
        prev_side = _cross(a, b, prev)
        for cur in candidates:
            cur_side = _cross(a, b, cur)
            if cur_side >= -CLIP_EPS:
                if prev_side < -CLIP_EPS:
                    output.append(_segment_line_hit(prev, cur, prev_side, cur_side))
                output.append(cur)
            elif prev_side >= -CLIP_EPS:
                output.append(_segment_line_hit(prev, cur, prev_side, cur_side))
            prev, prev_side = cur, cur_side
    return np.array(output, dtype=np.float64).reshape(-1, 2)


def _segment_line_hit(p, q, side_p, side_q):
    t = side_p / (side_p - side_q)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def bev_intersection_area(a, b):
    if math.hypot(a.cx - b.cx, a.cy - b.cy) >= a.bev_radius + b.bev_radius:
        return 0.0
    overlap = clip_convex(a.corners_bev(), b.corners_bev())
    return max(polygon_area(overlap), 0.0)


def _ratio(inter, total_a, total_b):
    union = total_a + total_b - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def bev_iou(a, b):
    return _ratio(bev_intersection_area(a, b), a.bev_area, b.bev_area)


def iou_3d(a, b):
    dz = min(a.z_max, b.z_max) - max(a.z_min, b.z_min)
    if dz <= 0.0:
        return 0.0
    return _ratio(bev_intersection_area(a, b) * dz, a.volume, b.volume)


def footprints_overlap(a, b):
    return bev_intersection_area(a, b) > 0.0


def rigid_transform_xy(points, dx, dy, dyaw=0.0, pivot=(0.0, 0.0)):
    """Rotate points (N, 3) by ``dyaw`` about ``pivot`` in BEV, then shift by (dx, dy)."""
    pts = np.array(points, dtype=np.float64, copy=True).reshape(-1, 3)
    if dyaw:
        c, s = math.cos(dyaw), math.sin(dyaw)
        x = pts[:, 0] - pivot[0]
        y = pts[:, 1] - pivot[1]
        pts[:, 0] = c * x - s * y + pivot[0]
        pts[:, 1] = s * x + c * y + pivot[1]
    pts[:, 0] += dx
    pts[:, 1] += dy
    return pts
