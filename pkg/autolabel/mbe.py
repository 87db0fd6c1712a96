"""
Multi-scale bounding-box encoding.

Per label and per view: the collision ratio ``r`` (points gained when the
box grows), the boundary occupancy ``o`` (share of hull vertices of the
interior points that sit outside the shrunken box) and the information
confidence ``d`` (inverse squared distance to the observing agent). Views
vote with weights proportional to ``d``; a label is high quality when the
weighted ``r`` stays under ``phi_r`` and the weighted ``o`` exceeds ``phi_o``.

``None`` stands for an undefined encoding: no interior points for ``r``, a
degenerate hull for ``o``. Such views abstain.
"""
from dataclasses import dataclass
import logging

import numpy as np

from .exceptions import DegenerateHull
from .geometry import PointCloud, SURFACE_TOLERANCE, convex_hull_2d, points_in_box, scale_box

logger = logging.getLogger(__name__)

HIGH = 'high'
LOW = 'low'


@dataclass(frozen=True)
class EncodingTriple:
    view_id: int
    r: object
    o: object
    d: float
    n_points: int

    def qualifies(self, params):
        if self.n_points < params.n_min or self.r is None:
            return False
        return self.o is not None or not params.use_bae


@dataclass(frozen=True)
class QualityVerdict:
    label_index: int
    verdict: str
    aggregated_r: object
    aggregated_o: object
    per_view: tuple
    # normalized vote weights of the qualifying views, keyed like per_view
    weights: tuple = ()

    @property
    def is_high(self):
        return self.verdict == HIGH


def _object_points(cloud):
    if isinstance(cloud, PointCloud):
        return cloud.objects()
    return np.asarray(cloud, dtype=np.float64).reshape(-1, 3)


def _near(points, box, factor):
    """Cheap radius cut before the exact containment tests."""
    if len(points) == 0:
        return points
    reach = box.bev_radius * (1.0 + max(factor, 0.0)) + 2.0 * SURFACE_TOLERANCE
    d2 = (points[:, 0] - box.cx) ** 2 + (points[:, 1] - box.cy) ** 2
    return points[d2 <= reach * reach]


def encode_cpe(box, cloud, eta_enlarge):
    """(r, n_points): relative growth of the point count when the box grows by ``eta_enlarge``."""
    points = _near(_object_points(cloud), box, eta_enlarge)
    n_inside = int(points_in_box(points, box).sum())
    n_grown = int(points_in_box(points, scale_box(box, eta_enlarge)).sum())
    if n_inside == 0:
        return None, 0
    return (n_grown - n_inside) / n_inside, n_inside


def encode_bae(box, cloud, eta_reduce):
    """Fraction of interior-hull vertices lying outside the box shrunk by ``eta_reduce``."""
    points = _near(_object_points(cloud), box, 0.0)
    interior = points[points_in_box(points, box)]
    try:
        hull = convex_hull_2d(interior[:, :2])
    except DegenerateHull:
        return None
    vertices = np.column_stack([hull.vertices, np.full(len(hull), box.cz)])
    n_inner = int(points_in_box(vertices, scale_box(box, -eta_reduce), bev=True).sum())
    return (len(hull) - n_inner) / len(hull)


def encode_ice(box, agent, epsilon_d):
    agent_box = getattr(agent, 'box', agent)
    dist2 = (agent_box.cx - box.cx) ** 2 + (agent_box.cy - box.cy) ** 2
    return 1.0 / max(dist2, epsilon_d)


def encode_view(box, cloud, agent, params):
    points = _near(_object_points(cloud), box, params.eta_enlarge)
    r, n_points = encode_cpe(box, points, params.eta_enlarge)
    o = encode_bae(box, points, params.eta_reduce) if n_points else None
    d = encode_ice(box, agent, params.epsilon_d)
    return EncodingTriple(agent.agent_id, r, o, d, n_points)


def discriminate(per_view, params, label_index=0):
    per_view = tuple(per_view)
    voters = [t for t in per_view if t.qualifies(params)]
    if not voters:
        return QualityVerdict(label_index, LOW, None, None, per_view)

    if params.use_ice:
        raw = np.array([t.d for t in voters], dtype=np.float64)
    else:
        raw = np.ones(len(voters))
    weights = raw / raw.sum()

    aggregated_r = float(sum(w * t.r for w, t in zip(weights, voters)))
    if all(t.o is not None for t in voters):
        aggregated_o = float(sum(w * t.o for w, t in zip(weights, voters)))
    else:
        aggregated_o = None

    high = True
    if params.use_cpe:
        high &= aggregated_r < params.phi_r
    if params.use_bae:
        high &= aggregated_o is not None and aggregated_o > params.phi_o
    return QualityVerdict(
        label_index,
        HIGH if high else LOW,
        aggregated_r,
        aggregated_o,
        per_view,
        tuple(float(w) for w in weights),
    )


def encode_labels(frame, labels, params):
    """Per-label tuples of per-view encodings; independent of the thresholds."""
    views = [(agent, _object_points(cloud)) for agent, cloud in frame.views()]
    return [
        tuple(encode_view(label.box, points, agent, params) for agent, points in views)
        for label in labels
    ]


def partition(labels, verdicts):
    high = [label for label, v in zip(labels, verdicts) if v.is_high]
    low = [label for label, v in zip(labels, verdicts) if not v.is_high]
    return high, low


def filter_labels(frame, labels, params, encodings=None):
    """
    Split ``labels`` into (high, low, verdicts); both lists keep input order.
    Precomputed ``encodings`` from :func:`encode_labels` may be passed in.
    """
    labels = list(labels)
    if encodings is None:
        encodings = encode_labels(frame, labels, params)
    verdicts = [discriminate(per_view, params, i) for i, per_view in enumerate(encodings)]
    high, low = partition(labels, verdicts)
    logger.debug("frame %d: %d high / %d low", frame.frame_id, len(high), len(low))
    return high, low, verdicts
