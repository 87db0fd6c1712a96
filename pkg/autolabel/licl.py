"""
Label-internal contrastive loss on a BEV feature grid.

Boxes pick the feature vector of the grid cell under their center. High
quality boxes are positives, low quality boxes negatives. The default
``verbatim`` loss keeps the pairwise sums inside the exponentials:

    L = -1/M sum_m [ sum_i f_m.f_i / tau - log sum_n exp(sum_i f_i.g_n / tau) ]

so the denominator does not depend on m. ``infonce`` is the textbook
anchor/positive form. Gradients are closed form, normalization included.
"""
from dataclasses import dataclass
import logging
import math

import numpy as np
from scipy.special import logsumexp, softmax

from .exceptions import EmptySet, OutOfExtent
from .geometry import OrientedBox3

logger = logging.getLogger(__name__)

NORM_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class FeatureGrid:
    """values[ix, iy, c] over extent (x_min, x_max, y_min, y_max)."""
    values: np.ndarray
    extent: tuple

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 3 or min(values.shape) < 1:
            raise ValueError(f"feature grid must be W x H x C with all sizes >= 1, got {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("feature grid holds non-finite values")
        x_min, x_max, y_min, y_max = (float(v) for v in self.extent)
        if not (x_max > x_min and y_max > y_min):
            raise ValueError(f"empty grid extent {self.extent}")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'extent', (x_min, x_max, y_min, y_max))

    @property
    def width(self):
        return self.values.shape[0]

    @property
    def height(self):
        return self.values.shape[1]

    @property
    def channels(self):
        return self.values.shape[2]

    def with_values(self, values):
        return FeatureGrid(values, self.extent)


def grid_index(box, grid):
    x_min, x_max, y_min, y_max = grid.extent
    if not (x_min <= box.cx <= x_max and y_min <= box.cy <= y_max):
        raise OutOfExtent(f"box center ({box.cx:.3f}, {box.cy:.3f}) outside grid extent {grid.extent}")
    # floor after scaling by the resolution; flooring the ratio first maps everything to 0
    ix = math.floor((box.cx - x_min) / (x_max - x_min) * grid.width)
    iy = math.floor((box.cy - y_min) / (y_max - y_min) * grid.height)
    return min(max(ix, 0), grid.width - 1), min(max(iy, 0), grid.height - 1)


def _cells(grid, boxes):
    return [grid_index(box, grid) for box in boxes]


def _lookup(grid, cells, normalize):
    raw = np.array([grid.values[ix, iy] for ix, iy in cells], dtype=np.float64).reshape(len(cells), grid.channels)
    if not normalize:
        return raw, None
    norms = np.maximum(np.linalg.norm(raw, axis=1), NORM_FLOOR)
    return raw / norms[:, None], norms


def _prepare(grid, pos_boxes, neg_boxes, params):
    pos_boxes, neg_boxes = list(pos_boxes), list(neg_boxes)
    if not pos_boxes or not neg_boxes:
        raise EmptySet(f"contrastive loss needs positives and negatives, got {len(pos_boxes)} / {len(neg_boxes)}")
    if params.variant == 'infonce' and len(pos_boxes) < 2:
        raise EmptySet("textbook InfoNCE needs at least two positives")
    pos_cells, neg_cells = _cells(grid, pos_boxes), _cells(grid, neg_boxes)
    u, u_norms = _lookup(grid, pos_cells, params.normalize_features)
    v, v_norms = _lookup(grid, neg_cells, params.normalize_features)
    return pos_cells, neg_cells, u, v, u_norms, v_norms


def _verbatim_loss(u, v, tau):
    total = u.sum(axis=0)
    numer = u @ total / tau             # sum_i f_m.f_i / tau, one per m
    denom = logsumexp(v @ total / tau)  # log sum_n exp(sum_i f_i.g_n / tau)
    return float(-np.mean(numer - denom))


def _verbatim_grad(u, v, tau):
    m = len(u)
    total = u.sum(axis=0)
    p = softmax(v @ total / tau)
    g_u = np.tile(-2.0 / (m * tau) * total + (p @ v) / tau, (m, 1))
    g_v = np.outer(p, total) / tau
    return g_u, g_v


def _pair_logits(u, v, tau, m, i):
    return np.concatenate([[u[m] @ u[i]], v @ u[m]]) / tau


def _infonce_loss(u, v, tau):
    losses = []
    for m in range(len(u)):
        for i in range(len(u)):
            if i != m:
                z = _pair_logits(u, v, tau, m, i)
                losses.append(logsumexp(z) - z[0])
    return float(np.mean(losses))


def _infonce_grad(u, v, tau):
    g_u = np.zeros_like(u)
    g_v = np.zeros_like(v)
    pairs = len(u) * (len(u) - 1)
    for m in range(len(u)):
        for i in range(len(u)):
            if i == m:
                continue
            q = softmax(_pair_logits(u, v, tau, m, i))
            g_u[m] += ((q[0] - 1.0) * u[i] + q[1:] @ v) / tau
            g_u[i] += (q[0] - 1.0) * u[m] / tau
            g_v += np.outer(q[1:], u[m]) / tau
    return g_u / pairs, g_v / pairs


def licl_loss(grid, pos_boxes, neg_boxes, params):
    _, _, u, v, _, _ = _prepare(grid, pos_boxes, neg_boxes, params)
    if params.variant == 'infonce':
        return _infonce_loss(u, v, params.tau)
    return _verbatim_loss(u, v, params.tau)


def _through_norm(g, unit, norms):
    """Chain rule through f -> f / |f|: project out the radial part."""
    if norms is None:
        return g
    radial = np.sum(g * unit, axis=1, keepdims=True)
    return (g - radial * unit) / norms[:, None]


def licl_grad(grid, pos_boxes, neg_boxes, params):
    """d loss / d grid.values; zero on every cell no box points at."""
    pos_cells, neg_cells, u, v, u_norms, v_norms = _prepare(grid, pos_boxes, neg_boxes, params)
    if params.variant == 'infonce':
        g_u, g_v = _infonce_grad(u, v, params.tau)
    else:
        g_u, g_v = _verbatim_grad(u, v, params.tau)
    g_u = _through_norm(g_u, u, u_norms)
    g_v = _through_norm(g_v, v, v_norms)

    grad = np.zeros_like(grid.values)
    # box order fixes the accumulation order
    for (ix, iy), g in zip(pos_cells + neg_cells, np.concatenate([g_u, g_v])):
        grad[ix, iy] += g
    return grad


def total_loss(l_reg, l_cls, l_licl, params):
    return params.alpha * l_reg + params.beta * l_cls + params.gamma * l_licl


def finite_difference_grad(grid, pos_boxes, neg_boxes, params, step=1e-5):
    """Central differences on the cells the boxes touch; other cells stay 0."""
    grad = np.zeros_like(grid.values)
    cells = sorted(set(_cells(grid, pos_boxes)) | set(_cells(grid, neg_boxes)))
    base = np.array(grid.values)
    for ix, iy in cells:
        for c in range(grid.channels):
            plus, minus = base.copy(), base.copy()
            plus[ix, iy, c] += step
            minus[ix, iy, c] -= step
            grad[ix, iy, c] = (
                licl_loss(grid.with_values(plus), pos_boxes, neg_boxes, params)
                - licl_loss(grid.with_values(minus), pos_boxes, neg_boxes, params)
            ) / (2.0 * step)
    return grad


def gradient_error(analytic, numeric):
    """
    max |analytic - numeric| over the largest gradient magnitude on either
    side, floored at 1e-12. One scale serves the whole grid: near-zero entries
    get the same absolute tolerance as the peak.
    """
    scale = max(float(np.abs(analytic).max()), float(np.abs(numeric).max()), 1e-12)
    return float(np.abs(analytic - numeric).max()) / scale


@dataclass(frozen=True)
class GradientCheck:
    loss: float
    max_rel_error: float
    # largest |gradient| on cells no box indexes; 0.0 when local
    untouched_max: float
    shape: tuple
    positives: int
    negatives: int

    def passed(self, tolerance=1e-4):
        return self.max_rel_error < tolerance and self.untouched_max == 0.0


def random_instance(gen, extent, max_size=6, max_channels=8, max_boxes=4, min_positives=1):
    """A random grid with positive and negative boxes placed inside ``extent``."""
    width, height = (int(v) for v in gen.integers(1, max_size + 1, 2))
    channels = int(gen.integers(1, max_channels + 1))
    grid = FeatureGrid(gen.normal(0.0, 1.0, (width, height, channels)), extent)
    x_min, x_max, y_min, y_max = grid.extent

    def boxes(count):
        return [
            OrientedBox3(gen.uniform(x_min, x_max), gen.uniform(y_min, y_max), 0.8, 4.5, 1.8, 1.6,
                         gen.uniform(-math.pi, math.pi))
            for _ in range(count)
        ]

    pos = boxes(int(gen.integers(min_positives, max(max_boxes, min_positives) + 1)))
    neg = boxes(int(gen.integers(1, max_boxes + 1)))
    return grid, pos, neg


def check_gradient(grid, pos_boxes, neg_boxes, params, step=1e-5):
    analytic = licl_grad(grid, pos_boxes, neg_boxes, params)
    numeric = finite_difference_grad(grid, pos_boxes, neg_boxes, params, step)
    touched = np.zeros(grid.values.shape[:2], dtype=bool)
    for ix, iy in _cells(grid, list(pos_boxes) + list(neg_boxes)):
        touched[ix, iy] = True
    untouched = np.abs(analytic[~touched])
    return GradientCheck(
        loss=licl_loss(grid, pos_boxes, neg_boxes, params),
        max_rel_error=gradient_error(analytic, numeric),
        untouched_max=float(untouched.max()) if untouched.size else 0.0,
        shape=grid.values.shape,
        positives=len(pos_boxes),
        negatives=len(neg_boxes),
    )
