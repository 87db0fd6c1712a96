"""
Label quality against ground truth, and the parameter sweeps built on it.

Matching is greedy: labels in descending score order each take the unmatched
ground-truth box of highest IoU at or above the threshold, ties going to the
lower ground-truth index.
"""
from dataclasses import dataclass, field, replace
import logging

import numpy as np
from scipy.stats import spearmanr

from .geometry import bev_iou, iou_3d
from .mbe import encode_labels, filter_labels
from .pool import ordered_map
from .prelim import preliminary_labels, threshold_filter
from .scene import apply_localization_noise, generate_corpus

logger = logging.getLogger(__name__)

MODES = {'bev': bev_iou, '3d': iou_3d}

# any overlap counts when building IoU distributions
HISTOGRAM_MIN_IOU = 1e-9

SWEEP_HEADER = ('param', 'value', 'recall', 'precision', 'tp', 'fp', 'fn')
NOISE_HEADER = ('sigma', 'seed', 'recall', 'precision')
NOISE_SUMMARY_HEADER = ('sigma', 'recall_mean', 'recall_std', 'precision_mean', 'precision_std')
HISTOGRAM_HEADER = ('bin_lo', 'bin_hi', 'count')

ABLATION = (
    ('cpe', dict(use_cpe=True, use_bae=False, use_ice=False)),
    ('bae', dict(use_cpe=False, use_bae=True, use_ice=False)),
    ('cpe+bae', dict(use_cpe=True, use_bae=True, use_ice=False)),
    ('cpe+ice', dict(use_cpe=True, use_bae=False, use_ice=True)),
    ('bae+ice', dict(use_cpe=False, use_bae=True, use_ice=True)),
    ('cpe+bae+ice', dict(use_cpe=True, use_bae=True, use_ice=True)),
)


@dataclass(frozen=True)
class MatchReport:
    recall: float
    precision: float
    tp: int
    fp: int
    fn: int
    iou_threshold: float
    # IoU of each label's match in input order, 0.0 when unmatched
    matched_iou: tuple = ()
    # (label index, gt index) pairs
    matches: tuple = ()


def _report(tp, fp, fn, iou_threshold, matched_iou=(), matches=()):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return MatchReport(recall, precision, tp, fp, fn, iou_threshold, tuple(matched_iou), tuple(matches))


def iou_matrix(boxes, gt, mode='bev'):
    iou = MODES[mode]
    out = np.zeros((len(boxes), len(gt)))
    for i, box in enumerate(boxes):
        for j, g in enumerate(gt):
            out[i, j] = iou(box, g)
    return out


def match_labels(labels, gt, iou_threshold=0.5, mode='bev'):
    labels, gt = list(labels), list(gt)
    overlaps = iou_matrix([label.box for label in labels], gt, mode)
    order = sorted(range(len(labels)), key=lambda i: (-labels[i].score, i))
    taken = np.zeros(len(gt), dtype=bool)
    matched_iou = [0.0] * len(labels)
    matches = []
    for i in order:
        best, best_iou = -1, -1.0
        for j in range(len(gt)):
            if not taken[j] and overlaps[i, j] >= iou_threshold and overlaps[i, j] > best_iou:
                best, best_iou = j, overlaps[i, j]
        if best >= 0:
            taken[best] = True
            matched_iou[i] = float(best_iou)
            matches.append((i, best))
    tp = len(matches)
    return _report(tp, len(labels) - tp, len(gt) - tp, iou_threshold, matched_iou, sorted(matches))


def merge_reports(reports, iou_threshold):
    tp = sum(r.tp for r in reports)
    fp = sum(r.fp for r in reports)
    fn = sum(r.fn for r in reports)
    return _report(tp, fp, fn, iou_threshold)


@dataclass(frozen=True)
class Histogram:
    edges: tuple
    counts: tuple
    # labels without any overlapping ground truth
    unmatched: int = 0

    @property
    def total(self):
        return sum(self.counts)

    def rows(self):
        return [(lo, hi, n) for lo, hi, n in zip(self.edges[:-1], self.edges[1:], self.counts)]

    def __add__(self, other):
        return Histogram(self.edges, tuple(a + b for a, b in zip(self.counts, other.counts)),
                         self.unmatched + other.unmatched)


def empty_histogram(bins):
    return Histogram(tuple(float(e) for e in np.linspace(0.0, 1.0, bins + 1)), (0,) * bins, 0)


def iou_histogram(labels, gt, bins=10, mode='bev'):
    report = match_labels(labels, gt, HISTOGRAM_MIN_IOU, mode)
    values = [report.matched_iou[i] for i, _ in report.matches]
    counts, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
    return Histogram(tuple(float(e) for e in edges), tuple(int(c) for c in counts), report.fp)


def evaluate_corpus(frames, label_sets, iou_threshold=0.5, mode='bev'):
    reports = [match_labels(labels, frame.gt_boxes, iou_threshold, mode)
               for frame, labels in zip(frames, label_sets)]
    return merge_reports(reports, iou_threshold)


def retention(frames, label_sets, verdict_sets, params, iou_threshold=0.5, mode='bev'):
    """
    (kept, eligible): true-positive labels with at least ``n_min`` interior
    points in some view, and how many of those were judged high quality.
    """
    kept = eligible = 0
    for frame, labels, verdicts in zip(frames, label_sets, verdict_sets):
        report = match_labels(labels, frame.gt_boxes, iou_threshold, mode)
        for i, _ in report.matches:
            if max(t.n_points for t in verdicts[i].per_view) >= params.n_min:
                eligible += 1
                kept += verdicts[i].is_high
    return kept, eligible


@dataclass(frozen=True)
class SweepResult:
    header: tuple
    rows: list = field(default_factory=list)

    def column(self, name):
        k = self.header.index(name)
        return [row[k] for row in self.rows]


def build_corpus(config, source='surrogate'):
    """Frames and preliminary labels for a PipelineConfig."""
    frames = generate_corpus(config.scene, config.seed, config.corpus.n_frames, config.corpus.first_frame)
    label_sets = [preliminary_labels(frame, config.surrogate, source) for frame in frames]
    return frames, label_sets


def _encoded(frames, label_sets, params):
    return ordered_map(lambda job: encode_labels(job[0], job[1], params), zip(frames, label_sets))


def _filtered(frames, label_sets, params, encodings=None):
    encodings = encodings or [None] * len(frames)
    return ordered_map(
        lambda job: filter_labels(job[0], job[1], params, job[2]),
        zip(frames, label_sets, encodings),
    )


def _row(param, value, report):
    return (param, value, report.recall, report.precision, report.tp, report.fp, report.fn)


def _score_high(frames, results, iou_threshold, mode):
    return evaluate_corpus(frames, [high for high, _, _ in results], iou_threshold, mode)


def sweep_mbe(frames, label_sets, phi_r_grid, phi_o_grid, eta_grid, params, iou_threshold=0.5, mode='bev'):
    """Vary phi_r, phi_o and the (enlarge, reduce) pair one at a time around ``params``."""
    result = SweepResult(SWEEP_HEADER)
    encodings = None
    if len(phi_r_grid) or len(phi_o_grid):
        encodings = _encoded(frames, label_sets, params)
    for key, grid in (('phi_r', phi_r_grid), ('phi_o', phi_o_grid)):
        for value in grid:
            trial = replace(params, **{key: float(value)})
            results = _filtered(frames, label_sets, trial, encodings)
            result.rows.append(_row(key, value, _score_high(frames, results, iou_threshold, mode)))
    for enlarge, reduce in eta_grid:
        trial = replace(params, eta_enlarge=float(enlarge), eta_reduce=float(reduce))
        results = _filtered(frames, label_sets, trial)
        result.rows.append(_row('eta', f"{enlarge}/{reduce}", _score_high(frames, results, iou_threshold, mode)))
    logger.info("mbe sweep: %d rows over %d frames", len(result.rows), len(frames))
    return result


def sweep_ablation(frames, label_sets, params, iou_threshold=0.5, mode='bev'):
    result = SweepResult(SWEEP_HEADER)
    result.rows.append(_row('strategy', 'none', evaluate_corpus(frames, label_sets, iou_threshold, mode)))
    encodings = _encoded(frames, label_sets, params)
    for name, switches in ABLATION:
        results = _filtered(frames, label_sets, replace(params, **switches), encodings)
        result.rows.append(_row('strategy', name, _score_high(frames, results, iou_threshold, mode)))
    return result


def sweep_delta(frames, label_sets, deltas, params, iou_threshold=0.5, mode='bev'):
    """Confidence thresholds on the preliminary labels, before and after filtering."""
    result = SweepResult(SWEEP_HEADER)
    filtered_rows = []
    for delta in deltas:
        kept = [threshold_filter(labels, delta) for labels in label_sets]
        result.rows.append(_row('delta', delta, evaluate_corpus(frames, kept, iou_threshold, mode)))
        results = _filtered(frames, kept, params)
        filtered_rows.append(_row('delta_mbe', delta, _score_high(frames, results, iou_threshold, mode)))
    result.rows.extend(filtered_rows)
    return result


def sweep_noise(frames, label_sets, sigma_grid, seeds, params, noise, iou_threshold=0.5, mode='bev'):
    """
    Re-filter under localization noise: one row per (sigma, seed) and a
    summary with mean and standard deviation per sigma.
    """
    per_run = SweepResult(NOISE_HEADER)
    summary = SweepResult(NOISE_SUMMARY_HEADER)
    for sigma in sigma_grid:
        recalls, precisions = [], []
        for k in range(seeds):
            model = replace(noise, sigma_xy=float(sigma), seed=noise.seed + k)
            noisy = [apply_localization_noise(frame, model) for frame in frames]
            report = _score_high(noisy, _filtered(noisy, label_sets, params), iou_threshold, mode)
            per_run.rows.append((sigma, model.seed, report.recall, report.precision))
            recalls.append(report.recall)
            precisions.append(report.precision)
        summary.rows.append((sigma, float(np.mean(recalls)), float(np.std(recalls)),
                             float(np.mean(precisions)), float(np.std(precisions))))
        logger.info("noise sweep: sigma=%s recall=%.4f precision=%.4f", sigma, np.mean(recalls), np.mean(precisions))
    return per_run, summary


def spearman(x, y):
    """Rank correlation; nan when either side is constant."""
    rho = spearmanr(x, y).statistic
    return float(rho)
