"""
Preliminary labels: agents' shared boxes and a stochastic detector surrogate.

The surrogate stands in for the initial detector. Every ground-truth object
is found with probability ``p_detect`` and its box jittered. Agents are found
with ``p_detect_agent`` and fitted tighter, scaled by ``agent_jitter``: the
detector overfits them. A ``fp_clutter_fraction`` share of the false positives
are loose fits around unlabeled obstacles, which look like objects to any
geometric check; the rest land in free space.
"""
from dataclasses import dataclass
import logging
import math

from . import rng
from .geometry import OrientedBox3, bev_iou

logger = logging.getLogger(__name__)

AGENT_SHARED = 'agent_shared'
SURROGATE_TP = 'surrogate_tp'
SURROGATE_FP = 'surrogate_fp'
EXTERNAL = 'external'
ORIGINS = (AGENT_SHARED, SURROGATE_TP, SURROGATE_FP, EXTERNAL)

# false positives overlap every object by less than this
FP_MAX_IOU = 0.1


@dataclass(frozen=True)
class ScoredLabel:
    box: OrientedBox3
    score: float
    # diagnostics only; nothing downstream branches on it
    origin: str = EXTERNAL

    def __post_init__(self):
        score = float(self.score)
        if not (0.0 <= score <= 1.0):
            raise ValueError(f"label score must be in [0, 1], got {score}")
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown label origin {self.origin!r}")
        object.__setattr__(self, 'score', score)


def agent_labels(frame):
    return [ScoredLabel(agent.box, 1.0, AGENT_SHARED) for agent in frame.agents]


def _jitter(box, cfg, gen, share=1.0):
    # the draws depend only on cfg so a zero share leaves the stream intact
    scale = gen.normal(0.0, cfg.jitter_size, 3) if cfg.jitter_size > 0 else (0.0, 0.0, 0.0)
    dx, dy = gen.normal(0.0, cfg.jitter_pos, 2) if cfg.jitter_pos > 0 else (0.0, 0.0)
    dyaw = gen.normal(0.0, cfg.jitter_yaw) if cfg.jitter_yaw > 0 else 0.0
    margin = 2.0 * cfg.jitter_margin * share
    return OrientedBox3(
        box.cx + share * dx,
        box.cy + share * dy,
        box.cz,
        box.l * math.exp(share * scale[0]) + margin,
        box.w * math.exp(share * scale[1]) + margin,
        box.h * math.exp(share * scale[2]) + margin,
        box.yaw + share * dyaw,
    )


def _clutter_box(frame, cfg, gen):
    """A loose fit around one unlabeled obstacle, or None if it touches an object."""
    box = _jitter(frame.clutter[gen.integers(len(frame.clutter))], cfg, gen)
    if all(bev_iou(box, gt) < FP_MAX_IOU for gt in frame.gt_boxes):
        return box
    return None


def _free_space_box(frame, cfg, gen):
    x_min, x_max, y_min, y_max = frame.extent
    for _ in range(cfg.fp_max_attempts):
        # shape from the same family as real objects
        template = frame.gt_boxes[gen.integers(len(frame.gt_boxes))]
        l = template.l * gen.uniform(0.7, 1.3)
        w = template.w * gen.uniform(0.7, 1.3)
        h = template.h * gen.uniform(0.8, 1.2)
        yaw = gen.uniform(-math.pi, math.pi)
        cx, cy = gen.uniform(x_min, x_max), gen.uniform(y_min, y_max)
        box = OrientedBox3(cx, cy, h / 2, l, w, h, yaw)
        if all(bev_iou(box, gt) < FP_MAX_IOU for gt in frame.gt_boxes):
            return box
    return None


def surrogate_detect(frame, cfg, skip_agents=False):
    gen = rng.stream(cfg.seed, rng.SURROGATE, frame.frame_id)
    labels = []
    for index, gt in enumerate(frame.gt_boxes):
        is_agent = frame.is_agent_gt(index)
        p = cfg.p_detect_agent if is_agent else cfg.p_detect
        if gen.uniform() >= p:
            continue
        if is_agent:
            box = _jitter(gt, cfg, gen, cfg.agent_jitter)
            score = gen.beta(cfg.a_agent, cfg.b_agent)
        else:
            box = _jitter(gt, cfg, gen)
            score = gen.beta(cfg.a_tp, cfg.b_tp)
        # skipped agents still consume their draws so object labels match
        if not (skip_agents and is_agent):
            labels.append(ScoredLabel(box, score, SURROGATE_TP))

    n_fp = int(gen.poisson(cfg.fp_per_frame)) if cfg.fp_per_frame > 0 and frame.gt_boxes else 0
    dropped = 0
    for _ in range(n_fp):
        on_clutter = gen.uniform() < cfg.fp_clutter_fraction
        box = _clutter_box(frame, cfg, gen) if on_clutter and frame.clutter else None
        if box is None:
            box = _free_space_box(frame, cfg, gen)
        if box is None:
            dropped += 1
            continue
        labels.append(ScoredLabel(box, gen.beta(cfg.a_fp, cfg.b_fp), SURROGATE_FP))
    if dropped:
        logger.debug("frame %d: %d false positives found no free space", frame.frame_id, dropped)
    return labels


def threshold_filter(labels, delta):
    return [label for label in labels if label.score >= delta]


SOURCES = ('surrogate', 'agents', 'both')


def preliminary_labels(frame, cfg, source='surrogate'):
    """
    Labels handed to the filter. ``both`` replaces the surrogate's agent
    detections with the exact shared boxes.
    """
    if source == 'agents':
        return agent_labels(frame)
    if source == 'both':
        return agent_labels(frame) + surrogate_detect(frame, cfg, skip_agents=True)
    return surrogate_detect(frame, cfg)
