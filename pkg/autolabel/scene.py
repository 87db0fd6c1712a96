"""
Synthetic multi-agent LiDAR frames.

Each agent observes the vertical side faces of every other box. Faces are
sampled with an areal density that falls off as 1/range^2, and occlusion is
resolved by an azimuth z-buffer: a bin belongs to the box whose face the
bin-center ray hits first, and only that box keeps points in the bin.
Clouds stay per view. The first V ground-truth boxes are the agents.

Clutter boxes are static obstacles outside the labeled classes: they are
scanned and they occlude like any object, but they are not ground truth.
"""
from dataclasses import dataclass
import logging
import math

import numpy as np

from . import rng
from .exceptions import PlacementError
from .geometry import OrientedBox3, PointCloud, footprints_overlap, rigid_transform_xy, scale_box
from .pool import ordered_map

logger = logging.getLogger(__name__)

EGO_ID = 0


@dataclass(frozen=True)
class AgentPose:
    box: OrientedBox3
    agent_id: int


@dataclass(frozen=True, eq=False)
class SceneFrame:
    frame_id: int
    agents: tuple
    clouds: tuple
    gt_boxes: tuple
    extent: tuple
    clutter: tuple = ()

    def __post_init__(self):
        if len(self.agents) < 2:
            raise ValueError(f"frame {self.frame_id}: needs at least two agents, got {len(self.agents)}")
        if len(self.clouds) != len(self.agents):
            raise ValueError(f"frame {self.frame_id}: {len(self.clouds)} clouds for {len(self.agents)} agents")
        object.__setattr__(self, 'agents', tuple(self.agents))
        object.__setattr__(self, 'clouds', tuple(self.clouds))
        object.__setattr__(self, 'gt_boxes', tuple(self.gt_boxes))
        object.__setattr__(self, 'extent', tuple(float(v) for v in self.extent))
        object.__setattr__(self, 'clutter', tuple(self.clutter))

    @property
    def n_views(self):
        return len(self.agents)

    @property
    def obstacles(self):
        """Everything a sensor sees: ground truth first, then clutter."""
        return self.gt_boxes + self.clutter

    def is_agent_gt(self, index):
        return index < len(self.agents)

    def views(self):
        """(agent, cloud) pairs in agent order."""
        return zip(self.agents, self.clouds)

    def replace_clouds(self, clouds):
        return SceneFrame(self.frame_id, self.agents, tuple(clouds), self.gt_boxes, self.extent, self.clutter)


def _in_extent(box, extent):
    corners = box.corners_bev()
    x_min, x_max, y_min, y_max = extent
    return bool(
        (corners[:, 0] >= x_min).all() and (corners[:, 0] <= x_max).all()
        and (corners[:, 1] >= y_min).all() and (corners[:, 1] <= y_max).all()
    )


def _vehicle_shape(cfg, gen):
    l = gen.uniform(*cfg.length_range)
    w = gen.uniform(*cfg.width_range)
    h = gen.uniform(*cfg.height_range)
    yaw = gen.uniform(-math.pi, math.pi)
    return l, w, h, yaw


def _clutter_shape(cfg, gen):
    l, w = gen.uniform(*cfg.clutter_size_range, 2)
    h = gen.uniform(*cfg.clutter_height_range)
    yaw = gen.uniform(-math.pi, math.pi)
    return l, w, h, yaw


def _place(cfg, gen, placed, center_sampler, what, shape=_vehicle_shape):
    for _ in range(cfg.max_place_attempts):
        cx, cy = center_sampler()
        l, w, h, yaw = shape(cfg, gen)
        box = OrientedBox3(cx, cy, h / 2, l, w, h, yaw)
        if not _in_extent(box, cfg.extent):
            continue
        padded = scale_box(box, cfg.clearance)
        if any(footprints_overlap(padded, other) for other in placed):
            continue
        placed.append(padded)
        return box
    raise PlacementError(
        f"could not place {what} without overlap in {cfg.max_place_attempts} attempts"
    )


def place_boxes(cfg, seed, frame_id):
    """Agent, object and clutter boxes with pairwise disjoint padded footprints."""
    gen = rng.stream(seed, rng.PLACEMENT, frame_id)
    x_min, x_max, y_min, y_max = cfg.extent
    mid_x, mid_y = (x_min + x_max) / 2, (y_min + y_max) / 2
    placed = []

    def near_center():
        r = cfg.agent_radius * math.sqrt(gen.uniform())
        t = gen.uniform(-math.pi, math.pi)
        return mid_x + r * math.cos(t), mid_y + r * math.sin(t)

    def anywhere():
        return gen.uniform(x_min, x_max), gen.uniform(y_min, y_max)

    agents = [_place(cfg, gen, placed, near_center, f"agent {i}") for i in range(cfg.n_agents)]
    objects = [_place(cfg, gen, placed, anywhere, f"object {i}") for i in range(cfg.n_objects)]
    clutter = [_place(cfg, gen, placed, anywhere, f"clutter {i}", _clutter_shape) for i in range(cfg.n_clutter)]
    return agents, objects, clutter


def visible_faces(origin, boxes, skip=None):
    """
    Side faces facing ``origin``: list of (box_index, p0, p1) with the BEV
    segment running counter-clockwise around its box.
    """
    ox, oy = origin
    faces = []
    for index, box in enumerate(boxes):
        if index == skip:
            continue
        corners = box.corners_bev()
        for k in range(4):
            p0, p1 = corners[k], corners[(k + 1) % 4]
            ex, ey = p1 - p0
            mx, my = (p0 + p1) / 2
            # outward normal of a CCW edge is (ey, -ex)
            if (ox - mx) * ey - (oy - my) * ex > 0:
                faces.append((index, p0, p1))
    return faces


class AzimuthBuffer:
    """Nearest box per azimuth bin, seen from one sensor origin."""

    def __init__(self, origin, bin_width):
        self.origin = np.asarray(origin, dtype=np.float64)
        self.n_bins = max(1, int(round(2.0 * math.pi / bin_width)))
        self.width = 2.0 * math.pi / self.n_bins
        self.depth = np.full(self.n_bins, np.inf)
        self.owner = np.full(self.n_bins, -1, dtype=np.int64)

    def bin_of(self, xy):
        d = np.asarray(xy, dtype=np.float64).reshape(-1, 2) - self.origin
        angle = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2.0 * math.pi)
        return np.floor(angle / self.width).astype(np.int64) % self.n_bins

    def add_face(self, index, p0, p1):
        a0 = math.atan2(p0[1] - self.origin[1], p0[0] - self.origin[0])
        a1 = math.atan2(p1[1] - self.origin[1], p1[0] - self.origin[0])
        delta = math.remainder(a1 - a0, 2.0 * math.pi)
        lo, hi = min(a0, a0 + delta), max(a0, a0 + delta)
        k = np.arange(math.floor(lo / self.width), math.floor(hi / self.width) + 1)
        theta = (k + 0.5) * self.width
        dx, dy = np.cos(theta), np.sin(theta)
        ex, ey = p1[0] - p0[0], p1[1] - p0[1]
        wx, wy = p0[0] - self.origin[0], p0[1] - self.origin[1]
        det = dy * ex - dx * ey
        with np.errstate(divide='ignore', invalid='ignore'):
            t = (wy * ex - wx * ey) / det
            s = (dx * wy - dy * wx) / det
        hit = (np.abs(det) > 1e-15) & (s >= 0.0) & (s <= 1.0) & (t > 0.0)
        bins = np.mod(k[hit], self.n_bins)
        t = t[hit]
        nearer = t < self.depth[bins]
        self.depth[bins[nearer]] = t[nearer]
        self.owner[bins[nearer]] = index

    def keep(self, xy, owners):
        """Mask of samples that belong to the nearest box in their bin."""
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        owners = np.asarray(owners, dtype=np.int64)
        bins = self.bin_of(xy)
        claimed = self.owner[bins]
        keep = claimed == owners
        # bins whose center ray misses every face: nearest sample decides
        loose = claimed < 0
        if loose.any():
            ranges = np.hypot(*(xy[loose] - self.origin).T)
            loose_idx = np.flatnonzero(loose)
            order = np.lexsort((ranges, bins[loose]))
            first = {}
            for i in order:
                first.setdefault(bins[loose_idx[i]], owners[loose_idx[i]])
            keep[loose_idx] = [owners[j] == first[bins[j]] for j in loose_idx]
        return keep

    def occluded(self, xy):
        """Ground samples behind the nearest face in their bin."""
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        ranges = np.hypot(*(xy - self.origin).T)
        return ranges > self.depth[self.bin_of(xy)]


def _sample_faces(faces, boxes, origin, cfg, gen):
    xy, z, owners = [], [], []
    for index, p0, p1 in faces:
        box = boxes[index]
        length = float(np.hypot(*(p1 - p0)))
        mid = (p0 + p1) / 2
        # measured from the sensor, which sits sensor_height above the ground
        rng_c = math.sqrt(float(np.sum((mid - origin) ** 2)) + (cfg.sensor_height - box.cz) ** 2)
        if rng_c > cfg.max_range:
            continue
        count = int(round(cfg.density * length * box.h / max(rng_c, 1e-6) ** 2))
        if count == 0:
            continue
        u = gen.uniform(0.0, 1.0, count)
        xy.append(p0[None, :] + u[:, None] * (p1 - p0)[None, :])
        z.append(gen.uniform(box.z_min, box.z_max, count))
        owners.append(np.full(count, index, dtype=np.int64))
    if not xy:
        return np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=np.int64)
    return np.concatenate(xy), np.concatenate(z), np.concatenate(owners)


def _sample_ground(buffer, boxes, origin, cfg, gen):
    r_min = 2.0
    if cfg.max_range <= r_min:
        return np.zeros((0, 3))
    # density/r^2 over the annulus integrates to 2*pi*density*ln(r_max/r_min)
    count = int(round(cfg.ground_density * 2.0 * math.pi * math.log(cfg.max_range / r_min)))
    r = r_min * (cfg.max_range / r_min) ** gen.uniform(0.0, 1.0, count)
    t = gen.uniform(-math.pi, math.pi, count)
    xy = origin[None, :] + np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
    x_min, x_max, y_min, y_max = cfg.extent
    keep = (xy[:, 0] >= x_min) & (xy[:, 0] <= x_max) & (xy[:, 1] >= y_min) & (xy[:, 1] <= y_max)
    keep &= ~buffer.occluded(xy)
    pts = np.column_stack([xy, np.zeros(len(xy))])
    for box in boxes:
        keep &= ~_footprint_mask(pts, box)
    return pts[keep]


def _footprint_mask(pts, box):
    local = box.to_local(pts)
    return (np.abs(local[:, 0]) <= box.l / 2) & (np.abs(local[:, 1]) <= box.w / 2)


def observe(agent, boxes, cfg, seed, frame_id):
    """
    One agent's cloud of every other box, occlusion applied. ``boxes`` holds
    every obstacle with the agents first, so ``agent_id`` indexes its own body.
    """
    origin = np.array(agent.box.center_xy, dtype=np.float64)
    faces = visible_faces(origin, boxes, skip=agent.agent_id)
    buffer = AzimuthBuffer(origin, cfg.azimuth_bin)
    for index, p0, p1 in faces:
        buffer.add_face(index, p0, p1)

    gen = rng.stream(seed, rng.CLOUD, frame_id, agent.agent_id)
    xy, z, owners = _sample_faces(faces, boxes, origin, cfg, gen)
    keep = buffer.keep(xy, owners) if len(xy) else np.zeros(0, dtype=bool)
    points = np.column_stack([xy[keep], z[keep]])
    ground = np.zeros(len(points), dtype=bool)

    if cfg.ground:
        ground_gen = rng.stream(seed, rng.GROUND, frame_id, agent.agent_id)
        ground_pts = _sample_ground(buffer, boxes, origin, cfg, ground_gen)
        points = np.concatenate([points, ground_pts])
        ground = np.concatenate([ground, np.ones(len(ground_pts), dtype=bool)])
    logger.debug("frame %d agent %d: %d points (%d kept of %d face samples)",
                 frame_id, agent.agent_id, len(points), int(keep.sum()), len(xy))
    return PointCloud(points, ground)


def generate_frame(cfg, seed, frame_id=0):
    """Pure function of (cfg, seed, frame_id)."""
    agent_boxes, object_boxes, clutter = place_boxes(cfg, seed, frame_id)
    agents = tuple(AgentPose(box, i) for i, box in enumerate(agent_boxes))
    gt = tuple(agent_boxes) + tuple(object_boxes)
    clouds = tuple(observe(agent, gt + tuple(clutter), cfg, seed, frame_id) for agent in agents)
    return SceneFrame(frame_id, agents, clouds, gt, tuple(cfg.extent), tuple(clutter))


def generate_corpus(cfg, seed, n_frames, first_frame=0):
    frame_ids = range(first_frame, first_frame + n_frames)
    frames = ordered_map(lambda fid: generate_frame(cfg, seed, fid), frame_ids)
    logger.info("generated %d frames (seed %d)", len(frames), seed)
    return frames


def apply_localization_noise(frame, noise):
    """
    Misalign every non-ego view by a Gaussian pose error; ground truth and the
    ego cloud stay as they are.
    """
    if noise.sigma_xy == 0 and noise.sigma_yaw == 0:
        return frame
    clouds = []
    for agent, cloud in frame.views():
        if agent.agent_id == EGO_ID:
            clouds.append(cloud)
            continue
        gen = rng.stream(noise.seed, rng.NOISE, frame.frame_id, agent.agent_id)
        dx, dy = gen.normal(0.0, noise.sigma_xy, 2)
        dyaw = gen.normal(0.0, noise.sigma_yaw) if noise.sigma_yaw > 0 else 0.0
        moved = rigid_transform_xy(cloud.points, dx, dy, dyaw, pivot=agent.box.center_xy)
        clouds.append(cloud.with_points(moved))
    return frame.replace_clouds(clouds)
