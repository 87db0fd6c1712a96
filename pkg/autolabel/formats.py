"""
On-disk formats.

scene    JSON Lines, one frame per line, plus one binary point file per view
         ("CLPTS\\0\\0\\1", u64 count, little-endian float32 xyz triples)
labels   CSV "frame_id,cx,cy,cz,l,w,h,yaw,score,origin", 9 significant digits
verdicts JSON, per frame and label
grid     "FGRD", u32 W, H, C, then float64 values with x fastest
tables   CSV with fixed headers, 6 significant digits
"""
import csv
import io
import json
import os
from pathlib import Path
import struct
import tempfile

import numpy as np

from .exceptions import AutolabelError, FormatError
from .geometry import OrientedBox3, PointCloud
from .licl import FeatureGrid
from .prelim import ScoredLabel
from .scene import AgentPose, SceneFrame

POINTS_MAGIC = b"CLPTS\x00\x00\x01"
GRID_MAGIC = b"FGRD"
LABEL_HEADER = ['frame_id', 'cx', 'cy', 'cz', 'l', 'w', 'h', 'yaw', 'score', 'origin']


def atomic_write(path, data):
    """Write bytes or text next to ``path`` first, then rename over it."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode('utf-8')
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -------------------------
# Point files
# -------------------------

def encode_points(points):
    pts = np.asarray(points, dtype='<f4').reshape(-1, 3)
    return POINTS_MAGIC + struct.pack('<Q', len(pts)) + pts.tobytes()


def read_points(path):
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != POINTS_MAGIC:
        raise FormatError("bad point file magic", path)
    if len(blob) < 16:
        raise FormatError("truncated point file header", path)
    (count,) = struct.unpack('<Q', blob[8:16])
    if len(blob) != 16 + 12 * count:
        raise FormatError(f"expected {count} points, file holds {(len(blob) - 16) / 12:g}", path)
    return np.frombuffer(blob, dtype='<f4', offset=16).reshape(-1, 3).astype(np.float64)


# -------------------------
# Scenes
# -------------------------

def _points_name(scene_path, frame_id, agent_id):
    return f"{Path(scene_path).stem}_f{frame_id:06d}_a{agent_id}.pts"


def frame_record(frame, scene_path):
    clouds = []
    for agent, cloud in frame.views():
        clouds.append({
            'agent': agent.agent_id,
            'pts_file': _points_name(scene_path, frame.frame_id, agent.agent_id),
            'ground': int(cloud.ground.sum()),
        })
    return {
        'frame_id': frame.frame_id,
        'extent': list(frame.extent),
        'agents': [{'id': a.agent_id, 'box': a.box.as_list()} for a in frame.agents],
        'gt': [box.as_list() for box in frame.gt_boxes],
        'clutter': [box.as_list() for box in frame.clutter],
        'clouds': clouds,
    }


def write_scene(frames, scene_path):
    """JSON Lines at ``scene_path``; point files beside it. Returns written paths."""
    scene_path = Path(scene_path)
    written = []
    lines = []
    for frame in frames:
        record = frame_record(frame, scene_path)
        for entry, cloud in zip(record['clouds'], frame.clouds):
            # ground points go last so the count alone flags them
            order = np.argsort(cloud.ground, kind='stable')
            pts_path = scene_path.parent / entry['pts_file']
            atomic_write(pts_path, encode_points(cloud.points[order]))
            written.append(pts_path)
        lines.append(json.dumps(record, separators=(',', ':')))
    atomic_write(scene_path, ''.join(line + '\n' for line in lines))
    written.append(scene_path)
    return written


def _box(values, path, line):
    if not isinstance(values, list) or len(values) != 7:
        raise FormatError(f"expected a 7-value box, got {values!r}", path, line)
    try:
        return OrientedBox3.from_array(values)
    except (TypeError, ValueError) as exc:
        raise FormatError(str(exc), path, line)


def parse_frame(record, scene_path, line):
    try:
        agents = tuple(AgentPose(_box(a['box'], scene_path, line), int(a['id'])) for a in record['agents'])
        gt = tuple(_box(values, scene_path, line) for values in record['gt'])
        # optional: frames written without clutter
        clutter = tuple(_box(values, scene_path, line) for values in record.get('clutter', []))
        clouds_by_agent = {}
        for entry in record['clouds']:
            points = read_points(Path(scene_path).parent / entry['pts_file'])
            n_ground = int(entry.get('ground', 0))
            if not 0 <= n_ground <= len(points):
                raise FormatError(f"ground count {n_ground} out of range", scene_path, line)
            ground = np.zeros(len(points), dtype=bool)
            ground[len(points) - n_ground:] = True
            clouds_by_agent[int(entry['agent'])] = PointCloud(points, ground)
        clouds = tuple(clouds_by_agent[a.agent_id] for a in agents)
        if [a.agent_id for a in agents] != list(range(len(agents))):
            raise FormatError("agent ids must be 0..V-1 in order", scene_path, line)
        return SceneFrame(int(record['frame_id']), agents, clouds, gt, tuple(record['extent']), clutter)
    except KeyError as exc:
        raise FormatError(f"missing field {exc}", scene_path, line)
    except FormatError:
        raise
    except (TypeError, ValueError, AutolabelError) as exc:
        raise FormatError(str(exc), scene_path, line)


def read_scene(scene_path):
    scene_path = Path(scene_path)
    frames = []
    with scene_path.open(encoding='utf-8') as handle:
        for line_no, text in enumerate(handle, start=1):
            if not text.strip():
                continue
            try:
                record = json.loads(text)
            except json.JSONDecodeError as exc:
                raise FormatError(exc.msg, scene_path, line_no)
            frames.append(parse_frame(record, scene_path, line_no))
    return frames


# -------------------------
# Labels
# -------------------------

def _g9(value):
    return f"{value:.9g}"


def encode_labels(rows):
    """``rows``: iterable of (frame_id, ScoredLabel)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(LABEL_HEADER)
    for frame_id, label in rows:
        writer.writerow([frame_id] + [_g9(v) for v in label.box.as_list()] + [_g9(label.score), label.origin])
    return buffer.getvalue()


def label_rows(frame_ids, label_sets):
    for frame_id, labels in zip(frame_ids, label_sets):
        for label in labels:
            yield frame_id, label


def read_labels(path):
    """Labels grouped by frame id, file order kept within a frame."""
    path = Path(path)
    grouped = {}
    with path.open(encoding='utf-8', newline='') as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != LABEL_HEADER:
            raise FormatError(f"expected header {','.join(LABEL_HEADER)}", path, 1)
        for row in reader:
            if not row:
                continue
            if len(row) != len(LABEL_HEADER):
                raise FormatError(f"expected {len(LABEL_HEADER)} fields, got {len(row)}", path, reader.line_num)
            try:
                frame_id = int(row[0])
                box = OrientedBox3.from_array(row[1:8])
                label = ScoredLabel(box, float(row[8]), row[9])
            except ValueError as exc:
                raise FormatError(str(exc), path, reader.line_num)
            grouped.setdefault(frame_id, []).append(label)
    return grouped


def labels_for_frames(frames, path):
    """Label lists aligned with ``frames``; labels for unknown frames are an error."""
    grouped = read_labels(path)
    stray = sorted(set(grouped) - {frame.frame_id for frame in frames})
    if stray:
        raise FormatError(f"labels reference frame(s) not in the scene: {stray[:5]}", path)
    return [grouped.get(frame.frame_id, []) for frame in frames]


# -------------------------
# Verdicts
# -------------------------

def _triple(t):
    return {'view': t.view_id, 'r': t.r, 'o': t.o, 'd': t.d, 'n_points': t.n_points}


def verdict_record(frame_id, label, verdict):
    return {
        'frame_id': frame_id,
        'label_index': verdict.label_index,
        'box': label.box.as_list(),
        'score': label.score,
        'verdict': verdict.verdict,
        'aggregated_r': verdict.aggregated_r,
        'aggregated_o': verdict.aggregated_o,
        'per_view': [_triple(t) for t in verdict.per_view],
    }


def encode_verdicts(records):
    return json.dumps({'labels': list(records)}, indent=1) + '\n'


# -------------------------
# Feature grids
# -------------------------

def encode_grid(grid):
    header = GRID_MAGIC + struct.pack('<III', grid.width, grid.height, grid.channels)
    # x fastest, then y, then channel
    body = np.ascontiguousarray(grid.values.transpose(2, 1, 0), dtype='<f8').tobytes()
    return header + body


def decode_grid(blob, extent, path=None):
    if blob[:4] != GRID_MAGIC or len(blob) < 16:
        raise FormatError("bad feature grid header", path)
    width, height, channels = struct.unpack('<III', blob[4:16])
    expected = 16 + 8 * width * height * channels
    if len(blob) != expected:
        raise FormatError(f"expected {expected} bytes, got {len(blob)}", path)
    values = np.frombuffer(blob, dtype='<f8', offset=16).reshape(channels, height, width)
    return FeatureGrid(values.transpose(2, 1, 0), extent)


# -------------------------
# Tables
# -------------------------

def _g6(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{value:.6g}"
    return str(value)


def encode_table(header, rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([_g6(v) for v in row])
    return buffer.getvalue()


def read_table(path):
    """(header, rows) of a table CSV, cells as strings."""
    path = Path(path)
    with path.open(encoding='utf-8', newline='') as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header:
            raise FormatError("empty table", path, 1)
        return header, [row for row in reader if row]
