"""Synthetic street scenes, pinhole-camera detections and input encoding.

Scenes place vehicle-class UEs on a lane/slot grid in front of the RIS,
with a static wall blocking the direct BS-UE path.  A pinhole camera at
the RIS projects each UE's 3-D box into a class + bounding-box detection
(with optional jitter, misses and clutter), and detections are encoded
into the zero-padded per-UE feature matrix consumed by the beam-set
network.  Dataset records and manifests are persisted as line-delimited
JSON so runs are reproducible and diffable.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .channel import Box, segment_blocked

DEFAULT_CLASS_NAMES = ("car", "bus", "truck")
DEFAULT_CLASS_EXTENTS = ((4.5, 1.8, 1.5), (12.0, 2.5, 3.2), (8.0, 2.5, 3.0))
DEFAULT_CLASS_MIX = (0.6, 0.25, 0.15)


# ---------------------------------------------------------------------------
# Scene model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Pose:
    position: tuple[float, float, float]
    yaw_rad: float = 0.0


@dataclass(frozen=True)
class SceneUE:
    """One user: box center, box extents (length, width, height), class id."""

    position: tuple[float, float, float]
    extents: tuple[float, float, float]
    class_id: int


@dataclass(frozen=True)
class Scene:
    ues: tuple
    blockers: tuple
    ris_pose: Pose
    bs_position: tuple[float, float, float]
    reflectors: tuple
    seed: int


@dataclass(frozen=True)
class SceneConfig:
    """Parametric street scenario.

    UEs are drawn on a lane x slot grid (no two UEs share a slot) with a
    truncated-Poisson count.  The default geometry keeps the BS-UE path
    blocked by a wall while BS-RIS and RIS-UE stay line-of-sight, and
    places the BS 80 m out on direction cosines (-0.5, 0.25) from the RIS:
    exactly one of the 8x8 codebook grid directions, the alignment an
    installer would pick so the fixed BS-side beam carries no residual.
    """

    street_x: tuple[float, float] = (-35.0, 35.0)
    lane_y: tuple = (18.0, 21.0, 24.0)
    slot_spacing: float = 8.0
    slot_jitter: float = 1.0
    mean_ue_count: float = 1.4
    u_max: int = 8
    class_mix: tuple = DEFAULT_CLASS_MIX
    class_extents: tuple = DEFAULT_CLASS_EXTENTS
    ris_position: tuple[float, float, float] = (0.0, 0.0, 5.0)
    ris_yaw_rad: float = float(np.pi / 2)
    bs_position: tuple[float, float, float] = (40.0, 20.0 * float(np.sqrt(11.0)), 25.0)
    blockers: tuple = (Box((-70.0, 30.0, 0.0), (70.0, 32.0, 10.0)),)
    reflectors: tuple = ()
    blocked_only: bool = True

    def __post_init__(self):
        if len(self.lane_y) == 0:
            raise ValueError("scene needs at least one lane")
        if self.street_x[1] <= self.street_x[0]:
            raise ValueError("street_x range is empty")
        if len(self.class_mix) != len(self.class_extents):
            raise ValueError("class_mix and class_extents must align")
        if self.u_max < 0:
            raise ValueError("u_max must be nonnegative")

    @property
    def n_classes(self) -> int:
        return len(self.class_mix)


def generate_scene(config: SceneConfig, seed: int) -> Scene:
    """Deterministically sample one scene for the given seed."""
    rng = np.random.default_rng(seed)
    x0, x1 = config.street_x
    slots_per_lane = int((x1 - x0) // config.slot_spacing)
    slot_centers = x0 + config.slot_spacing * (0.5 + np.arange(slots_per_lane))
    grid = [(lane, x) for lane in config.lane_y for x in slot_centers]

    count = min(int(rng.poisson(config.mean_ue_count)), config.u_max, len(grid))
    picks = rng.choice(len(grid), size=count, replace=False) if count else []
    mix = np.asarray(config.class_mix, dtype=float)
    mix = mix / mix.sum()

    ues = []
    for g in picks:
        lane, x = grid[int(g)]
        x = x + rng.uniform(-config.slot_jitter, config.slot_jitter)
        class_id = int(rng.choice(len(mix), p=mix))
        extents = config.class_extents[class_id]
        ues.append(SceneUE((float(x), float(lane), extents[2] / 2.0),
                           tuple(extents), class_id))

    return Scene(ues=tuple(ues), blockers=tuple(config.blockers),
                 ris_pose=Pose(config.ris_position, config.ris_yaw_rad),
                 bs_position=config.bs_position,
                 reflectors=tuple(config.reflectors), seed=seed)


def bs_los_flags(scene: Scene) -> list[bool]:
    """Per-UE flag: True if the direct BS-UE segment is unobstructed."""
    return [not segment_blocked(scene.bs_position, ue.position, scene.blockers)
            for ue in scene.ues]


def generate_scenes(config: SceneConfig, n_scenes: int, base_seed: int):
    """Yield (scene_index, scene) with per-scene seeds base_seed + index.

    With config.blocked_only, only scenes where every UE lacks BS
    line-of-sight are emitted; indices keep their generation position.
    """
    for i in range(n_scenes):
        scene = generate_scene(config, base_seed + i)
        if config.blocked_only and any(bs_los_flags(scene)):
            continue
        yield i, scene


# ---------------------------------------------------------------------------
# Camera and synthetic detector
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CameraModel:
    position: tuple[float, float, float]
    yaw_rad: float
    fov_deg: float
    image_w: int
    image_h: int
    pitch_rad: float = 0.0
    name: str = "cam"

    def __post_init__(self):
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError("horizontal field of view must lie in (0, 180)")
        if self.image_w <= 0 or self.image_h <= 0:
            raise ValueError("image dimensions must be positive")

    @property
    def focal_px(self) -> float:
        return (self.image_w / 2.0) / np.tan(np.radians(self.fov_deg) / 2.0)

    def axes(self):
        cy, sy = np.cos(self.yaw_rad), np.sin(self.yaw_rad)
        cp, sp = np.cos(self.pitch_rad), np.sin(self.pitch_rad)
        forward = np.array([cp * cy, cp * sy, sp])
        right = np.array([sy, -cy, 0.0])
        down = np.cross(forward, right)
        return forward, right, down


@dataclass(frozen=True)
class DetectedUE:
    """Detector output: class index + pixel bounding box (cx, cy, w, h)."""

    class_id: int
    bbox: tuple[float, float, float, float]


@dataclass(frozen=True)
class DetectorNoise:
    sigma_px: float = 2.0
    miss_prob: float = 0.05
    clutter_rate: float = 0.02
    n_classes: int = 3


_NEAR_PLANE = 0.1


def project_point(cam: CameraModel, point) -> tuple[float, float, float]:
    """Pinhole projection: pixel (u, v) plus depth along the optical axis."""
    forward, right, down = cam.axes()
    d = np.asarray(point, dtype=float) - np.asarray(cam.position, dtype=float)
    depth = float(d @ forward)
    if depth <= _NEAR_PLANE:
        return np.nan, np.nan, depth
    u = cam.image_w / 2.0 + cam.focal_px * float(d @ right) / depth
    v = cam.image_h / 2.0 + cam.focal_px * float(d @ down) / depth
    return u, v, depth


def _box_corners(ue: SceneUE) -> np.ndarray:
    c = np.asarray(ue.position, dtype=float)
    half = np.asarray(ue.extents, dtype=float) / 2.0
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1)
                      for sz in (-1, 1)], dtype=float)
    return c + signs * half


def _project_bbox(cam: CameraModel, ue: SceneUE):
    """Clamped pixel bbox of the UE's box, or None when outside the frustum."""
    cu, cv, cd = project_point(cam, ue.position)
    if cd <= _NEAR_PLANE or not (0.0 <= cu <= cam.image_w and 0.0 <= cv <= cam.image_h):
        return None
    us, vs = [], []
    for corner in _box_corners(ue):
        u, v, depth = project_point(cam, corner)
        if depth <= _NEAR_PLANE:
            return None
        us.append(u)
        vs.append(v)
    u_lo = max(min(us), 0.0)
    u_hi = min(max(us), float(cam.image_w))
    v_lo = max(min(vs), 0.0)
    v_hi = min(max(vs), float(cam.image_h))
    if u_hi - u_lo <= 0.0 or v_hi - v_lo <= 0.0:
        return None
    return u_lo, u_hi, v_lo, v_hi


def visible_ue_indices(scene: Scene, cam: CameraModel) -> list[int]:
    """Ground-truth visibility: inside the frustum and unoccluded by blockers."""
    out = []
    for i, ue in enumerate(scene.ues):
        if _project_bbox(cam, ue) is None:
            continue
        if segment_blocked(cam.position, ue.position, scene.blockers):
            continue
        out.append(i)
    return out


def project_detect(scene: Scene, cam: CameraModel,
                   noise: DetectorNoise | None, seed) -> list[DetectedUE]:
    """Synthetic object detector for one camera view.

    Every visible UE yields the clamped projection of its box corners, then
    noise (when given) jitters the box edges, drops detections with the miss
    probability and adds Poisson clutter.  Output is sorted by x-center.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    dets = []
    for i in visible_ue_indices(scene, cam):
        ue = scene.ues[i]
        u_lo, u_hi, v_lo, v_hi = _project_bbox(cam, ue)
        if noise is not None:
            if rng.uniform() < noise.miss_prob:
                continue
            u_lo, u_hi, v_lo, v_hi = (
                edge + rng.normal(0.0, noise.sigma_px)
                for edge in (u_lo, u_hi, v_lo, v_hi))
            u_lo, u_hi = sorted((max(u_lo, 0.0), min(u_hi, float(cam.image_w))))
            v_lo, v_hi = sorted((max(v_lo, 0.0), min(v_hi, float(cam.image_h))))
        w = max(u_hi - u_lo, 1.0)
        h = max(v_hi - v_lo, 1.0)
        dets.append(DetectedUE(ue.class_id,
                               ((u_lo + u_hi) / 2.0, (v_lo + v_hi) / 2.0, w, h)))
    if noise is not None and noise.clutter_rate > 0:
        for _ in range(rng.poisson(noise.clutter_rate)):
            w = rng.uniform(8.0, 80.0)
            h = rng.uniform(8.0, 80.0)
            cx = rng.uniform(w / 2.0, cam.image_w - w / 2.0)
            cy = rng.uniform(h / 2.0, cam.image_h - h / 2.0)
            dets.append(DetectedUE(int(rng.integers(noise.n_classes)),
                                   (cx, cy, w, h)))
    dets.sort(key=lambda d: d.bbox[0])
    return dets


# ---------------------------------------------------------------------------
# Input encoding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UEInfoMatrix:
    """Zero-padded per-UE feature vectors, shape (u_max, n_classes + 4).

    The first valid_count rows hold one-hot class + normalized bbox; the
    remaining rows are exactly zero.  truncated marks dropped detections.
    """

    ue_vectors: np.ndarray
    valid_count: int
    truncated: bool = False


def encode_ue_info(dets, cam: CameraModel, n_classes: int, u_max: int) -> UEInfoMatrix:
    """One-hot class + image-normalized bbox per detection, zero-padded."""
    truncated = len(dets) > u_max
    kept = dets[:u_max]
    mat = np.zeros((u_max, n_classes + 4), dtype=float)
    for row, det in enumerate(kept):
        if not 0 <= det.class_id < n_classes:
            raise ValueError(f"class id {det.class_id} outside [0, {n_classes})")
        mat[row, det.class_id] = 1.0
        cx, cy, w, h = det.bbox
        norm = np.array([cx / cam.image_w, cy / cam.image_h,
                         w / cam.image_w, h / cam.image_h])
        mat[row, n_classes:] = np.clip(norm, 0.0, 1.0)
    return UEInfoMatrix(mat, valid_count=len(kept), truncated=truncated)


# ---------------------------------------------------------------------------
# Dataset records and manifest
# ---------------------------------------------------------------------------

def dataset_record(scene_index: int, scene: Scene, cam: CameraModel,
                   dets, info: UEInfoMatrix, target_indices,
                   los_flags) -> dict:
    """One serializable camera-scene record joining geometry and targets."""
    return {
        "scene": scene_index,
        "seed": scene.seed,
        "camera": cam.name,
        "ris": [list(scene.ris_pose.position), scene.ris_pose.yaw_rad],
        "bs": list(scene.bs_position),
        "ues": [[*ue.position, *ue.extents, ue.class_id] for ue in scene.ues],
        "blockers": [[*b.min_corner, *b.max_corner] for b in scene.blockers],
        "reflectors": [list(r) for r in scene.reflectors],
        "bs_los": [bool(f) for f in los_flags],
        "dets": [[d.class_id, *d.bbox] for d in dets],
        "v": info.ue_vectors.tolist(),
        "valid": info.valid_count,
        "truncated": info.truncated,
        "target": sorted({int(t) for t in target_indices}),
    }


def scene_from_record(rec: dict) -> Scene:
    ues = tuple(SceneUE((u[0], u[1], u[2]), (u[3], u[4], u[5]), int(u[6]))
                for u in rec["ues"])
    blockers = tuple(Box(tuple(b[:3]), tuple(b[3:])) for b in rec["blockers"])
    return Scene(ues=ues, blockers=blockers,
                 ris_pose=Pose(tuple(rec["ris"][0]), rec["ris"][1]),
                 bs_position=tuple(rec["bs"]),
                 reflectors=tuple(tuple(r) for r in rec["reflectors"]),
                 seed=rec["seed"])


def write_dataset(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_dataset(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir, manifest: dict) -> None:
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(out_dir) -> dict:
    with open(os.path.join(out_dir, "manifest.json")) as fh:
        return json.load(fh)


def verify_manifest(out_dir) -> dict:
    """Check every file referenced by the manifest exists and hash-matches."""
    manifest = read_manifest(out_dir)
    for name, entry in manifest["files"].items():
        path = os.path.join(out_dir, entry["path"])
        if not os.path.exists(path):
            raise FileNotFoundError(f"manifest references missing file: {path}")
        actual = file_sha256(path)
        if actual != entry["sha256"]:
            raise ValueError(f"hash mismatch for {name}: manifest "
                             f"{entry['sha256'][:12]}.., file {actual[:12]}..")
    return manifest
