"""End-to-end experiment orchestration at desk scale.

Wires the channel, beam, scene, network and protocol layers into four
reproducible pipelines: dataset generation (scenes -> channels ->
detections -> encoded inputs -> beam-set targets, plus a manifest),
per-camera training, evaluation (set metrics, rate vs SNR against the
equal-gain bound and the exhaustive sweep, rate vs candidate-set size),
and initial-access protocol runs with overhead accounting.  Every output
is a delimiter-separated table with a header row, byte-reproducible under
fixed seeds.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import beams, channel, protocol, scene, setnet
from .beams import BeamSet, ReferenceVector
from .channel import ArrayGeometry, Box, LinkBudget, WidebandParams
from .scene import CameraModel, DetectorNoise, SceneConfig
from .setnet import Batch, TrainConfig, threshold_set, top_k_set


# ---------------------------------------------------------------------------
# Configuration tree
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelSetup:
    subcarriers: int = 16
    sample_period_s: float = 1e-8
    max_delay_taps: int = 64
    pulse_shape: str = "sinc"
    rolloff: float = 0.3
    carrier_wavelength: float = 0.0107


@dataclass(frozen=True)
class RisSetup:
    rows: int = 8
    cols: int = 8
    spacing: float = 0.5


@dataclass(frozen=True)
class CodebookSetup:
    oversample: int = 1
    phase_bits: int | None = 3


@dataclass(frozen=True)
class BudgetSetup:
    tx_power_w: float = 1.0
    noise_power_w: float = 1e-13


@dataclass(frozen=True)
class CameraSetup:
    name: str = "cam0"
    yaw_offset_deg: float = 0.0
    fov_deg: float = 110.0
    image_w: int = 640
    image_h: int = 360
    pitch_deg: float = 0.0


@dataclass(frozen=True)
class NetSetup:
    hidden: tuple = (64, 64)
    init_seed: int = 0


@dataclass(frozen=True)
class ProtocolSetup:
    ssb_period_ms: float = 20.0
    prach_offset_ms: float = 5.0
    msg_latency_ms: float = 2.0
    sync_cycles: int = 1
    dwell_cycles: int = 2
    detect_threshold_db: float = -6.0
    policy_size: int = 3


@dataclass(frozen=True)
class DatasetSetup:
    n_scenes: int = 2000
    split_fraction: float = 0.8
    store_channels: bool = True     # also write per-scene channel snapshots

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split fraction must lie in (0, 1)")


@dataclass(frozen=True)
class EvalSetup:
    snr_offsets_db: tuple = (-10.0, -5.0, 0.0, 5.0, 10.0)
    top_k: tuple = (1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64)


@dataclass(frozen=True)
class ExperimentConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    cameras: tuple = (CameraSetup("cam0", 0.0, 110.0),
                      CameraSetup("cam1", -35.0, 75.0))
    detector: DetectorNoise = field(default_factory=DetectorNoise)
    channel: ChannelSetup = field(default_factory=ChannelSetup)
    ris: RisSetup = field(default_factory=RisSetup)
    codebook: CodebookSetup = field(default_factory=CodebookSetup)
    budget: BudgetSetup = field(default_factory=BudgetSetup)
    net: NetSetup = field(default_factory=NetSetup)
    # desk-scale training runs longer than the bare TrainConfig default
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=250))
    protocol: ProtocolSetup = field(default_factory=ProtocolSetup)
    dataset: DatasetSetup = field(default_factory=DatasetSetup)
    eval: EvalSetup = field(default_factory=EvalSetup)
    seed: int = 1


def config_to_dict(config: ExperimentConfig) -> dict:
    d = dataclasses.asdict(config)
    d["scene"]["blockers"] = [[list(b.min_corner), list(b.max_corner)]
                              for b in config.scene.blockers]
    return d


def _tupleize(value):
    if isinstance(value, list):
        return tuple(_tupleize(v) for v in value)
    return value


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from a (possibly partial) plain dict; missing keys
    keep their defaults."""
    data = dict(data)
    kwargs = {}
    sections = {
        "scene": SceneConfig, "detector": DetectorNoise, "channel": ChannelSetup,
        "ris": RisSetup, "codebook": CodebookSetup, "budget": BudgetSetup,
        "net": NetSetup, "train": TrainConfig, "protocol": ProtocolSetup,
        "dataset": DatasetSetup, "eval": EvalSetup,
    }
    for name, cls in sections.items():
        if name not in data:
            continue
        section = dict(data.pop(name))
        if name == "scene" and "blockers" in section:
            section["blockers"] = tuple(
                Box(tuple(lo), tuple(hi)) for lo, hi in section["blockers"])
        section = {k: _tupleize(v) if not (name == "scene" and k == "blockers")
                   else v for k, v in section.items()}
        kwargs[name] = cls(**section)
    if "cameras" in data:
        kwargs["cameras"] = tuple(CameraSetup(**c) for c in data.pop("cameras"))
    if "seed" in data:
        kwargs["seed"] = int(data.pop("seed"))
    if data:
        raise ValueError(f"unknown config keys: {sorted(data)}")
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Result tables
# ---------------------------------------------------------------------------

@dataclass
class ResultTable:
    """Rectangular named-column table, persisted as CSV with a header row."""

    columns: list
    rows: list = field(default_factory=list)

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("column names must be unique")

    def append(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"row width {len(values)} != {len(self.columns)} columns")
        self.rows.append(list(values))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    @staticmethod
    def _format(value) -> str:
        if isinstance(value, float):
            return repr(value)
        return str(value)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(",".join(self._format(v) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "ResultTable":
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
        table = cls(lines[0].split(","))
        for ln in lines[1:]:
            cells = []
            for raw in ln.split(","):
                try:
                    cells.append(int(raw))
                except ValueError:
                    try:
                        cells.append(float(raw))
                    except ValueError:
                        cells.append(raw)
            table.rows.append(cells)
        return table


# ---------------------------------------------------------------------------
# Shared builders
# ---------------------------------------------------------------------------

def build_geometry(config: ExperimentConfig) -> ArrayGeometry:
    return ArrayGeometry(config.ris.rows, config.ris.cols, config.ris.spacing)


def build_wideband(config: ExperimentConfig) -> WidebandParams:
    ch = config.channel
    return WidebandParams(ch.subcarriers, ch.sample_period_s, ch.max_delay_taps,
                          pulse_shape=ch.pulse_shape, rolloff=ch.rolloff)


def build_codebooks(config: ExperimentConfig):
    """(UE-side, BS-side) codebooks pinned by the config."""
    cb = beams.dft_upa_codebook(config.ris.rows, config.ris.cols,
                                config.ris.spacing, config.codebook.oversample,
                                config.codebook.phase_bits)
    return cb, cb


def build_budget(config: ExperimentConfig, snr_offset_db: float = 0.0) -> LinkBudget:
    scale = 10.0 ** (snr_offset_db / 10.0)
    return LinkBudget(config.budget.tx_power_w * scale, config.budget.noise_power_w)


def build_cameras(config: ExperimentConfig) -> list:
    cams = []
    for cam in config.cameras:
        cams.append(CameraModel(
            position=config.scene.ris_position,
            yaw_rad=config.scene.ris_yaw_rad + np.radians(cam.yaw_offset_deg),
            fov_deg=cam.fov_deg, image_w=cam.image_w, image_h=cam.image_h,
            pitch_rad=np.radians(cam.pitch_deg), name=cam.name))
    return cams


def scene_channels(scn: scene.Scene, config: ExperimentConfig):
    """BS-RIS channel and one RIS-UE channel per UE, seeded per link."""
    geom = build_geometry(config)
    params = build_wideband(config)
    wavelength = config.channel.carrier_wavelength
    rx = scn.ris_pose.position
    yaw = scn.ris_pose.yaw_rad
    bs_clusters = channel.clusters_from_geometry(
        scn.bs_position, rx, scn.reflectors, scn.blockers, wavelength,
        seed=(scn.seed, 1), rx_yaw_rad=yaw)
    bs_ch = channel.freq_channel(bs_clusters, geom, params)
    ue_chs = []
    for u, ue in enumerate(scn.ues):
        clusters = channel.clusters_from_geometry(
            ue.position, rx, scn.reflectors, scn.blockers, wavelength,
            seed=(scn.seed, 100 + u), rx_yaw_rad=yaw)
        ue_chs.append(channel.freq_channel(clusters, geom, params))
    return bs_ch, ue_chs


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------

def generate_dataset(config: ExperimentConfig, out_dir) -> dict:
    """Write per-camera datasets, codebooks and the manifest; returns it."""
    os.makedirs(out_dir, exist_ok=True)
    ue_cb, bs_cb = build_codebooks(config)
    cameras = build_cameras(config)
    ref = ReferenceVector.ones(build_geometry(config).n_elements)

    try:
        beams.export_codebook(ue_cb, os.path.join(out_dir, "ue_codebook.txt"))
        beams.export_codebook(bs_cb, os.path.join(out_dir, "bs_codebook.txt"))
    except OSError as exc:
        raise OSError(f"cannot write codebooks under {out_dir}: {exc}") from exc

    records = {cam.name: [] for cam in cameras}
    for scene_index, scn in scene.generate_scenes(config.scene,
                                                  config.dataset.n_scenes,
                                                  base_seed=config.seed):
        _, ue_chs = scene_channels(scn, config)
        los = scene.bs_los_flags(scn)
        for cam_i, cam in enumerate(cameras):
            visible = scene.visible_ue_indices(scn, cam)
            if not visible:
                continue
            target = {beams.decoupled_ue_beam(ue_chs[u], ue_cb, ref)
                      for u in visible}
            dets = scene.project_detect(scn, cam, config.detector,
                                        seed=(scn.seed, 300 + cam_i))
            info = scene.encode_ue_info(dets, cam, config.scene.n_classes,
                                        config.scene.u_max)
            records[cam.name].append(scene.dataset_record(
                scene_index, scn, cam, dets, info, target, los))

    files, split = {}, {}
    for cam in cameras:
        fname = f"dataset_{cam.name}.jsonl"
        path = os.path.join(out_dir, fname)
        try:
            scene.write_dataset(path, records[cam.name])
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        n = len(records[cam.name])
        n_train = int(round(config.dataset.split_fraction * n))
        files[cam.name] = {"path": fname, "sha256": scene.file_sha256(path)}
        split[cam.name] = {"n_records": n, "n_train": n_train,
                           "n_test": n - n_train}
    for name in ("ue_codebook.txt", "bs_codebook.txt"):
        path = os.path.join(out_dir, name)
        files[name] = {"path": name, "sha256": scene.file_sha256(path)}

    manifest = {
        "config": config_to_dict(config),
        "seed": config.seed,
        "n_scenes": config.dataset.n_scenes,
        "cameras": [cam.name for cam in cameras],
        "codebook_hash": {"ue": beams.codebook_hash(ue_cb),
                          "bs": beams.codebook_hash(bs_cb)},
        "files": files,
        "split": split,
    }
    scene.write_manifest(out_dir, manifest)
    return manifest


def load_dataset(dataset_dir):
    """Verified manifest plus per-camera records and pinned codebooks."""
    manifest = scene.verify_manifest(dataset_dir)
    records = {}
    for cam in manifest["cameras"]:
        path = os.path.join(dataset_dir, manifest["files"][cam]["path"])
        records[cam] = scene.read_dataset(path)
    ue_cb = beams.load_codebook(os.path.join(dataset_dir, "ue_codebook.txt"))
    bs_cb = beams.load_codebook(os.path.join(dataset_dir, "bs_codebook.txt"))
    for cb, key in ((ue_cb, "ue"), (bs_cb, "bs")):
        if beams.codebook_hash(cb) != manifest["codebook_hash"][key]:
            raise ValueError(f"{key} codebook hash differs from the manifest; "
                             "targets would not match this codebook")
    return manifest, records, ue_cb, bs_cb


def records_to_batch(records, q_size: int) -> Batch:
    feats = np.array([rec["v"] for rec in records], dtype=float)
    valid = np.array([rec["valid"] for rec in records], dtype=int)
    targets = np.stack([setnet.multi_hot(rec["target"], q_size)
                        for rec in records])
    return Batch(feats, valid, targets)


def _split_records(manifest, records, cam):
    n_train = manifest["split"][cam]["n_train"]
    return records[cam][:n_train], records[cam][n_train:]


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def train_models(config: ExperimentConfig, dataset_dir, out_dir) -> dict:
    """Train one network per camera; persist parameters and curve tables."""
    os.makedirs(out_dir, exist_ok=True)
    manifest, records, ue_cb, _ = load_dataset(dataset_dir)
    q_size = len(ue_cb)
    dims = [config.scene.n_classes + 4, *config.net.hidden, q_size]
    outputs = {}
    for cam_i, cam in enumerate(manifest["cameras"]):
        train_recs, test_recs = _split_records(manifest, records, cam)
        if not train_recs:
            raise ValueError(f"camera {cam} has an empty training split")
        train_batch = records_to_batch(train_recs, q_size)
        test_batch = records_to_batch(test_recs, q_size) if test_recs else None
        init = setnet.init_net_params(dims, seed=config.net.init_seed + cam_i)
        params, curves = setnet.train(train_batch, config.train, init,
                                      test_batch=test_batch)
        model_path = os.path.join(out_dir, f"model_{cam}.txt")
        setnet.save_net_params(params, model_path)
        table = ResultTable(["epoch", "train_bits", "test_bits"])
        for row in curves:
            table.append(row["epoch"], row["train_bits"],
                         row.get("test_bits", float("nan")))
        table.to_csv(os.path.join(out_dir, f"curves_{cam}.csv"))
        outputs[cam] = {"params": params, "curves": table}
    return outputs


def load_models(model_dir, cameras) -> dict:
    return {cam: setnet.load_net_params(os.path.join(model_dir,
                                                     f"model_{cam}.txt"))
            for cam in cameras}


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

ORACLE_MODEL = "oracle"


def _record_scores(model, rec, q_size: int) -> np.ndarray:
    """Per-beam scores for one record; the oracle hook injects the targets."""
    if isinstance(model, str) and model == ORACLE_MODEL:
        bits = setnet.multi_hot(rec["target"], q_size)
        return 0.01 + 0.98 * bits
    info = scene.UEInfoMatrix(np.asarray(rec["v"], dtype=float), rec["valid"])
    return setnet.forward(model, info).scores


def _served_ue_channel(rec, config: ExperimentConfig, cam: CameraModel):
    """Channels for the record's scene; the served UE is the first visible."""
    scn = scene.scene_from_record(rec)
    bs_ch, ue_chs = scene_channels(scn, config)
    visible = scene.visible_ue_indices(scn, cam)
    if not visible:
        raise ValueError(f"record for scene {rec['scene']} has no visible UE")
    return bs_ch, ue_chs[visible[0]]


def evaluate(config: ExperimentConfig, dataset_dir, models,
             out_dir=None) -> dict:
    """Set metrics plus rate tables on the held-out split of every camera.

    models: mapping camera -> NetParams, or the string "oracle" to inject
    ground-truth targets (a perfect-prediction test hook).
    """
    manifest, records, ue_cb, bs_cb = load_dataset(dataset_dir)
    q_size = len(ue_cb)
    ref = ReferenceVector.ones(ue_cb.n_elements)
    cameras = {cam.name: cam for cam in build_cameras(config)}
    full_set = BeamSet.from_iterable(range(q_size))
    delta = config.train.threshold

    metrics = ResultTable(["camera", "n_test", "accuracy", "recall"])
    rate_snr = ResultTable(["camera", "snr_offset_db", "snr_db",
                            "rate_equal_gain", "rate_exhaustive",
                            "rate_predicted"])
    rate_k = ResultTable(["camera", "k", "rate_topk", "rate_exhaustive",
                          "rate_ratio"])

    for cam_name in manifest["cameras"]:
        _, test_recs = _split_records(manifest, records, cam_name)
        if not test_recs:
            raise ValueError(f"camera {cam_name} has an empty test split")
        model = models if isinstance(models, str) else models[cam_name]
        cam = cameras[cam_name]

        scores = [_record_scores(model, rec, q_size) for rec in test_recs]
        preds = [threshold_set(s, delta) for s in scores]
        truths = [BeamSet.from_iterable(rec["target"]) for rec in test_recs]
        acc, rec_rate = setnet.eval_metrics(preds, truths)
        metrics.append(cam_name, len(test_recs), acc, rec_rate)

        # per-record channels and the fixed BS-side beam
        channels = [_served_ue_channel(rec, config, cam) for rec in test_recs]
        p_idx = [beams.decoupled_bs_beam(bs, bs_cb, ref) for bs, _ in channels]

        def mean_rates(budget, beam_sets):
            eg, exh, sel = [], [], []
            for (bs_ch, ue_ch), p, chosen in zip(channels, p_idx, beam_sets):
                eg.append(beams.equal_gain_rate(bs_ch, ue_ch, budget))
                exh.append(beams.best_rate_in_set(bs_ch, ue_ch, ue_cb, p,
                                                  full_set, budget,
                                                  bs_codebook=bs_cb)[0])
                sel.append(beams.best_rate_in_set(bs_ch, ue_ch, ue_cb, p,
                                                  chosen, budget,
                                                  bs_codebook=bs_cb)[0])
            return (float(np.mean(eg)), float(np.mean(exh)), float(np.mean(sel)))

        for offset in config.eval.snr_offsets_db:
            budget = build_budget(config, offset)
            snr_db = 10.0 * np.log10(budget.snr(config.channel.subcarriers))
            eg, exh, sel = mean_rates(budget, preds)
            rate_snr.append(cam_name, float(offset), float(snr_db), eg, exh, sel)

        base_budget = build_budget(config)
        for k in config.eval.top_k:
            if k > q_size:
                continue
            sets = [top_k_set(s, k) for s in scores]
            _, exh, topk = mean_rates(base_budget, sets)
            rate_k.append(cam_name, int(k), topk, exh,
                          topk / exh if exh > 0 else float("nan"))

    tables = {"metrics": metrics, "rate_vs_snr": rate_snr, "rate_vs_k": rate_k}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for name, table in tables.items():
            table.to_csv(os.path.join(out_dir, f"{name}.csv"))
    return tables


# ---------------------------------------------------------------------------
# Protocol experiments
# ---------------------------------------------------------------------------

def run_protocol_experiments(config: ExperimentConfig, dataset_dir, models,
                             n_runs: int, out_dir=None, trace_dir=None) -> dict:
    """Initial-access runs over held-out records, predicted vs exhaustive.

    Both policies replay identical channels per run, so overhead numbers
    are directly comparable.  Returns the runs table, the per-policy
    summary table, and raw outcomes.
    """
    manifest, records, ue_cb, bs_cb = load_dataset(dataset_dir)
    q_size = len(ue_cb)
    cam_name = manifest["cameras"][0]
    cam = build_cameras(config)[0]
    _, test_recs = _split_records(manifest, records, cam_name)
    if not test_recs:
        raise ValueError("protocol experiments need a nonempty test split")
    model = models if isinstance(models, str) else models[cam_name]

    clock = protocol.ClockConfig(config.protocol.ssb_period_ms,
                                 config.protocol.prach_offset_ms,
                                 config.protocol.msg_latency_ms,
                                 config.protocol.sync_cycles)
    budget = build_budget(config)
    policy_size = min(config.protocol.policy_size, q_size)

    runs = ResultTable(["run", "scene", "policy", "beams_tried",
                        "t_access_ms", "success"])
    outcomes = {"predicted": [], "exhaustive": []}
    for i in range(n_runs):
        rec = test_recs[i % len(test_recs)]
        bs_ch, ue_ch = _served_ue_channel(rec, config, cam)
        pred_set = top_k_set(_record_scores(model, rec, q_size), policy_size)
        policies = {
            "predicted": protocol.SweepPolicy.predicted(
                pred_set, config.protocol.dwell_cycles),
            "exhaustive": protocol.SweepPolicy.exhaustive(
                ue_cb, config.protocol.dwell_cycles),
        }
        for name, policy in policies.items():
            sim = protocol.run_initial_access(
                bs_ch, ue_ch, bs_cb, ue_cb, policy, budget,
                config.protocol.detect_threshold_db, clock, seed=config.seed + i)
            out = sim.outcomes[0]
            outcomes[name].append(out)
            runs.append(i, rec["scene"], name, out.beams_tried,
                        out.t_access_ms if out.success else float("nan"),
                        int(out.success))
            if trace_dir is not None:
                os.makedirs(trace_dir, exist_ok=True)
                protocol.save_trace(
                    os.path.join(trace_dir, f"trace_{name}_{i:04d}.jsonl"),
                    sim.trace)

    summary = ResultTable(["policy", "n_runs", "n_success", "mean_beams_tried",
                           "mean_t_access_ms", "reduction_factor"])
    for name in ("predicted", "exhaustive"):
        rep = protocol.overhead_report(outcomes[name])
        summary.append(name, rep["n_runs"], rep["n_success"],
                       rep["mean_beams_tried"], rep["mean_t_access_ms"],
                       rep["reduction_factor"])
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        runs.to_csv(os.path.join(out_dir, "protocol_runs.csv"))
        summary.to_csv(os.path.join(out_dir, "protocol_summary.csv"))
    return {"runs": runs, "summary": summary, "outcomes": outcomes}


# ---------------------------------------------------------------------------
# Training-set-size study
# ---------------------------------------------------------------------------

def run_datafrac(config: ExperimentConfig, dataset_dir, fractions,
                 out_dir=None) -> ResultTable:
    """Retrain on leading fractions of the training split, fixed seeds."""
    fractions = [float(f) for f in fractions]
    if any(not 0.0 < f <= 1.0 for f in fractions):
        raise ValueError("fractions must lie in (0, 1]")
    manifest, records, ue_cb, _ = load_dataset(dataset_dir)
    q_size = len(ue_cb)
    dims = [config.scene.n_classes + 4, *config.net.hidden, q_size]
    table = ResultTable(["camera", "fraction", "n_train", "accuracy", "recall"])
    for cam_i, cam in enumerate(manifest["cameras"]):
        train_recs, test_recs = _split_records(manifest, records, cam)
        test_batch = records_to_batch(test_recs, q_size)
        truths = [BeamSet.from_iterable(rec["target"]) for rec in test_recs]
        for frac in fractions:
            n_used = max(1, int(round(frac * len(train_recs))))
            subset = records_to_batch(train_recs[:n_used], q_size)
            init = setnet.init_net_params(dims, seed=config.net.init_seed + cam_i)
            params, _ = setnet.train(subset, config.train, init)
            preds = []
            for s in range(len(test_batch)):
                info = scene.UEInfoMatrix(test_batch.features[s],
                                          int(test_batch.valid[s]))
                preds.append(setnet.predict_set(params, info,
                                                threshold=config.train.threshold))
            acc, rec_rate = setnet.eval_metrics(preds, truths)
            table.append(cam, frac, n_used, acc, rec_rate)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        table.to_csv(os.path.join(out_dir, "datafrac.csv"))
    return table
