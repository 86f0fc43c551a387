"""Wideband geometric multipath channels for RIS-aided links.

Builds per-subcarrier frequency-domain channel vectors between a uniform
planar array (the RIS) and a single-antenna endpoint (BS or UE) from a
list of path clusters, and derives those clusters deterministically from
scene geometry (LoS visibility plus first-order point reflectors).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299792458.0

PULSE_SHAPES = ("sinc", "raised_cosine")


# ---------------------------------------------------------------------------
# Geometry primitives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    """Axis-aligned box used as a signal blocker."""

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=float)
        hi = np.asarray(self.max_corner, dtype=float)
        if not np.all(lo <= hi):
            raise ValueError(f"box min_corner must be <= max_corner, got {lo} / {hi}")


def segment_intersects_box(p0, p1, box: Box) -> bool:
    """True if the open segment p0 -> p1 passes through the box (slab test)."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    d = p1 - p0
    lo = np.asarray(box.min_corner, dtype=float)
    hi = np.asarray(box.max_corner, dtype=float)
    t_min, t_max = 0.0, 1.0
    for axis in range(3):
        if abs(d[axis]) < 1e-15:
            if p0[axis] < lo[axis] or p0[axis] > hi[axis]:
                return False
            continue
        t0 = (lo[axis] - p0[axis]) / d[axis]
        t1 = (hi[axis] - p0[axis]) / d[axis]
        if t0 > t1:
            t0, t1 = t1, t0
        t_min = max(t_min, t0)
        t_max = min(t_max, t1)
        if t_min > t_max:
            return False
    return True


def segment_blocked(p0, p1, blockers) -> bool:
    """True if any blocker box interrupts the segment p0 -> p1."""
    return any(segment_intersects_box(p0, p1, b) for b in blockers)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array: rows x cols elements, spacing in wavelengths."""

    rows: int
    cols: int
    spacing: float = 0.5

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("array must have at least one row and one column")
        if self.spacing <= 0:
            raise ValueError("element spacing must be positive")

    @property
    def n_elements(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class PathCluster:
    """One propagation path: complex gain, delay and angles of arrival."""

    gain: complex
    delay_s: float
    azimuth_rad: float
    elevation_rad: float

    def __post_init__(self):
        if self.delay_s < 0:
            raise ValueError("path delay must be nonnegative")
        if not np.isfinite(abs(self.gain)):
            raise ValueError("path gain must be finite")


@dataclass(frozen=True)
class WidebandParams:
    """OFDM-style wideband parameters.

    subcarriers:     number of subcarriers K (indexed 0..K-1)
    sample_period_s: tap spacing of the delay-domain channel
    max_delay_taps:  number of delay taps D kept before the DFT
    pathloss:        linear pathloss normalization dividing the channel power
    pulse_shape:     "sinc" (ideal band-limited) or "raised_cosine"
    rolloff:         raised-cosine excess bandwidth, used only for that pulse
    """

    subcarriers: int
    sample_period_s: float
    max_delay_taps: int
    pathloss: float = 1.0
    pulse_shape: str = "sinc"
    rolloff: float = 0.3

    def __post_init__(self):
        if self.subcarriers < 1:
            raise ValueError("need at least one subcarrier")
        if self.max_delay_taps < 1:
            raise ValueError("need at least one delay tap")
        if self.sample_period_s <= 0:
            raise ValueError("sample period must be positive")
        if self.pathloss <= 0:
            raise ValueError("pathloss must be positive")
        if self.pulse_shape not in PULSE_SHAPES:
            raise ValueError(f"pulse_shape must be one of {PULSE_SHAPES}")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError("rolloff must lie in [0, 1]")


@dataclass(frozen=True)
class FreqChannel:
    """Per-subcarrier channel vectors, shape (K, M)."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.ndim != 2:
            raise ValueError("frequency channel must be a 2-D (K, M) array")
        if not np.all(np.isfinite(mat.real)) or not np.all(np.isfinite(mat.imag)):
            raise ValueError("frequency channel entries must be finite")
        object.__setattr__(self, "matrix", mat)

    @property
    def subcarriers(self) -> int:
        return self.matrix.shape[0]

    @property
    def elements(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class LinkBudget:
    """Transmit power and receiver noise power, both in watts."""

    tx_power_w: float
    noise_power_w: float

    def __post_init__(self):
        if self.tx_power_w < 0:
            raise ValueError("transmit power must be nonnegative")
        if self.noise_power_w <= 0:
            raise ValueError("noise power must be strictly positive")

    def snr(self, subcarriers: int) -> float:
        """Per-subcarrier transmit SNR: tx_power / (K * noise_power)."""
        return self.tx_power_w / (subcarriers * self.noise_power_w)


# ---------------------------------------------------------------------------
# Channel synthesis
# ---------------------------------------------------------------------------

def array_response(geom: ArrayGeometry, azimuth_rad: float, elevation_rad: float) -> np.ndarray:
    """Steering vector of the planar array toward (azimuth, elevation).

    Element (r, c) sits at index m = r * cols + c and carries phase
    2*pi*spacing*(c*cos(el)*sin(az) + r*sin(el)), with azimuth measured
    from the array broadside.  All entries have unit modulus.
    """
    if not (np.isfinite(azimuth_rad) and np.isfinite(elevation_rad)):
        raise ValueError("angles must be finite")
    r = np.arange(geom.rows)[:, None]
    c = np.arange(geom.cols)[None, :]
    phase = 2.0 * np.pi * geom.spacing * (
        c * np.cos(elevation_rad) * np.sin(azimuth_rad) + r * np.sin(elevation_rad)
    )
    return np.exp(1j * phase).reshape(-1)


def _pulse(params: WidebandParams, t_seconds: np.ndarray) -> np.ndarray:
    """Pulse shaping function evaluated at t seconds for T_s-spaced signaling."""
    x = np.asarray(t_seconds, dtype=float) / params.sample_period_s
    if params.pulse_shape == "sinc":
        return np.sinc(x)
    beta = params.rolloff
    if beta == 0.0:
        return np.sinc(x)
    # Raised cosine with the removable singularity at |x| = 1/(2 beta).
    denom = 1.0 - (2.0 * beta * x) ** 2
    singular = np.abs(denom) < 1e-10
    safe = np.where(singular, 1.0, denom)
    value = np.sinc(x) * np.cos(np.pi * beta * x) / safe
    limit = (np.pi / 4.0) * np.sinc(1.0 / (2.0 * beta))
    return np.where(singular, limit, value)


def delay_domain_channel(clusters, geom: ArrayGeometry, params: WidebandParams,
                         tap: int) -> np.ndarray:
    """Delay-domain channel vector at one tap.

    Returns sqrt(M / pathloss) * sum_l gain_l * p(tap*T_s - delay_l) * a(az_l, el_l).
    """
    if not 0 <= tap < params.max_delay_taps:
        raise ValueError(f"tap {tap} outside [0, {params.max_delay_taps})")
    m = geom.n_elements
    out = np.zeros(m, dtype=complex)
    t = tap * params.sample_period_s
    for cl in clusters:
        w = _pulse(params, t - cl.delay_s)
        if w == 0.0:
            continue
        out += cl.gain * w * array_response(geom, cl.azimuth_rad, cl.elevation_rad)
    return np.sqrt(m / params.pathloss) * out


def freq_channel(clusters, geom: ArrayGeometry, params: WidebandParams) -> FreqChannel:
    """Frequency-domain channel: h_k = sum_d h_d * exp(-j 2 pi k d / K)."""
    k_count = params.subcarriers
    d_count = params.max_delay_taps
    m = geom.n_elements
    if not clusters:
        return FreqChannel(np.zeros((k_count, m), dtype=complex))
    gains = np.array([cl.gain for cl in clusters], dtype=complex)
    delays = np.array([cl.delay_s for cl in clusters], dtype=float)
    steering = np.stack([
        array_response(geom, cl.azimuth_rad, cl.elevation_rad) for cl in clusters
    ])  # (L, M)
    taps = np.arange(d_count)[:, None] * params.sample_period_s - delays[None, :]
    weights = gains[None, :] * _pulse(params, taps)  # (D, L)
    h_d = np.sqrt(m / params.pathloss) * (weights @ steering)  # (D, M)
    k = np.arange(k_count)[:, None]
    dft = np.exp(-2j * np.pi * k * np.arange(d_count)[None, :] / k_count)  # (K, D)
    return FreqChannel(dft @ h_d)


def clusters_from_geometry(tx_pos, rx_pos, reflectors, blockers,
                           carrier_wavelength: float, seed,
                           rx_yaw_rad: float = 0.0) -> list[PathCluster]:
    """Derive path clusters from scene geometry.

    A LoS cluster exists iff no blocker interrupts tx -> rx.  Each reflector
    point with both legs unblocked contributes one first-order cluster with
    delay from the unfolded path length.  Gain amplitudes follow free-space
    pathloss, wavelength / (4 pi d); phases are uniform under the seed.
    Angles of arrival are measured at rx in a frame whose broadside is the
    +x axis rotated by rx_yaw_rad about z.

    seed may be an int or a sequence of ints (both feed a SeedSequence),
    and identical seeds yield bit-identical cluster lists.
    """
    tx = np.asarray(tx_pos, dtype=float)
    rx = np.asarray(rx_pos, dtype=float)
    if np.allclose(tx, rx):
        raise ValueError("tx and rx positions must be distinct")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    clusters: list[PathCluster] = []

    def aoa(source_point):
        d = np.asarray(source_point, dtype=float) - rx
        cy, sy = np.cos(rx_yaw_rad), np.sin(rx_yaw_rad)
        lx = cy * d[0] + sy * d[1]
        ly = -sy * d[0] + cy * d[1]
        lz = d[2]
        return np.arctan2(ly, lx), np.arctan2(lz, np.hypot(lx, ly))

    if not segment_blocked(tx, rx, blockers):
        dist = float(np.linalg.norm(tx - rx))
        az, el = aoa(tx)
        amp = carrier_wavelength / (4.0 * np.pi * dist)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        clusters.append(PathCluster(amp * np.exp(1j * phase), dist / SPEED_OF_LIGHT, az, el))

    for refl in reflectors:
        refl = np.asarray(refl, dtype=float)
        if segment_blocked(tx, refl, blockers) or segment_blocked(refl, rx, blockers):
            continue
        dist = float(np.linalg.norm(tx - refl) + np.linalg.norm(refl - rx))
        az, el = aoa(refl)
        amp = carrier_wavelength / (4.0 * np.pi * dist)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        clusters.append(PathCluster(amp * np.exp(1j * phase), dist / SPEED_OF_LIGHT, az, el))

    return clusters


# ---------------------------------------------------------------------------
# Channel snapshot serialization (one text record per scene)
# ---------------------------------------------------------------------------

@dataclass
class ChannelSnapshot:
    """Channels of one scene: the BS link plus one link per UE."""

    scene_id: int
    bs_clusters: list = field(default_factory=list)
    bs_channel: FreqChannel | None = None
    ue_clusters: list = field(default_factory=list)   # list of cluster lists
    ue_channels: list = field(default_factory=list)   # list of FreqChannel


def _clusters_to_fields(clusters) -> list:
    return [[cl.gain.real, cl.gain.imag, cl.delay_s, cl.azimuth_rad, cl.elevation_rad]
            for cl in clusters]


def _clusters_from_fields(rows) -> list[PathCluster]:
    return [PathCluster(complex(re, im), delay, az, el) for re, im, delay, az, el in rows]


def _channel_to_fields(ch: FreqChannel) -> list:
    flat = ch.matrix.reshape(-1)
    inter = np.empty(2 * flat.size, dtype=float)
    inter[0::2] = flat.real
    inter[1::2] = flat.imag
    return inter.tolist()


def _channel_from_fields(fields, k: int, m: int) -> FreqChannel:
    inter = np.asarray(fields, dtype=float)
    flat = inter[0::2] + 1j * inter[1::2]
    return FreqChannel(flat.reshape(k, m))


def save_channel_snapshots(path, snapshots) -> None:
    """Write snapshots as line-delimited JSON records (interleaved re/im)."""
    with open(path, "w") as fh:
        for snap in snapshots:
            rec = {
                "scene": snap.scene_id,
                "k": snap.bs_channel.subcarriers,
                "m": snap.bs_channel.elements,
                "bs": {
                    "clusters": _clusters_to_fields(snap.bs_clusters),
                    "freq": _channel_to_fields(snap.bs_channel),
                },
                "ues": [
                    {"clusters": _clusters_to_fields(cl), "freq": _channel_to_fields(ch)}
                    for cl, ch in zip(snap.ue_clusters, snap.ue_channels)
                ],
            }
            fh.write(json.dumps(rec) + "\n")


def load_channel_snapshots(path) -> list[ChannelSnapshot]:
    snapshots = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            k, m = rec["k"], rec["m"]
            snapshots.append(ChannelSnapshot(
                scene_id=rec["scene"],
                bs_clusters=_clusters_from_fields(rec["bs"]["clusters"]),
                bs_channel=_channel_from_fields(rec["bs"]["freq"], k, m),
                ue_clusters=[_clusters_from_fields(u["clusters"]) for u in rec["ues"]],
                ue_channels=[_channel_from_fields(u["freq"], k, m) for u in rec["ues"]],
            ))
    return snapshots
