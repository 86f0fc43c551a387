"""RIS reflection beams, codebooks and beam-selection solvers.

The RIS applies a single unit-modulus reflection vector to all subcarriers.
This module provides phase-only beam containers, DFT-style and fully
enumerated quantized codebooks, the achievable-rate objective, the joint
exhaustive search, the decoupled BS-side / UE-side selections against a
reference vector, the per-subcarrier equal-gain upper bound, and the
LoS-optimality gap between the decoupled and joint solutions.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass

import numpy as np

from .channel import FreqChannel, LinkBudget


def wrap_phase(phase):
    """Wrap angles into [-pi, pi)."""
    return np.mod(np.asarray(phase, dtype=float) + np.pi, 2.0 * np.pi) - np.pi


def quantize_phase(phase, bits: int):
    """Round phases to the nearest point of the 2^bits uniform grid."""
    step = 2.0 * np.pi / (2 ** bits)
    return wrap_phase(np.round(np.asarray(phase, dtype=float) / step) * step)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReflectBeam:
    """Unit-modulus reflection beam stored as per-element phases."""

    phases: np.ndarray

    def __post_init__(self):
        ph = wrap_phase(np.asarray(self.phases, dtype=float).reshape(-1))
        object.__setattr__(self, "phases", ph)

    @property
    def vector(self) -> np.ndarray:
        return np.exp(1j * self.phases)

    @classmethod
    def from_vector(cls, v) -> "ReflectBeam":
        return cls(np.angle(np.asarray(v, dtype=complex)))

    def __len__(self) -> int:
        return self.phases.size


@dataclass(frozen=True)
class PhaseCodebook:
    """Ordered finite set of reflection beams.

    phase_matrix holds one beam per row (n_beams, n_elements).  Beam j is
    stable under serialization, so datasets can pin the exact codebook.
    """

    phase_matrix: np.ndarray
    phase_bits: int | None = None
    kind: str = "custom"

    def __post_init__(self):
        mat = wrap_phase(np.asarray(self.phase_matrix, dtype=float))
        if mat.ndim != 2 or mat.shape[0] == 0:
            raise ValueError("codebook needs a nonempty 2-D phase matrix")
        object.__setattr__(self, "phase_matrix", mat)

    def __len__(self) -> int:
        return self.phase_matrix.shape[0]

    @property
    def n_elements(self) -> int:
        return self.phase_matrix.shape[1]

    @property
    def vectors(self) -> np.ndarray:
        """Complex beam matrix, shape (n_beams, n_elements)."""
        return np.exp(1j * self.phase_matrix)

    def beam(self, index: int) -> ReflectBeam:
        return ReflectBeam(self.phase_matrix[index])


def dft_upa_codebook(rows: int, cols: int, spacing: float = 0.5,
                     oversample: int = 1, phase_bits: int | None = 3) -> PhaseCodebook:
    """DFT-style grid codebook for a rows x cols planar array.

    Beams are conjugated steering vectors on a uniform grid of the two
    direction cosines (cos(el)*sin(az), sin(el)), so a LoS source on a grid
    point is matched exactly (before phase quantization).  The default grid
    has exactly rows*cols beams; oversample multiplies both axes.
    """
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    n_az = cols * oversample
    n_el = rows * oversample
    u = -1.0 + 2.0 * np.arange(n_az) / n_az
    w = -1.0 + 2.0 * np.arange(n_el) / n_el
    c = np.arange(cols)[None, :]
    r = np.arange(rows)[:, None]
    beams = []
    for wj in w:
        for ui in u:
            phase = -2.0 * np.pi * spacing * (c * ui + r * wj)
            beams.append(phase.reshape(-1))
    mat = np.asarray(beams)
    if phase_bits is not None:
        mat = quantize_phase(mat, phase_bits)
    return PhaseCodebook(mat, phase_bits=phase_bits, kind="dft_upa")


def quantized_all_codebook(n_elements: int, bits: int,
                           max_beams: int = 1 << 20) -> PhaseCodebook:
    """Every phase combination on the 2^bits grid; feasible only for tiny arrays."""
    levels = 2 ** bits
    n_beams = levels ** n_elements
    if n_beams > max_beams:
        raise ValueError(f"full quantized set has {n_beams} beams, above the "
                         f"{max_beams} guard")
    grid = -np.pi + 2.0 * np.pi * np.arange(levels) / levels
    idx = np.indices([levels] * n_elements).reshape(n_elements, -1).T
    return PhaseCodebook(grid[idx], phase_bits=bits, kind="quantized_all")


@dataclass(frozen=True)
class BeamSet:
    """Sorted set of codebook indices."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(sorted(set(int(i) for i in self.indices)))
        if any(i < 0 for i in idx):
            raise ValueError("beam indices must be nonnegative")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_iterable(cls, indices) -> "BeamSet":
        return cls(tuple(indices))

    def validate_against(self, codebook: PhaseCodebook) -> None:
        if self.indices and self.indices[-1] >= len(codebook):
            raise ValueError("beam set references indices outside the codebook")

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, index) -> bool:
        return index in self.indices


@dataclass(frozen=True)
class ReferenceVector:
    """Unit-modulus reference vector for the decoupled selections."""

    entries: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.entries, dtype=complex).reshape(-1)
        if not np.allclose(np.abs(v), 1.0, atol=1e-9):
            raise ValueError("reference vector entries must have unit modulus")
        object.__setattr__(self, "entries", v)

    @classmethod
    def ones(cls, n_elements: int) -> "ReferenceVector":
        return cls(np.ones(n_elements, dtype=complex))


# ---------------------------------------------------------------------------
# Rate objective and beam selection
# ---------------------------------------------------------------------------

def _effective_channel(bs_channel: FreqChannel, ue_channel: FreqChannel) -> np.ndarray:
    if bs_channel.matrix.shape != ue_channel.matrix.shape:
        raise ValueError("BS-side and UE-side channels must share (K, M) shape")
    return ue_channel.matrix * bs_channel.matrix


def _rate_from_gains(gains: np.ndarray, budget: LinkBudget, subcarriers: int) -> float:
    snr = budget.snr(subcarriers)
    return float(np.mean(np.log2(1.0 + snr * gains), axis=0))


def achievable_rate(bs_channel: FreqChannel, ue_channel: FreqChannel,
                    beam: ReflectBeam, budget: LinkBudget) -> float:
    """Subcarrier-averaged rate of one reflection beam, in bits/s/Hz."""
    eff = _effective_channel(bs_channel, ue_channel)
    if len(beam) != eff.shape[1]:
        raise ValueError("beam length must match the element count")
    gains = np.abs(eff @ beam.vector) ** 2
    return _rate_from_gains(gains, budget, eff.shape[0])


def joint_beam_search(bs_channel: FreqChannel, ue_channel: FreqChannel,
                      bs_codebook: PhaseCodebook, ue_codebook: PhaseCodebook,
                      budget: LinkBudget):
    """Exhaustive argmax over all BS-side x UE-side beam pairs.

    Returns (bs_index, ue_index, rate).  Ties resolve to the smallest
    (bs_index, ue_index) pair.
    """
    if len(bs_codebook) == 0 or len(ue_codebook) == 0:
        raise ValueError("codebooks must be nonempty")
    eff = _effective_channel(bs_channel, ue_channel)
    p = bs_codebook.vectors          # (np, M)
    q = ue_codebook.vectors          # (nq, M)
    # psi = p (x) q combos ordered bs-major so argmax keeps the tie-break.
    psi = (p[:, None, :] * q[None, :, :]).reshape(-1, eff.shape[1])
    gains = np.abs(eff @ psi.T) ** 2                      # (K, np*nq)
    snr = budget.snr(eff.shape[0])
    rates = np.mean(np.log2(1.0 + snr * gains), axis=0)
    best = int(np.argmax(rates))
    return best // len(ue_codebook), best % len(ue_codebook), float(rates[best])


def _decoupled_scores(channel: FreqChannel, codebook: PhaseCodebook,
                      ref: ReferenceVector, conjugate_side: bool) -> np.ndarray:
    if codebook.n_elements != channel.elements or ref.entries.size != channel.elements:
        raise ValueError("channel, codebook and reference dimensions must agree")
    if conjugate_side:
        # mean_k |(h_k o q)^H a|^2
        s = (np.conj(channel.matrix) * ref.entries[None, :]) @ np.conj(codebook.vectors).T
    else:
        # mean_k |(h_k o p)^H a*|^2 == mean_k |(h_k o p)^T a|^2
        s = (channel.matrix * ref.entries[None, :]) @ codebook.vectors.T
    return np.mean(np.abs(s) ** 2, axis=0)


def decoupled_bs_beam(bs_channel: FreqChannel, bs_codebook: PhaseCodebook,
                      ref: ReferenceVector) -> int:
    """BS-side selection: align the BS link with the reference vector alone."""
    if len(bs_codebook) == 0:
        raise ValueError("codebook must be nonempty")
    return int(np.argmax(_decoupled_scores(bs_channel, bs_codebook, ref, False)))


def decoupled_ue_beam(ue_channel: FreqChannel, ue_codebook: PhaseCodebook,
                      ref: ReferenceVector) -> int:
    """UE-side selection: mirror of the BS-side rule on the UE link."""
    if len(ue_codebook) == 0:
        raise ValueError("codebook must be nonempty")
    return int(np.argmax(_decoupled_scores(ue_channel, ue_codebook, ref, True)))


def optimal_beam_set(ue_channels, ue_codebook: PhaseCodebook,
                     ref: ReferenceVector) -> BeamSet:
    """Per-UE decoupled selections collapsed into one candidate set."""
    return BeamSet.from_iterable(
        decoupled_ue_beam(ch, ue_codebook, ref) for ch in ue_channels)


def equal_gain_rate(bs_channel: FreqChannel, ue_channel: FreqChannel,
                    budget: LinkBudget) -> float:
    """Upper bound: phase-conjugate beam chosen independently per subcarrier.

    Not implementable on a real RIS (one beam must serve all subcarriers),
    but it dominates every constant-modulus single-beam rate.
    """
    eff = _effective_channel(bs_channel, ue_channel)
    gains = np.sum(np.abs(eff), axis=1) ** 2
    return _rate_from_gains(gains, budget, eff.shape[0])


def best_rate_in_set(bs_channel: FreqChannel, ue_channel: FreqChannel,
                     ue_codebook: PhaseCodebook, bs_beam_index: int,
                     beam_set: BeamSet, budget: LinkBudget,
                     bs_codebook: PhaseCodebook | None = None):
    """Best rate over the UE-side beams of a set, with the BS-side beam fixed.

    Returns (rate, ue_index); an empty set yields (0.0, None) since no beam
    gets swept at all.
    """
    if len(beam_set) == 0:
        return 0.0, None
    beam_set.validate_against(ue_codebook)
    p_cb = bs_codebook if bs_codebook is not None else ue_codebook
    p_vec = p_cb.vectors[bs_beam_index]
    eff = _effective_channel(bs_channel, ue_channel)
    idx = np.fromiter(beam_set, dtype=int)
    psi = p_vec[None, :] * ue_codebook.vectors[idx]
    gains = np.abs(eff @ psi.T) ** 2
    snr = budget.snr(eff.shape[0])
    rates = np.mean(np.log2(1.0 + snr * gains), axis=0)
    best = int(np.argmax(rates))
    return float(rates[best]), int(idx[best])


# ---------------------------------------------------------------------------
# LoS optimality of the decoupled selection
# ---------------------------------------------------------------------------

def best_quantized_alignment(gains, target_phases, bits: int) -> np.ndarray:
    """Exact argmax of |sum_m g_m exp(j(chi_m + lam_m))| over grid phases lam.

    At the optimum every lam_m is the grid point nearest to (c - chi_m) for
    the direction c of the resulting sum, so scanning the breakpoints of
    that quantization over one grid period finds the global optimum without
    enumerating the (2^bits)^M combinations.
    """
    g = np.asarray(gains, dtype=float)
    chi = np.asarray(target_phases, dtype=float)
    step = 2.0 * np.pi / (2 ** bits)
    breaks = np.sort(np.unique(np.mod(chi + step / 2.0, step)))
    candidates = []
    for i in range(len(breaks)):
        nxt = breaks[(i + 1) % len(breaks)] + (step if i == len(breaks) - 1 else 0.0)
        candidates.append(0.5 * (breaks[i] + nxt))
    if not candidates:
        candidates = [0.0]
    best_val, best_lam = -1.0, None
    for c in candidates:
        lam = quantize_phase(c - chi, bits)
        val = np.abs(np.sum(g * np.exp(1j * (chi + lam))))
        if val > best_val:
            best_val, best_lam = val, lam
    return best_lam


def _flat_row(channel: FreqChannel, rel_tol: float = 1e-9) -> np.ndarray:
    mat = channel.matrix
    scale = max(float(np.max(np.abs(mat))), 1e-30)
    if np.max(np.abs(mat - mat[0][None, :])) > rel_tol * scale:
        raise ValueError("channel is not flat across subcarriers")
    return mat[0]


def los_optimality_gap(bs_channel: FreqChannel, ue_channel: FreqChannel,
                       phase_bits: int, budget: LinkBudget | None = None) -> float:
    """Relative rate gap of decoupled vs joint selection on flat channels.

    Both sides use the full 2^phase_bits-per-element quantized set: the
    joint optimum comes from exact quantized phase alignment of the
    effective channel, the decoupled solution aligns each link separately
    against the all-ones reference.  Inputs must be flat across subcarriers
    (single LoS path); with growing phase_bits the gap vanishes.
    """
    h_t = _flat_row(bs_channel)
    h_r = _flat_row(ue_channel)
    eff = h_r * h_t
    if budget is None:
        budget = LinkBudget(tx_power_w=1.0, noise_power_w=1.0)
    snr = budget.tx_power_w / budget.noise_power_w  # flat channel: K cancels

    lam_joint = best_quantized_alignment(np.abs(eff), np.angle(eff), phase_bits)
    gain_joint = np.abs(np.sum(eff * np.exp(1j * lam_joint))) ** 2

    lam_p = best_quantized_alignment(np.abs(h_t), np.angle(h_t), phase_bits)
    lam_q = best_quantized_alignment(np.abs(h_r), np.angle(h_r), phase_bits)
    gain_dec = np.abs(np.sum(eff * np.exp(1j * (lam_p + lam_q)))) ** 2

    rate_joint = np.log2(1.0 + snr * gain_joint)
    rate_dec = np.log2(1.0 + snr * gain_dec)
    if rate_joint <= 0.0:
        return 0.0
    return float(1.0 - rate_dec / rate_joint)


# ---------------------------------------------------------------------------
# Codebook serialization
# ---------------------------------------------------------------------------

def _codebook_text(codebook: PhaseCodebook) -> str:
    buf = io.StringIO()
    bits = "none" if codebook.phase_bits is None else str(codebook.phase_bits)
    buf.write(f"# risbeam-codebook v1 kind={codebook.kind} phase_bits={bits} "
              f"elements={codebook.n_elements}\n")
    for j, row in enumerate(codebook.phase_matrix):
        buf.write(str(j) + " " + " ".join(format(p, ".17g") for p in row) + "\n")
    return buf.getvalue()


def export_codebook(codebook: PhaseCodebook, path) -> None:
    """Write a codebook as text: one line per beam, index then M phases."""
    with open(path, "w") as fh:
        fh.write(_codebook_text(codebook))


def load_codebook(path) -> PhaseCodebook:
    kind, bits = "custom", None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line.split():
                    if token.startswith("kind="):
                        kind = token.split("=", 1)[1]
                    elif token.startswith("phase_bits="):
                        raw = token.split("=", 1)[1]
                        bits = None if raw == "none" else int(raw)
                continue
            parts = line.split()
            index = int(parts[0])
            if index != len(rows):
                raise ValueError(f"codebook indices must be consecutive, got {index}")
            rows.append([float(x) for x in parts[1:]])
    if not rows:
        raise ValueError("codebook file holds no beams")
    return PhaseCodebook(np.asarray(rows), phase_bits=bits, kind=kind)


def codebook_hash(codebook: PhaseCodebook) -> str:
    """Stable sha256 over the exported text form."""
    return hashlib.sha256(_codebook_text(codebook).encode()).hexdigest()
