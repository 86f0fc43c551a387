"""Acceptance suite: ten go/no-go criteria at pinned tolerances.

Each test prints one PASS/FAIL line (run with -s to see them inline).
The learning, rate, protocol and determinism criteria share one
desk-scale pipeline run (2000 scenes, 64 elements, 64 beams, 16
subcarriers) built by the module fixture; determinism repeats the full
pipeline a second time and compares bytes.
"""

import cmath
import math
import os
import time

import numpy as np
import pytest

from risbeam import experiments as ex
from risbeam import protocol
from risbeam.beams import (
    PhaseCodebook,
    ReferenceVector,
    ReflectBeam,
    achievable_rate,
    decoupled_bs_beam,
    decoupled_ue_beam,
    equal_gain_rate,
    los_optimality_gap,
)
from risbeam.channel import (
    ArrayGeometry,
    FreqChannel,
    LinkBudget,
    PathCluster,
    WidebandParams,
    freq_channel,
)
from risbeam.scene import UEInfoMatrix
from risbeam.setnet import Batch, forward, grad, init_net_params, loss


def report(number: int, name: str, ok: bool, detail: str) -> None:
    print(f"\n[criterion {number:02d}] {'PASS' if ok else 'FAIL'} "
          f"{name}: {detail}")
    assert ok, f"criterion {number} ({name}): {detail}"


# ---------------------------------------------------------------------------
# Shared desk-scale pipeline
# ---------------------------------------------------------------------------

def run_pipeline(root) -> dict:
    config = ex.ExperimentConfig()
    times = {}
    t0 = time.time()
    data = os.path.join(root, "data")
    manifest = ex.generate_dataset(config, data)
    times["generate"] = time.time() - t0

    t0 = time.time()
    trained = ex.train_models(config, data, os.path.join(root, "models"))
    params = {cam: res["params"] for cam, res in trained.items()}
    times["train"] = time.time() - t0

    t0 = time.time()
    tables = ex.evaluate(config, data, params, out_dir=os.path.join(root, "eval"))
    times["eval"] = time.time() - t0

    t0 = time.time()
    prot = ex.run_protocol_experiments(config, data, params, 100,
                                       out_dir=os.path.join(root, "prot"),
                                       trace_dir=os.path.join(root, "traces"))
    times["protocol"] = time.time() - t0
    return {"config": config, "root": root, "data": data, "manifest": manifest,
            "params": params, "tables": tables, "prot": prot, "times": times}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    return run_pipeline(str(tmp_path_factory.mktemp("accept")))


# ---------------------------------------------------------------------------
# Criterion 1: LoS optimality of the decoupled selection
# ---------------------------------------------------------------------------

def test_criterion_01_los_optimality():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        m = 8
        row_t = (0.5 + rng.uniform(0, 1, m)) * np.exp(
            1j * rng.uniform(-np.pi, np.pi, m))
        row_r = (0.5 + rng.uniform(0, 1, m)) * np.exp(
            1j * rng.uniform(-np.pi, np.pi, m))
        h_t = FreqChannel(np.tile(row_t, (4, 1)))
        h_r = FreqChannel(np.tile(row_r, (4, 1)))
        gap = los_optimality_gap(h_t, h_r, phase_bits=8)
        worst = max(worst, gap)
    elapsed = time.time() - t0
    ok = worst <= 1e-3 and elapsed < 60.0
    report(1, "LoS optimality", ok,
           f"worst decoupled/joint gap {worst:.2e} over 100 seeded "
           f"flat-channel instances (M=8, 8-bit), {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# Criterion 2: oracle equivalence of the decoupled selections
# ---------------------------------------------------------------------------

def _scan_oracle(h_rows, phase_rows, ref, conjugate: bool) -> int:
    best_idx, best_score = 0, -math.inf
    for j, phases in enumerate(phase_rows):
        beam = [cmath.exp(1j * p) for p in phases]
        total = 0.0
        for row in h_rows:
            if conjugate:
                s = sum((row[m] * beam[m]).conjugate() * ref[m]
                        for m in range(len(beam)))
            else:
                s = sum(row[m] * ref[m] * beam[m] for m in range(len(beam)))
            total += abs(s) ** 2
        score = total / len(h_rows)
        if score > best_score:
            best_idx, best_score = j, score
    return best_idx


def test_criterion_02_oracle_equivalence():
    rng = np.random.default_rng(99)
    mismatches = 0
    for _ in range(100):
        k_count = int(rng.integers(1, 5))
        m_count = int(rng.integers(2, 17))
        n_beams = int(rng.integers(1, 65))
        h = FreqChannel(rng.normal(size=(k_count, m_count))
                        + 1j * rng.normal(size=(k_count, m_count)))
        cb = PhaseCodebook(rng.uniform(-np.pi, np.pi, size=(n_beams, m_count)))
        ref = ReferenceVector.ones(m_count)
        rows = h.matrix.tolist()
        phases = cb.phase_matrix.tolist()
        entries = ref.entries.tolist()
        if decoupled_bs_beam(h, cb, ref) != _scan_oracle(rows, phases, entries, False):
            mismatches += 1
        if decoupled_ue_beam(h, cb, ref) != _scan_oracle(rows, phases, entries, True):
            mismatches += 1
    report(2, "oracle equivalence", mismatches == 0,
           f"{mismatches} index mismatches over 100 random multipath "
           f"instances (M<=16, |codebook|<=64)")


# ---------------------------------------------------------------------------
# Criterion 3: frequency-channel consistency against direct summation
# ---------------------------------------------------------------------------

def test_criterion_03_dft_consistency():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        rows = int(rng.integers(1, 5))
        cols = int(rng.integers(1, 9))
        geom = ArrayGeometry(rows, cols)           # M <= 32
        k_count = int(rng.integers(2, 65))         # K <= 64
        d_count = int(rng.integers(1, 7))
        params = WidebandParams(k_count, 1e-9, d_count)
        clusters = [PathCluster(rng.normal() + 1j * rng.normal(),
                                rng.uniform(0, d_count * 1e-9),
                                rng.uniform(-1.5, 1.5), rng.uniform(-1.0, 1.0))
                    for _ in range(int(rng.integers(1, 4)))]
        got = freq_channel(clusters, geom, params).matrix

        want = np.zeros((k_count, geom.n_elements), dtype=complex)
        for k in range(k_count):
            for d in range(d_count):
                rot = cmath.exp(-2j * math.pi * k * d / k_count)
                for m in range(geom.n_elements):
                    r, c = divmod(m, geom.cols)
                    acc = 0j
                    for cl in clusters:
                        x = (d * 1e-9 - cl.delay_s) / 1e-9
                        pulse = 1.0 if x == 0 else math.sin(math.pi * x) / (math.pi * x)
                        phase = 2 * math.pi * geom.spacing * (
                            c * math.cos(cl.elevation_rad) * math.sin(cl.azimuth_rad)
                            + r * math.sin(cl.elevation_rad))
                        acc += cl.gain * pulse * cmath.exp(1j * phase)
                    want[k, m] += math.sqrt(geom.n_elements) * acc * rot
        rel = np.max(np.abs(got - want)) / (np.max(np.abs(want)) + 1e-30)
        worst = max(worst, rel)
    report(3, "frequency-channel consistency", worst < 1e-10,
           f"worst relative error vs direct summation {worst:.2e} "
           f"over 50 random cases")


# ---------------------------------------------------------------------------
# Criterion 4: analytic gradients vs central finite differences
# ---------------------------------------------------------------------------

def test_criterion_04_gradient_check():
    rng = np.random.default_rng(11)
    worst = 0.0
    h = 1e-5
    for trial in range(20):
        f_dim = int(rng.integers(3, 8))
        q_dim = int(rng.integers(3, 11))
        dims = [f_dim, int(rng.integers(3, 9)), int(rng.integers(3, 9)), q_dim]
        params = init_net_params(dims, seed=500 + trial)
        for b in params.biases:
            # generic biases keep pre-activations off the exact ReLU kink,
            # where finite differences straddle the nondifferentiable point
            b[:] = rng.normal(0.0, 0.1, size=b.shape)
        b_count = int(rng.integers(1, 4))
        u_max = int(rng.integers(1, 5))
        feats = np.zeros((b_count, u_max, f_dim))
        valid = rng.integers(0, u_max + 1, size=b_count)
        for s in range(b_count):
            feats[s, :valid[s]] = rng.uniform(0, 1, size=(valid[s], f_dim))
        targets = (rng.uniform(size=(b_count, q_dim)) < 0.4).astype(float)
        batch = Batch(feats, valid, targets)
        analytic = grad(params, batch)
        for li in range(len(params.weights)):
            for arrays, ga in ((params.weights, analytic.weights),
                               (params.biases, analytic.biases)):
                arr = arrays[li]
                it = np.nditer(arr, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    orig = arr[idx]
                    arr[idx] = orig + h
                    up = loss(params, batch)
                    arr[idx] = orig - h
                    down = loss(params, batch)
                    arr[idx] = orig
                    fd = (up - down) / (2 * h)
                    err = abs(ga[li][idx] - fd) / max(abs(ga[li][idx]),
                                                      abs(fd), 1e-8)
                    worst = max(worst, err)
    report(4, "gradient check", worst < 1e-4,
           f"max relative error vs central differences {worst:.2e} "
           f"over 20 random configurations")


# ---------------------------------------------------------------------------
# Criterion 5: permutation invariance and padding neutrality
# ---------------------------------------------------------------------------

def test_criterion_05_permutation_and_padding():
    rng = np.random.default_rng(13)
    params = init_net_params([7, 16, 16, 12], seed=3)
    exact = 0
    for _ in range(50):
        n = int(rng.integers(1, 7))
        rows = rng.uniform(size=(n, 7))
        base_mat = np.zeros((n, 7))
        base_mat[:n] = rows
        base = forward(params, UEInfoMatrix(base_mat, n)).scores
        perm_mat = rows[rng.permutation(n)]
        perm = forward(params, UEInfoMatrix(perm_mat, n)).scores
        padded = np.zeros((n + int(rng.integers(1, 5)), 7))
        padded[:n] = rows
        pad = forward(params, UEInfoMatrix(padded, n)).scores
        if np.array_equal(base, perm) and np.array_equal(base, pad):
            exact += 1
    report(5, "permutation invariance / padding neutrality", exact == 50,
           f"{exact}/50 random cases bit-exact under permutation and "
           f"extra zero padding")


# ---------------------------------------------------------------------------
# Criterion 6: learning analog (accuracy / recall on the held-out split)
# ---------------------------------------------------------------------------

def test_criterion_06_learning_analog(pipeline):
    rows = pipeline["tables"]["metrics"].rows
    elapsed = pipeline["times"]["generate"] + pipeline["times"]["train"] \
        + pipeline["times"]["eval"]
    ok = all(r[2] >= 0.85 and r[3] >= 0.80 for r in rows) and elapsed < 600.0
    detail = ", ".join(f"{r[0]}: acc {r[2]:.3f} recall {r[3]:.3f} (n={r[1]})"
                       for r in rows)
    report(6, "learning analog", ok,
           f"{detail}; pipeline {elapsed:.0f}s (thresholds 0.85/0.80, <600s)")


# ---------------------------------------------------------------------------
# Criterion 7: rate analog (top-k ratio vs exhaustive sweep)
# ---------------------------------------------------------------------------

def test_criterion_07_rate_analog(pipeline):
    table = pipeline["tables"]["rate_vs_k"]
    q_size = 64
    k_op = math.ceil(12 * q_size / 256)
    ok = True
    details = []
    for cam in sorted({r[0] for r in table.rows}):
        ks = [r[1] for r in table.rows if r[0] == cam]
        ratios = [r[4] for r in table.rows if r[0] == cam]
        monotone = all(a <= b + 1e-12 for a, b in zip(ratios, ratios[1:]))
        full = ratios[ks.index(q_size)]
        at_op = ratios[ks.index(k_op)]
        ok = ok and monotone and full == 1.0 and at_op >= 0.95
        details.append(f"{cam}: ratio@k={k_op} {at_op:.3f}, @|Q| {full:.3f}, "
                       f"monotone {monotone}")
    report(7, "rate analog", ok, "; ".join(details) + " (need >=0.95, ==1.0)")


# ---------------------------------------------------------------------------
# Criterion 8: equal-gain upper bound dominates every single beam
# ---------------------------------------------------------------------------

def test_criterion_08_upper_bound_dominance(pipeline):
    config = pipeline["config"]
    manifest, records, ue_cb, bs_cb = ex.load_dataset(pipeline["data"])
    budget = ex.build_budget(config)
    cams = {c.name: c for c in ex.build_cameras(config)}
    ref = ReferenceVector.ones(64)
    violations = 0
    checked = 0
    for cam_name in manifest["cameras"]:
        n_train = manifest["split"][cam_name]["n_train"]
        for rec in records[cam_name][n_train:]:
            bs_ch, ue_ch = ex._served_ue_channel(rec, config, cams[cam_name])
            bound = equal_gain_rate(bs_ch, ue_ch, budget)
            eff = ue_ch.matrix * bs_ch.matrix
            snr = budget.snr(eff.shape[0])
            p_vec = bs_cb.vectors[decoupled_bs_beam(bs_ch, bs_cb, ref)]
            psi = p_vec[None, :] * ue_cb.vectors
            gains = np.abs(eff @ psi.T) ** 2
            rates = np.mean(np.log2(1.0 + snr * gains), axis=0)
            checked += rates.size
            violations += int(np.sum(rates > bound + 1e-9 * max(bound, 1.0)))
    report(8, "upper-bound dominance", violations == 0,
           f"{violations} violations over {checked} beam rates across the "
           f"held-out records")


# ---------------------------------------------------------------------------
# Criterion 9: protocol overhead, causality and transparency
# ---------------------------------------------------------------------------

def test_criterion_09_protocol_overhead(pipeline):
    config = pipeline["config"]
    prot = pipeline["prot"]
    b_size = config.protocol.policy_size
    q_size = 64
    pred = prot["outcomes"]["predicted"]
    successes = [o for o in pred if o.success]
    tried_ok = all(o.beams_tried <= b_size for o in successes)
    summary = {row[0]: row for row in prot["summary"].rows}
    reduction = summary["predicted"][5]
    reduction_ok = reduction >= q_size / b_size

    trace_dir = os.path.join(pipeline["root"], "traces")
    causal_ok, transparent_ok = True, True
    n_traces = 0
    for fname in sorted(os.listdir(trace_dir)):
        trace = protocol.load_trace(os.path.join(trace_dir, fname))
        n_traces += 1
        try:
            protocol.check_causality(trace)
        except AssertionError:
            causal_ok = False
        if protocol.ris_message_count(trace) != 0:
            transparent_ok = False

    ok = tried_ok and reduction_ok and causal_ok and transparent_ok
    report(9, "protocol overhead", ok,
           f"{len(successes)}/{len(pred)} predicted runs succeeded, all "
           f"tried <= {b_size}: {tried_ok}; reduction {reduction:.1f}x "
           f"(need >= {q_size / b_size:.1f}); causality {causal_ok} and "
           f"transparency {transparent_ok} over {n_traces} traces")


# ---------------------------------------------------------------------------
# Criterion 10: byte-for-byte pipeline determinism
# ---------------------------------------------------------------------------

def test_criterion_10_determinism(pipeline, tmp_path):
    second = run_pipeline(str(tmp_path))
    compared, identical = [], True
    for rel in ("data/manifest.json", "data/dataset_cam0.jsonl",
                "data/dataset_cam1.jsonl", "models/model_cam0.txt",
                "models/model_cam1.txt", "models/curves_cam0.csv",
                "models/curves_cam1.csv", "eval/metrics.csv",
                "eval/rate_vs_snr.csv", "eval/rate_vs_k.csv",
                "prot/protocol_runs.csv", "prot/protocol_summary.csv"):
        with open(os.path.join(pipeline["root"], rel), "rb") as fh:
            a = fh.read()
        with open(os.path.join(str(tmp_path), rel), "rb") as fh:
            b = fh.read()
        compared.append(rel)
        if a != b:
            identical = False
    report(10, "pipeline determinism", identical,
           f"{len(compared)} artifacts byte-identical across two full "
           f"generate->train->eval->protocol runs: {identical}")
