"""Acceptance suite: exact property checks plus the desk-scale trend runs.

Heavy artifacts (two trained models, the 35-dataset corruption suite, and all
per-sample evaluation records) are built once per session in a module fixture;
set REFOCUS3D_ACCEPT_CACHE=<dir> to persist them between runs. Each criterion
prints one ``ACCEPT-nn PASS/FAIL`` line (run with ``-s`` to watch them live).
"""

import os
import pickle
import subprocess
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

import refocus3d as r
from refocus3d.corruptions import FAMILIES, SEVERITIES, corrupt_dataset
from refocus3d.evaluation import corruption_error, mean_corruption_error
from refocus3d.focus import focus
from refocus3d.influence import argmax_count_influence, normalize_influence
from refocus3d.network import (EncoderParams, TrainConfig, forward, init_params,
                               loss_and_grads, train)
from refocus3d.refocus import adaptive_k, lowest_influence_indices, refocus_train_sampler
from refocus3d import baselines

# desk-scale experiment configuration
DATA_SEED = 1
CORRUPTION_SEED = 2
POINTS = 1024
TRAIN_PER_CLASS = 200
TEST_PER_CLASS = 50
VANILLA_CONFIG = TrainConfig(learning_rate=0.3, epochs=15, batch_size=8, seed=0)
REFOCUS_CONFIG = TrainConfig(learning_rate=0.15, epochs=40, batch_size=8, seed=0)
FIXED_KS = (256, 400, 600, 800, 1000)
# retained-point floor for the refocused pipeline: the encoder is trained on
# crops of 256-1024 points, so evaluation never pushes it below that range
EVAL_K_MIN = 256


def _criterion(number, ok, detail):
    print(f"ACCEPT-{number:02d} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {number}: {detail}"


# ---------------------------------------------------------------------------
# shared artifacts
# ---------------------------------------------------------------------------


@dataclass
class Artifacts:
    test_set: object
    train_seconds: float
    vanilla_clean_oa: float
    records: dict  # (family, severity) -> dict of numpy arrays; ("clean", 0) too
    outliers: dict  # "influence" -> (N,2) P/R rows; sigma -> rows
    params_v: EncoderParams = None
    params_r: EncoderParams = None


def _cache_path(name):
    root = os.environ.get("REFOCUS3D_ACCEPT_CACHE")
    if not root:
        return None
    tag = (f"d{DATA_SEED}_c{CORRUPTION_SEED}_n{POINTS}_t{TRAIN_PER_CLASS}"
           f"_v{VANILLA_CONFIG.learning_rate}x{VANILLA_CONFIG.epochs}"
           f"_r{REFOCUS_CONFIG.learning_rate}x{REFOCUS_CONFIG.epochs}")
    path = Path(root) / tag
    path.mkdir(parents=True, exist_ok=True)
    return path / name


def _eval_records(params, dataset):
    """Vanilla + adaptive-refocus + fixed-K outcomes per sample, sharing the
    first forward pass.

    ``f_post`` tracks the alignment diagnostic under the library-default
    refocus step (k_min=16); ``ref_correct``/``k`` describe the defended
    pipeline, whose retained count is floored at the encoder's adapted
    minimum input size (EVAL_K_MIN).
    """
    out = {"van_correct": [], "f_pre": [], "ref_correct": [], "f_post": [],
           "k": [], **{f"fix_{kk}": [] for kk in FIXED_KS}}
    for sample in dataset.samples:
        trace = forward(params, sample.cloud)
        infl = normalize_influence(argmax_count_influence(trace))
        f = focus(infl)
        n = len(sample.cloud)
        out["van_correct"].append(int(np.argmax(trace.logits)) == sample.label)
        out["f_pre"].append(f)
        k = adaptive_k(f, n, k_min=EVAL_K_MIN)
        kept = lowest_influence_indices(infl, k)
        second = forward(params, sample.cloud.take(kept))
        out["ref_correct"].append(int(np.argmax(second.logits)) == sample.label)
        out["k"].append(k)
        k16 = adaptive_k(f, n)
        if k16 == k:
            diag = second
        else:
            diag = forward(params, sample.cloud.take(lowest_influence_indices(infl, k16)))
        out["f_post"].append(focus(normalize_influence(argmax_count_influence(diag))))
        for kk in FIXED_KS:
            kept_k = lowest_influence_indices(infl, min(kk, n))
            pass_k = forward(params, sample.cloud.take(kept_k))
            out[f"fix_{kk}"].append(int(np.argmax(pass_k.logits)) == sample.label)
    return {key: np.array(v) for key, v in out.items()}


@pytest.fixture(scope="module")
def artifacts():
    train_set = r.build_dataset(TRAIN_PER_CLASS, POINTS, DATA_SEED, "train")
    test_set = r.build_dataset(TEST_PER_CLASS, POINTS, DATA_SEED, "test")

    ckpt_v = _cache_path("vanilla.rfnn")
    if ckpt_v and ckpt_v.exists():
        params_v = r.load_checkpoint(ckpt_v)
        train_seconds = float(ckpt_v.with_suffix(".seconds").read_text())
    else:
        start = time.perf_counter()
        params_v = train(train_set, VANILLA_CONFIG)
        train_seconds = time.perf_counter() - start
        if ckpt_v:
            r.save_checkpoint(ckpt_v, params_v)
            ckpt_v.with_suffix(".seconds").write_text(str(train_seconds))

    ckpt_r = _cache_path("refocused.rfnn")
    if ckpt_r and ckpt_r.exists():
        params_r = r.load_checkpoint(ckpt_r)
    else:
        params_r = train(train_set, REFOCUS_CONFIG, sampler=refocus_train_sampler)
        if ckpt_r:
            r.save_checkpoint(ckpt_r, params_r)

    rec_path = _cache_path("records.pkl")
    if rec_path and rec_path.exists():
        records, outliers = pickle.loads(rec_path.read_bytes())
    else:
        records = {
            ("clean", 0, "v"): _eval_records(params_v, test_set),
            ("clean", 0, "r"): _eval_records(params_r, test_set),
        }
        for family in FAMILIES:
            for severity in SEVERITIES:
                corrupted, _ = corrupt_dataset(test_set, family, severity,
                                               CORRUPTION_SEED)
                records[(family, severity, "v")] = _eval_records(params_v, corrupted)
                records[(family, severity, "r")] = _eval_records(params_r, corrupted)

        corrupted, flags = corrupt_dataset(test_set, "add_local", 3, CORRUPTION_SEED)
        outliers = {"influence": []}
        sweep = [round(0.5 + 0.25 * i, 2) for i in range(11)]
        for sigma in sweep:
            outliers[sigma] = []
        for sample, flag in zip(corrupted.samples, flags):
            _, removed = baselines.influence_outlier_removal(params_r, sample.cloud)
            outliers["influence"].append(baselines.precision_recall(removed, flag))
            for sigma in sweep:
                removed = baselines.sor_removed_indices(sample.cloud, 2, sigma)
                outliers[sigma].append(baselines.precision_recall(removed, flag))
        outliers = {key: np.array(v) for key, v in outliers.items()}
        if rec_path:
            rec_path.write_bytes(pickle.dumps((records, outliers)))

    return Artifacts(test_set, train_seconds,
                     records[("clean", 0, "v")]["van_correct"].mean(),
                     records, outliers, params_v, params_r)


def _mce(records, model_key, outcome_key):
    pivot = {
        (f, s): records[(f, s, "v")]["van_correct"].mean()
        for f in FAMILIES for s in SEVERITIES
    }
    ce = {}
    for family in FAMILIES:
        model_accs = [records[(family, s, model_key)][outcome_key].mean()
                      for s in SEVERITIES]
        ce[family] = corruption_error(model_accs, [pivot[(family, s)] for s in SEVERITIES],
                                      family)
    return mean_corruption_error(ce)


# ---------------------------------------------------------------------------
# criteria 1-3: exact property suites (no trained model needed)
# ---------------------------------------------------------------------------


def test_criterion_1_focus_laws():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        n = int(rng.integers(2, 80))
        p = rng.exponential(size=n)
        p /= p.sum()
        f = focus(p)
        assert 0.0 <= f <= 1.0
    for n in (2, 256, 4096):
        assert abs(focus(np.full(n, 1.0 / n))) <= 1e-12
        one_hot = np.zeros(n)
        one_hot[n // 2] = 1.0
        assert focus(one_hot) == 1.0
    elapsed = time.perf_counter() - start
    _criterion(1, elapsed < 5.0,
               f"10,000 random distributions in [0,1], extremes exact at "
               f"N in {{2,256,4096}}, runtime {elapsed:.2f}s < 5s")


def test_criterion_2_arithmetic_anchors():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 50
    p_hp = [mpmath.mpf("0.7")] + [mpmath.mpf("0.1")] * 3
    oracle_h = -sum(x * mpmath.log(x) for x in p_hp)
    oracle_f = 1 - oracle_h / mpmath.log(4)
    p = np.array([0.7, 0.1, 0.1, 0.1])
    h_err = abs(r.entropy(p) - float(oracle_h))
    f_err = abs(r.focus(p) - float(oracle_f))
    k = adaptive_k(0.1, 1024)
    _criterion(2, h_err < 1e-6 and f_err < 1e-6 and k == 921,
               f"entropy {r.entropy(p):.6f} (oracle err {h_err:.1e}), "
               f"focus {r.focus(p):.6f} (oracle err {f_err:.1e}), "
               f"adaptive_k(0.1, 1024) = {k}")


def test_criterion_3_gradient_check():
    # seeds chosen so no ReLU pre-activation or pooling gap falls inside the
    # finite-difference window; see the margin note below
    start = time.perf_counter()
    rng = np.random.default_rng(15)
    params = init_params(4, seed=14, zero_last=False)
    point_sets = [rng.standard_normal((8, 3)), rng.standard_normal((8, 3))]
    labels = [1, 3]
    clouds = [r.LabeledCloud(r.PointCloud(p.astype(np.float32)), l)
              for p, l in zip(point_sets, labels)]
    float_pts = [c.cloud.points.astype(np.float64) for c in clouds]
    loss0, grads = loss_and_grads(params, clouds)

    # independent oracle: a plain re-implementation of the forward loss
    shapes = [(w.shape, b.shape) for w, b in params.layers]

    def unpack(theta):
        out, off = [], 0
        for ws, bs in shapes:
            w = theta[off:off + ws[0] * ws[1]].reshape(ws)
            off += ws[0] * ws[1]
            b = theta[off:off + bs[0]]
            off += bs[0]
            out.append((w, b))
        return out

    def pack(layers):
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in layers])

    def oracle_loss(theta):
        lay = unpack(theta)
        total = 0.0
        for pts, label in zip(float_pts, labels):
            x = pts
            for w, b in lay[:2]:
                x = np.maximum(x @ w + b, 0.0)
            w3, b3 = lay[2]
            g = (x @ w3 + b3).max(axis=0)
            (w4, b4), (w5, b5) = lay[3:]
            logits = np.maximum(g @ w4 + b4, 0.0) @ w5 + b5
            z = logits - logits.max()
            total += np.log(np.exp(z).sum()) - z[label]
        return total / len(labels)

    theta = pack(params.layers)
    assert abs(oracle_loss(theta) - loss0) < 1e-12
    analytic = pack(grads.layers)
    h = 1e-5
    worst = 0.0
    for i in range(theta.size):
        old = theta[i]
        theta[i] = old + h
        up = oracle_loss(theta)
        theta[i] = old - h
        down = oracle_loss(theta)
        theta[i] = old
        fd = (up - down) / (2 * h)
        rel = abs(fd - analytic[i]) / max(abs(fd), abs(analytic[i]), 1e-6)
        worst = max(worst, rel)
    elapsed = time.perf_counter() - start
    _criterion(3, worst < 1e-4 and elapsed < 60.0,
               f"{theta.size} parameters, worst relative error {worst:.2e} "
               f"(h=1e-5), runtime {elapsed:.1f}s < 60s")


# ---------------------------------------------------------------------------
# criteria 4-10: desk-scale trends
# ---------------------------------------------------------------------------


def test_criterion_4_desk_training(artifacts):
    oa = artifacts.vanilla_clean_oa
    seconds = artifacts.train_seconds
    ok = oa >= 0.85 and seconds < 600.0 and VANILLA_CONFIG.epochs <= 60
    _criterion(4, ok, f"clean test OA {oa:.4f} >= 0.85 after "
                      f"{VANILLA_CONFIG.epochs} epochs in {seconds:.0f}s < 600s")


def test_criterion_5_least_influential_trend(artifacts):
    rec = artifacts.records
    vanilla_ag5 = rec[("add_global", 5, "v")]["van_correct"].mean()
    refocus_ag5 = rec[("add_global", 5, "r")]["ref_correct"].mean()
    vanilla_clean = rec[("clean", 0, "v")]["van_correct"].mean()
    refocus_clean = rec[("clean", 0, "r")]["ref_correct"].mean()
    gap = refocus_ag5 - vanilla_ag5
    drop = vanilla_clean - refocus_clean
    _criterion(5, gap >= 0.10 and drop <= 0.03,
               f"add_global s5 accuracy {refocus_ag5:.4f} vs {vanilla_ag5:.4f} "
               f"(gap {gap:+.4f} >= 0.10), clean drop {drop:+.4f} <= 0.03")


def test_criterion_6_focus_shift_directions(artifacts):
    rec = artifacts.records
    clean = rec[("clean", 0, "v")]["f_pre"]
    mu, sigma = clean.mean(), clean.std()
    add5 = rec[("add_global", 5, "v")]["f_pre"].mean()
    drop5 = rec[("drop_global", 5, "v")]["f_pre"].mean()
    ok = add5 >= mu + 0.5 * sigma and drop5 <= mu - 0.5 * sigma
    _criterion(6, ok,
               f"clean mu {mu:.4f} sd {sigma:.4f}; add_global s5 mean {add5:.4f} "
               f"(need >= {mu + 0.5 * sigma:.4f}), drop_global s5 mean {drop5:.4f} "
               f"(need <= {mu - 0.5 * sigma:.4f})")


def test_criterion_7_refocus_alignment(artifacts):
    rec = artifacts.records
    clean_pre = rec[("clean", 0, "r")]["f_pre"].mean()
    clean_post = rec[("clean", 0, "r")]["f_post"].mean()
    details = []
    ok = True
    for family in ("add_global", "drop_global"):
        for severity in (3, 4, 5):
            pre = abs(rec[(family, severity, "r")]["f_pre"].mean() - clean_pre)
            post = abs(rec[(family, severity, "r")]["f_post"].mean() - clean_post)
            ok = ok and post < pre
            details.append(f"{family} s{severity} {pre:.4f}->{post:.4f}")
    _criterion(7, ok, "post-refocus |mean f - clean| shrinks: " + ", ".join(details))


def test_criterion_8_mce_machinery(artifacts):
    pivot_mce = _mce(artifacts.records, "v", "van_correct")
    refocus_mce = _mce(artifacts.records, "r", "ref_correct")
    _criterion(8, pivot_mce == 1.0 and refocus_mce < 1.0,
               f"pivot-vs-itself mCE {pivot_mce:.6f} (exact), "
               f"refocused mCE {refocus_mce:.4f} < 1.0")


def test_criterion_9_adaptive_vs_fixed(artifacts):
    adaptive = _mce(artifacts.records, "r", "ref_correct")
    fixed = {kk: _mce(artifacts.records, "r", f"fix_{kk}") for kk in FIXED_KS}
    best_k = min(fixed, key=fixed.get)
    ok = adaptive <= fixed[best_k] + 0.05
    table = ", ".join(f"K={kk}: {fixed[kk]:.4f}" for kk in FIXED_KS)
    _criterion(9, ok, f"adaptive mCE {adaptive:.4f} vs best fixed {fixed[best_k]:.4f} "
                      f"(K={best_k}); sweep [{table}]")


def test_criterion_10_outlier_removal_vs_sor(artifacts):
    rows = artifacts.outliers
    ours = rows["influence"]
    n = ours.shape[0]
    our_p, our_r = ours[:, 0].mean(), ours[:, 1].mean()
    sweep = {key: v for key, v in rows.items() if key != "influence"}
    # the SOR operating point with recall closest to ours (the matched point)
    matched = min(sweep, key=lambda s: abs(sweep[s][:, 1].mean() - our_r))
    sor_p = sweep[matched][:, 0].mean()
    sor_r = sweep[matched][:, 1].mean()
    _criterion(10, n >= 200 and our_p >= sor_p,
               f"influence precision {our_p:.4f} at recall {our_r:.4f} vs SOR "
               f"sigma={matched} precision {sor_p:.4f} at recall {sor_r:.4f} "
               f"({n} samples)")


def test_refocus_discards_outliers_above_base_rate(artifacts):
    # spec invariant (not a numbered criterion): on add_global s5, inserted
    # outliers are over-represented among the points refocusing removes
    sub = r.Dataset(artifacts.test_set.samples[::4], artifacts.test_set.class_names,
                    "test")
    corrupted, flags = corrupt_dataset(sub, "add_global", 5, CORRUPTION_SEED)
    removed_rates, base_rates = [], []
    for sample, flag in zip(corrupted.samples, flags):
        result = r.refocus_infer(artifacts.params_r, sample.cloud)
        removed = np.setdiff1d(np.arange(len(sample.cloud)), result.retained_indices)
        if removed.size:
            removed_rates.append(flag[removed].mean())
            base_rates.append(flag.mean())
    assert np.mean(removed_rates) > np.mean(base_rates)


# ---------------------------------------------------------------------------
# criterion 11: CLI determinism (tiny scale)
# ---------------------------------------------------------------------------


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "refocus3d"] + [str(a) for a in args],
                          capture_output=True, text=True)


def test_criterion_11_cli_determinism(tmp_path):
    checks = []
    gen_a = _cli("gen-data", "--out", tmp_path / "da", "--per-class", 2,
                 "--points", 64, "--seed", 5)
    gen_b = _cli("gen-data", "--out", tmp_path / "db", "--per-class", 2,
                 "--points", 64, "--seed", 5)
    assert gen_a.returncode == 0 and gen_b.returncode == 0
    clouds_equal = all(
        (tmp_path / "da" / "train" / p.name).read_bytes() == p.read_bytes()
        for p in (tmp_path / "db" / "train").iterdir())
    checks.append(("gen-data clouds", clouds_equal))

    for out in ("ma", "mb"):
        proc = _cli("train", "--data", tmp_path / "da", "--out",
                    tmp_path / f"{out}.rfnn", "--epochs", 2, "--batch", 8,
                    "--lr", 0.05, "--seed", 3, "--quiet")
        assert proc.returncode == 0, proc.stderr
    checks.append(("checkpoints", (tmp_path / "ma.rfnn").read_bytes()
                   == (tmp_path / "mb.rfnn").read_bytes()))

    for out in ("ra", "rb"):
        proc = _cli("eval", "--checkpoint", tmp_path / "ma.rfnn", "--data",
                    tmp_path / "da", "--defense", "refocus", "--seed", 4,
                    "--out", tmp_path / out)
        assert proc.returncode == 0, proc.stderr
    checks.append(("reports", (tmp_path / "ra" / "report.json").read_bytes()
                   == (tmp_path / "rb" / "report.json").read_bytes()))

    for out in ("ca", "cb"):
        proc = _cli("corrupt", "--data", tmp_path / "da", "--out",
                    tmp_path / out, "--seed", 6)
        assert proc.returncode == 0, proc.stderr
    sub = "add_local_4"
    corrupt_equal = all(
        (tmp_path / "ca" / sub / p.name).read_bytes() == p.read_bytes()
        for p in (tmp_path / "cb" / sub).iterdir())
    checks.append(("corrupted datasets", corrupt_equal))

    ok = all(flag for _, flag in checks)
    _criterion(11, ok, "byte-identical artifacts: "
               + ", ".join(f"{name}={'yes' if flag else 'NO'}" for name, flag in checks))
