"""Accuracy, corruption error, focus analytics, and the experiment driver.

A *pipeline* is a picklable callable ``(cloud, sample_key) -> SampleOutcome``;
the integer key makes per-sample randomness (SRS) reproducible and
order-independent, so evaluation can fan out over processes without changing
any result. Corruption error follows the pivot convention: a model's summed
error per family is divided by the pivot model's, and mCE averages the seven
family ratios, so the pivot scores exactly 1 against itself.
"""

import multiprocessing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines
from .corruptions import DEFAULT_SCHEDULE, FAMILIES, SEVERITIES, Schedule, corruption_suite
from .errors import UndefinedCEError
from .focus import focus
from .geometry import Dataset, PointCloud
from .influence import argmax_count_influence, normalize_influence
from .io import load_dataset
from .network import EncoderParams, forward, load_checkpoint, softmax
from .refocus import RefocusConfig, RefocusResult, refocus_infer

DEFENSES = ("none", "refocus", "refocus-feature", "srs", "sor")


@dataclass(frozen=True)
class SampleOutcome:
    predicted: int
    focus_before: float
    focus_after: float = None
    k: int = None


@dataclass(frozen=True)
class VanillaPipeline:
    params: EncoderParams

    def __call__(self, cloud: PointCloud, sample_key: int) -> SampleOutcome:
        trace = forward(self.params, cloud)
        f = focus(normalize_influence(argmax_count_influence(trace)))
        return SampleOutcome(int(np.argmax(softmax(trace.logits))), f)


@dataclass(frozen=True)
class RefocusPipeline:
    params: EncoderParams
    config: RefocusConfig = RefocusConfig()

    def __call__(self, cloud: PointCloud, sample_key: int) -> SampleOutcome:
        r: RefocusResult = refocus_infer(self.params, cloud, self.config)
        return SampleOutcome(r.label, r.focus_before, r.focus_after, r.k)


@dataclass(frozen=True)
class FilteredPipeline:
    """Classic filter defense (SRS or SOR) followed by vanilla prediction."""

    params: EncoderParams
    method: str  # "srs" | "sor"
    srs_fraction: float = 0.3
    sor_k: int = baselines.SOR_DEFAULT_K
    sor_sigma: float = baselines.SOR_DEFAULT_SIGMA
    seed: int = 0

    def __call__(self, cloud: PointCloud, sample_key: int) -> SampleOutcome:
        if self.method == "srs":
            ss = np.random.SeedSequence([self.seed, 97, sample_key])
            filtered = baselines.srs(cloud, self.srs_fraction,
                                     int(ss.generate_state(1, dtype=np.uint64)[0]))
        else:
            filtered = baselines.sor(cloud, self.sor_k, self.sor_sigma)
        trace = forward(self.params, filtered)
        f = focus(normalize_influence(argmax_count_influence(trace)))
        return SampleOutcome(int(np.argmax(softmax(trace.logits))), f,
                             k=len(filtered))


def make_pipeline(params: EncoderParams, defense: str, *, fixed_k=None, k_min=16,
                  srs_fraction=0.3, sor_k=baselines.SOR_DEFAULT_K,
                  sor_sigma=baselines.SOR_DEFAULT_SIGMA, seed=0):
    if defense == "none":
        return VanillaPipeline(params)
    if defense == "refocus":
        return RefocusPipeline(params, RefocusConfig(k_min=k_min, fixed_k=fixed_k))
    if defense == "refocus-feature":
        return RefocusPipeline(params, RefocusConfig(k_min=k_min, variant="feature_space"))
    if defense in ("srs", "sor"):
        return FilteredPipeline(params, defense, srs_fraction, sor_k, sor_sigma, seed)
    raise ValueError(f"unknown defense {defense!r}; expected one of {DEFENSES}")


@dataclass(frozen=True)
class SampleRecord:
    index: int
    label: int
    predicted: int
    correct: bool
    focus_before: float
    focus_after: float
    k: int


_worker_pipeline = None


def _init_worker(pipeline):
    global _worker_pipeline
    _worker_pipeline = pipeline


def _eval_one(task):
    idx, cloud, label = task
    out = _worker_pipeline(cloud, idx)
    return SampleRecord(idx, label, out.predicted, out.predicted == label,
                        out.focus_before, out.focus_after, out.k)


def evaluate(pipeline, dataset: Dataset, workers: int = 1):
    """Per-sample records in dataset order; identical for any worker count."""
    tasks = [(i, s.cloud, s.label) for i, s in enumerate(dataset.samples)]
    if workers <= 1:
        _init_worker(pipeline)
        records = [_eval_one(t) for t in tasks]
    else:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers, _init_worker, (pipeline,)) as pool:
            records = pool.map(_eval_one, tasks, chunksize=16)
    return records


def accuracy_of(records) -> float:
    return sum(r.correct for r in records) / len(records)


def overall_accuracy(pipeline, dataset: Dataset, workers: int = 1) -> float:
    """Fraction of correct predictions on a dataset."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    return accuracy_of(evaluate(pipeline, dataset, workers))


def corruption_error(model_accs, pivot_accs, family: str, mode: str = "sum-ratio") -> float:
    """Family corruption error: summed (default) or severity-averaged error
    ratio against the pivot. Raises UndefinedCEError when the pivot is perfect."""
    m = np.asarray(model_accs, dtype=np.float64)
    p = np.asarray(pivot_accs, dtype=np.float64)
    if m.size != len(SEVERITIES) or p.size != len(SEVERITIES):
        raise ValueError("need one accuracy per severity level")
    if mode == "sum-ratio":
        denom = (1.0 - p).sum()
        if denom == 0.0:
            raise UndefinedCEError(f"pivot has zero error on family {family!r}")
        return float((1.0 - m).sum() / denom)
    if mode == "mean-ratio":
        if (p == 1.0).any():
            raise UndefinedCEError(f"pivot has zero error on family {family!r}")
        return float(((1.0 - m) / (1.0 - p)).mean())
    raise ValueError(f"unknown CE mode {mode!r}")


def mean_corruption_error(ce_by_family) -> float:
    if set(ce_by_family) != set(FAMILIES):
        raise ValueError("mCE needs a CE for every corruption family")
    return float(np.mean([ce_by_family[f] for f in FAMILIES]))


def histogram_table(values, bins: int = 50, lo: float = 0.0, hi: float = 1.0):
    """Uniform-bin counts as (bin_left, bin_right, count) rows."""
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(np.asarray(values, dtype=np.float64), bins=edges)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]


def success_by_focus(records, bins: int = 50):
    """Rows (bin_left, bin_right, count, success_rate); rate is None for
    empty bins."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    f = np.array([r.focus_before for r in records])
    correct = np.array([r.correct for r in records])
    idx = np.clip(np.digitize(f, edges) - 1, 0, bins - 1)
    rows = []
    for i in range(bins):
        mask = idx == i
        count = int(mask.sum())
        rate = float(correct[mask].mean()) if count else None
        rows.append((float(edges[i]), float(edges[i + 1]), count, rate))
    return rows


def focus_success_curve(pipeline, dataset: Dataset, bins: int = 50, workers: int = 1):
    """Success rate per focus bin for a pipeline over a dataset."""
    return success_by_focus(evaluate(pipeline, dataset, workers), bins)


def measure_latency(pipeline, cloud: PointCloud, iters: int = 100) -> float:
    """Mean single-sample inference seconds over ``iters`` iterations."""
    import time

    start = time.perf_counter()
    for i in range(iters):
        pipeline(cloud, i)
    return (time.perf_counter() - start) / iters


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    checkpoint: str
    data_dir: str
    defense: str = "none"
    split: str = "test"
    seed: int = 0
    fixed_k: int = None
    k_min: int = 16
    srs_fraction: float = 0.3
    sor_k: int = baselines.SOR_DEFAULT_K
    sor_sigma: float = baselines.SOR_DEFAULT_SIGMA
    alpha: float = 1.0
    beta: float = 1.0
    bins: int = 50
    ce_mode: str = "sum-ratio"
    schedule: Schedule = DEFAULT_SCHEDULE
    pivot_report: str = None  # JSON report with defense "none" accuracies
    pivot_checkpoint: str = None  # model to evaluate as pivot when no report
    workers: int = 1

    def echo(self):
        return {
            "checkpoint": str(self.checkpoint),
            "data_dir": str(self.data_dir),
            "defense": self.defense,
            "split": self.split,
            "seed": self.seed,
            "fixed_k": self.fixed_k,
            "k_min": self.k_min,
            "srs_fraction": self.srs_fraction,
            "sor_k": self.sor_k,
            "sor_sigma": self.sor_sigma,
            "alpha": self.alpha,
            "beta": self.beta,
            "bins": self.bins,
            "ce_mode": self.ce_mode,
            "schedule": self.schedule.as_dict(),
            "pivot_report": None if self.pivot_report is None else str(self.pivot_report),
            "pivot_checkpoint": (None if self.pivot_checkpoint is None
                                 else str(self.pivot_checkpoint)),
            "workers": self.workers,
        }


@dataclass(frozen=True)
class EvalReport:
    config: dict
    clean_oa: float
    corruptions: list  # [{"family", "severity", "accuracy"}]
    ce: dict  # family -> value
    mce: float
    focus_histograms: dict  # set name -> histogram rows
    focus_success: dict  # "clean"/"corrupted" -> success rows
    records: dict = field(repr=False, default=None)  # set name -> [SampleRecord]

    def to_json_dict(self):
        return {
            "config": self.config,
            "clean_oa": self.clean_oa,
            "corruptions": [
                {"family": f, "severity": s, "accuracy": a} for f, s, a in self.corruptions
            ],
            "ce": dict(self.ce),
            "mce": self.mce,
            "focus_histograms": {
                name: [{"bin_left": l, "bin_right": r, "count": c} for l, r, c in rows]
                for name, rows in self.focus_histograms.items()
            },
            "focus_success": {
                name: [
                    {"bin_left": l, "bin_right": r, "count": c, "success_rate": sr}
                    for l, r, c, sr in rows
                ]
                for name, rows in self.focus_success.items()
            },
        }


def resolve_split_dir(data_dir, split):
    base = Path(data_dir)
    if (base / split / "manifest.csv").is_file():
        return base / split
    if (base / "manifest.csv").is_file():
        return base
    raise FileNotFoundError(f"no manifest.csv under {base} or {base / split}")


def _pivot_accuracies(config: ExperimentConfig, suite, workers):
    if config.pivot_report is not None:
        report = load_report_json(config.pivot_report)
        accs = {}
        for entry in report["corruptions"]:
            accs[(entry["family"], entry["severity"])] = entry["accuracy"]
        return accs, None
    pivot_path = config.pivot_checkpoint or config.checkpoint
    pivot_params = load_checkpoint(pivot_path)
    pipeline = VanillaPipeline(pivot_params)
    accs = {}
    for (family, severity), (corrupted, _) in suite.items():
        accs[(family, severity)] = accuracy_of(evaluate(pipeline, corrupted, workers))
    return accs, pivot_params


def run_experiment(config: ExperimentConfig) -> EvalReport:
    """Load the model, corrupt the test split in memory, evaluate under the
    selected defense, and score CE/mCE against the pivot. Deterministic for a
    fixed config."""
    params = load_checkpoint(config.checkpoint)
    dataset = load_dataset(resolve_split_dir(config.data_dir, config.split),
                           split=config.split)
    suite = corruption_suite(dataset, config.seed, config.schedule)
    pipeline = make_pipeline(params, config.defense, fixed_k=config.fixed_k,
                             k_min=config.k_min, srs_fraction=config.srs_fraction,
                             sor_k=config.sor_k, sor_sigma=config.sor_sigma,
                             seed=config.seed)

    records = {"clean": evaluate(pipeline, dataset, config.workers)}
    corruption_rows = []
    for family in FAMILIES:
        for severity in SEVERITIES:
            corrupted, _ = suite[(family, severity)]
            recs = evaluate(pipeline, corrupted, config.workers)
            records[f"{family}_{severity}"] = recs
            corruption_rows.append((family, severity, accuracy_of(recs)))

    same_model_pivot = (config.pivot_report is None
                        and (config.pivot_checkpoint in (None, config.checkpoint))
                        and config.defense == "none")
    if same_model_pivot:
        pivot_accs = {(f, s): a for f, s, a in corruption_rows}
    else:
        pivot_accs, _ = _pivot_accuracies(config, suite, config.workers)

    ce = {}
    for family in FAMILIES:
        model_accs = [a for f, s, a in corruption_rows if f == family]
        pivot_list = [pivot_accs[(family, s)] for s in SEVERITIES]
        ce[family] = corruption_error(model_accs, pivot_list, family, config.ce_mode)
    mce = mean_corruption_error(ce)

    histograms = {"clean": histogram_table([r.focus_before for r in records["clean"]],
                                           config.bins)}
    for family in FAMILIES:
        pooled = [r.focus_before for s in SEVERITIES for r in records[f"{family}_{s}"]]
        histograms[family] = histogram_table(pooled, config.bins)

    corrupted_records = [r for name, recs in records.items() if name != "clean"
                         for r in recs]
    success = {
        "clean": success_by_focus(records["clean"], config.bins),
        "corrupted": success_by_focus(corrupted_records, config.bins),
    }

    clean_oa = accuracy_of(records["clean"])
    return EvalReport(config.echo(), clean_oa, corruption_rows, ce, mce,
                      histograms, success, records)


# ---------------------------------------------------------------------------
# deterministic serialization (floats fixed at 6 decimal places)
# ---------------------------------------------------------------------------


def _format_float(x: float) -> str:
    if not np.isfinite(x):
        raise ValueError("reports must not contain non-finite floats")
    text = format(float(x), ".6f")
    return "0.000000" if text == "-0.000000" else text


def _to_json(obj, indent: int) -> str:
    pad = " " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(obj)
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  "{k}": {_to_json(v, indent + 2)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}  {_to_json(v, indent + 2)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_report(report: EvalReport) -> str:
    return _to_json(report.to_json_dict(), 0) + "\n"


def write_report(report: EvalReport, out_dir):
    """Write report.json plus CSV mirrors (and per-sample diagnostics)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(dumps_report(report), newline="\n")

    with open(out / "corruptions.csv", "w", newline="\n") as fh:
        fh.write("family,severity,accuracy\n")
        for family, severity, acc in report.corruptions:
            fh.write(f"{family},{severity},{_format_float(acc)}\n")
    with open(out / "ce.csv", "w", newline="\n") as fh:
        fh.write("family,ce\n")
        for family in FAMILIES:
            fh.write(f"{family},{_format_float(report.ce[family])}\n")
        fh.write(f"mCE,{_format_float(report.mce)}\n")
    with open(out / "focus_histograms.csv", "w", newline="\n") as fh:
        fh.write("set,bin_left,bin_right,count\n")
        for name, rows in report.focus_histograms.items():
            for left, right, count in rows:
                fh.write(f"{name},{_format_float(left)},{_format_float(right)},{count}\n")
    with open(out / "focus_success.csv", "w", newline="\n") as fh:
        fh.write("set,bin_left,bin_right,count,success_rate\n")
        for name, rows in report.focus_success.items():
            for left, right, count, rate in rows:
                rate_text = "" if rate is None else _format_float(rate)
                fh.write(f"{name},{_format_float(left)},{_format_float(right)},"
                         f"{count},{rate_text}\n")
    if report.records:
        with open(out / "samples.csv", "w", newline="\n") as fh:
            fh.write("dataset,index,label,predicted,correct,focus,focus_after,k\n")
            for name, recs in report.records.items():
                for r in recs:
                    f_after = "" if r.focus_after is None else _format_float(r.focus_after)
                    k = "" if r.k is None else r.k
                    fh.write(f"{name},{r.index},{r.label},{r.predicted},"
                             f"{int(r.correct)},{_format_float(r.focus_before)},"
                             f"{f_after},{k}\n")


def load_report_json(path) -> dict:
    import json

    return json.loads(Path(path).read_text())
