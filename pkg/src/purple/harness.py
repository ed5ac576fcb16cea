"""Benchmark suites: generate data, sweep settings, fit every method on
every split, and serialize deterministic reports.

Every cell of a suite -- a (method, sweep point, split) triple -- runs with
a seed derived from the base seed and the cell's coordinates, so cells are
independent and the full report is a pure function of the suite
configuration. A failed cell is recorded with its error and never defaults
to a number.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._version import VERSION
from .baselines import EmConfig, baseline_relative_prevalence
from .data import LabeledDataset, SplitSpec, split
from .gauss import GaussSynthConfig, generate_gauss, shift_sweep_config
from .model import RelativePrevalenceEstimate, TrainConfig
from .stats import paired_t_test
from .visits import (
    SemiSynthConfig,
    SymptomSet,
    drop_anchor_features,
    generate_visit_corpus,
    select_common_symptoms,
    select_correlated_symptoms,
    select_high_rp_symptoms,
    simulate_labels,
)

SUITE_NAMES = ("separability", "label-frequency", "covariate-shift", "violation",
               "semisynth")

_GAUSS_TRAIN = TrainConfig(lambda_grid=(0.0,), max_epochs=4000, patience=30)
_SEMISYNTH_TRAIN = TrainConfig(max_epochs=250, patience=10, batch_size=1024)

# Seed-derivation tags; distinct per purpose so streams never collide.
_TAG_DATA, _TAG_SPLIT, _TAG_CELL, _TAG_CORPUS, _TAG_SYMPTOMS, _TAG_LABELS = range(6)


def derive_seed(*parts) -> int:
    """Stable seed from heterogeneous coordinates (ints and strings)."""
    ints = [p if isinstance(p, (int, np.integer)) else zlib.crc32(str(p).encode())
            for p in parts]
    return int(np.random.SeedSequence([int(p) for p in ints])
               .generate_state(1, np.uint64)[0] >> 1)


@dataclass
class SemiSynthScale:
    n_a: int = 7000
    n_b: int = 14000
    n_dims: int = 1200
    mean_active: float = 8.0

    def to_dict(self) -> dict:
        return {"n_a": self.n_a, "n_b": self.n_b, "n_dims": self.n_dims,
                "mean_active": self.mean_active}


@dataclass
class ExperimentSuite:
    name: str
    methods: tuple[str, ...]
    sweep_values: tuple
    n_splits: int = 5
    base_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    em: EmConfig = field(default_factory=EmConfig)
    c_a: float = 0.5
    c_b: float = 0.25
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    semisynth_scale: SemiSynthScale | None = None
    gauss_n: tuple[int, int] | None = None  # (n_a, n_b) override, mainly for tests

    def __post_init__(self):
        if self.name not in SUITE_NAMES:
            raise ValueError(f"unknown suite {self.name!r}; expected one of {SUITE_NAMES}")
        if self.n_splits < 2:
            raise ValueError("n_splits must be at least 2 for paired t-tests")

    def config_echo(self) -> dict:
        echo = {
            "name": self.name,
            "methods": list(self.methods),
            "sweep_values": [str(v) for v in self.sweep_values],
            "n_splits": self.n_splits,
            "base_seed": self.base_seed,
            "c_a": self.c_a,
            "c_b": self.c_b,
            "fractions": list(self.fractions),
            "train": self.train.to_dict(),
            "em": {"max_iters": self.em.max_iters, "tol": self.em.tol,
                   "inner_epochs": self.em.inner_epochs,
                   "inner_learning_rate": self.em.inner_learning_rate},
            "accuracy_definition": "abs(ratio_to_true - 1) per split",
            "split_stratification": "by group",
        }
        if self.semisynth_scale is not None:
            echo["semisynth_scale"] = self.semisynth_scale.to_dict()
        if self.gauss_n is not None:
            echo["gauss_n"] = list(self.gauss_n)
        return echo


_SEMISYNTH_MODES = ("common", "high-rp", "correlated", "recognized")
_CB_SWEEP = (0.1, 0.3, 0.5, 0.7, 0.9)


def make_suite(name: str, methods: tuple[str, ...] | None = None, n_splits: int = 5,
               base_seed: int = 0, **overrides) -> ExperimentSuite:
    """Construct a suite with its documented default configuration."""
    if name == "separability":
        defaults = dict(methods=("purple", "negative", "em", "supervised"),
                        sweep_values=("nonseparable", "separable"), train=_GAUSS_TRAIN)
    elif name == "label-frequency":
        defaults = dict(methods=("purple", "negative", "em", "supervised"),
                        sweep_values=_CB_SWEEP, train=_GAUSS_TRAIN)
    elif name == "covariate-shift":
        defaults = dict(methods=("purple", "negative", "em", "supervised"),
                        sweep_values=(-1.0, 0.0, 0.5, 0.75, 1.0), train=_GAUSS_TRAIN)
    elif name == "violation":
        defaults = dict(methods=("purple", "supervised"),
                        sweep_values=(0.0, 0.1, 0.2, 0.3, 0.4), train=_GAUSS_TRAIN)
    elif name == "semisynth":
        defaults = dict(methods=("purple", "negative"),
                        sweep_values=tuple(f"{m}:{cb}" for m in _SEMISYNTH_MODES
                                           for cb in _CB_SWEEP),
                        train=_SEMISYNTH_TRAIN, semisynth_scale=SemiSynthScale())
    else:
        raise ValueError(f"unknown suite {name!r}; expected one of {SUITE_NAMES}")
    if methods is not None:
        defaults["methods"] = tuple(methods)
    defaults.update(overrides)
    return ExperimentSuite(name=name, n_splits=n_splits, base_seed=base_seed, **defaults)


def true_relative_prevalence(data: LabeledDataset, group_a: str, group_b: str) -> float:
    """Exact generator-side prevalence ratio: group means of latent_p."""
    if data.latent_p is None:
        raise ValueError("true relative prevalence requires latent_p (generated data)")
    mask_a = data.group_mask(group_a)
    mask_b = data.group_mask(group_b)
    if not mask_a.any() or not mask_b.any():
        raise ValueError("both groups must be present")
    return float(data.latent_p[mask_a].mean() / data.latent_p[mask_b].mean())


# ---------------------------------------------------------------------------
# Sweep-point data generation


def _gauss_config_for(suite: ExperimentSuite, sweep_value) -> GaussSynthConfig:
    c = {"a": suite.c_a, "b": suite.c_b}
    if suite.name == "separability":
        cfg = replace(GaussSynthConfig(c=c), separable=(sweep_value == "separable"))
    elif suite.name == "label-frequency":
        cfg = GaussSynthConfig(c={"a": suite.c_a, "b": float(sweep_value)})
    elif suite.name == "covariate-shift":
        cfg = replace(shift_sweep_config(float(sweep_value)), c=c)
    elif suite.name == "violation":
        # Group a is the advantaged, higher-prevalence group: its mean sits on
        # the positive side of the hyperplane and it gets the +delta/2 offset.
        base = GaussSynthConfig(c=c)
        cfg = replace(base, mean_a=np.ones(base.n_dims), mean_b=-np.ones(base.n_dims),
                      violation_delta=float(sweep_value))
    else:
        raise ValueError(f"suite {suite.name!r} is not Gaussian-based")
    if suite.gauss_n is not None:
        cfg = replace(cfg, n_a=suite.gauss_n[0], n_b=suite.gauss_n[1])
    return cfg


def _semisynth_mode_matrix(suite: ExperimentSuite, mode: str):
    """Visit matrix, groups and symptom set for one selection mode."""
    scale = suite.semisynth_scale or SemiSynthScale()
    visits, group, names = generate_visit_corpus(
        scale.n_a, scale.n_b, scale.n_dims, mean_active=scale.mean_active,
        seed=derive_seed(suite.base_seed, _TAG_CORPUS))
    sym_seed = derive_seed(suite.base_seed, _TAG_SYMPTOMS, mode)
    if mode == "common":
        v_sym = select_common_symptoms(visits, pool=50, pick=25, seed=sym_seed)
    elif mode == "high-rp":
        v_sym = select_high_rp_symptoms(visits, group, names, "b", "a",
                                        min_count=50, top=10)
    elif mode == "correlated":
        anchors = select_common_symptoms(visits, pool=100, pick=10, seed=sym_seed)
        selected = select_correlated_symptoms(visits, anchors, top=25)
        visits, v_sym = drop_anchor_features(visits, anchors, selected)
    elif mode == "recognized":
        counts = visits.column_counts()
        eligible = np.flatnonzero(counts >= 10)
        rng = np.random.default_rng(np.random.SeedSequence([sym_seed]))
        chosen = rng.choice(eligible, size=min(100, eligible.size), replace=False)
        v_sym = SymptomSet(tuple(int(i) for i in chosen), name="recognized")
    else:
        raise ValueError(f"unknown symptom-selection mode {mode!r}")
    return visits, group, names, v_sym


def suite_datasets(suite: ExperimentSuite) -> list[tuple[object, LabeledDataset]]:
    """Materialize (sweep value, dataset) pairs for every sweep point.

    Within a suite the non-swept random streams are shared across sweep
    points (feature draws for the Gaussian suites, the visit corpus for the
    semi-synthetic one), so sweeps are paired comparisons.
    """
    out = []
    if suite.name == "semisynth":
        by_mode: dict[str, tuple] = {}
        for sv in suite.sweep_values:
            mode, cb_str = str(sv).split(":")
            if mode not in by_mode:
                by_mode[mode] = _semisynth_mode_matrix(suite, mode)
            visits, group, names, v_sym = by_mode[mode]
            cfg = SemiSynthConfig(c={"a": suite.c_a, "b": float(cb_str)},
                                  seed=derive_seed(suite.base_seed, _TAG_LABELS, mode))
            out.append((sv, simulate_labels(visits, group, names, v_sym, cfg)))
        return out
    data_seed = derive_seed(suite.base_seed, _TAG_DATA)
    for sv in suite.sweep_values:
        out.append((sv, generate_gauss(_gauss_config_for(suite, sv), data_seed)))
    return out


# ---------------------------------------------------------------------------
# Suite execution


def _run_cell(suite: ExperimentSuite, data: LabeledDataset, sweep_value, split_i: int,
              method: str) -> dict:
    spec = SplitSpec(suite.fractions,
                     seed=derive_seed(suite.base_seed, _TAG_SPLIT, str(sweep_value)),
                     n_repeats=suite.n_splits)
    seed = derive_seed(suite.base_seed, _TAG_CELL, str(sweep_value), split_i, method)
    try:
        train, val, test = split(data, spec, split_i)
        est = baseline_relative_prevalence(method, train, val, test, "a", "b",
                                           seed=seed, config=suite.train,
                                           em_config=suite.em)
        return {"split": split_i, "rp_estimate": est.value, "flags": est.flags}
    except Exception as e:  # a failed cell must not sink the suite
        return {"split": split_i, "error": f"{type(e).__name__}: {e}"}


@dataclass
class RunReport:
    suite: str
    config: dict
    results: list[dict]
    t_tests: list[dict]
    version: str = VERSION

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.config, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @property
    def n_failed_cells(self) -> int:
        return sum(1 for r in self.results for s in r["splits"] if "error" in s)

    def result_for(self, method: str, sweep_value) -> dict:
        for r in self.results:
            if r["method"] == method and r["sweep_value"] == str(sweep_value):
                return r
        raise KeyError(f"no result for ({method}, {sweep_value})")

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "version": self.version,
            "config": self.config,
            "config_hash": self.config_hash,
            "n_failed_cells": self.n_failed_cells,
            "results": self.results,
            "t_tests": self.t_tests,
        }


def _aggregate(method: str, sweep_value, true_rp: float, cells: list[dict]) -> dict:
    ok = [c for c in cells if "error" not in c]
    entry: dict = {
        "method": method,
        "sweep_value": str(sweep_value),
        "true_rp": true_rp,
        "splits": [],
    }
    for c in cells:
        if "error" in c:
            entry["splits"].append({"split": c["split"], "error": c["error"]})
        else:
            entry["splits"].append({
                "split": c["split"],
                "rp_estimate": c["rp_estimate"],
                "ratio_to_true": c["rp_estimate"] / true_rp,
                "flags": c["flags"],
            })
    if ok:
        est = RelativePrevalenceEstimate(
            group_a="a", group_b="b", value=0.0,
            per_split_values=[c["rp_estimate"] for c in ok],
            true_value=true_rp,
            flags=sorted({f for c in ok for f in c["flags"]}),
        )
        entry["estimate"] = est.to_dict()
        entry["accuracy_per_split"] = [abs(c["rp_estimate"] / true_rp - 1.0) for c in ok]
    else:
        entry["estimate"] = None
        entry["accuracy_per_split"] = []
    return entry


def _t_tests_vs_purple(results: list[dict], methods) -> list[dict]:
    """Paired t-tests of per-split accuracy, each baseline against the core
    method, per sweep point and pooled across points."""
    if "purple" not in methods:
        return []
    by_key = {(r["method"], r["sweep_value"]): r for r in results}
    sweep_values = sorted({r["sweep_value"] for r in results})
    out = []
    for method in methods:
        if method == "purple":
            continue
        pooled_purple: list[float] = []
        pooled_other: list[float] = []
        for sv in sweep_values:
            pu, other = by_key.get(("purple", sv)), by_key.get((method, sv))
            if pu is None or other is None:
                continue
            pu_acc = {s["split"]: abs(s["ratio_to_true"] - 1.0)
                      for s in pu["splits"] if "error" not in s}
            ot_acc = {s["split"]: abs(s["ratio_to_true"] - 1.0)
                      for s in other["splits"] if "error" not in s}
            common = sorted(set(pu_acc) & set(ot_acc))
            entry = {"method": method, "sweep_value": sv, "n_pairs": len(common)}
            a = [ot_acc[i] for i in common]
            b = [pu_acc[i] for i in common]
            pooled_other.extend(a)
            pooled_purple.extend(b)
            if len(common) >= 2:
                try:
                    # Positive t means the baseline is less accurate.
                    entry.update(paired_t_test(a, b).to_dict())
                except ValueError as e:
                    entry["error"] = str(e)
            else:
                entry["error"] = "fewer than two common successful splits"
            out.append(entry)
        pooled_entry = {"method": method, "sweep_value": "all",
                        "n_pairs": len(pooled_purple)}
        if len(pooled_purple) >= 2:
            try:
                pooled_entry.update(paired_t_test(pooled_other, pooled_purple).to_dict())
            except ValueError as e:
                pooled_entry["error"] = str(e)
        else:
            pooled_entry["error"] = "fewer than two common successful splits"
        out.append(pooled_entry)
    return out


def run_suite(suite: ExperimentSuite, jobs: int = 1) -> RunReport:
    """Execute every (method, sweep point, split) cell and aggregate.

    Cells are independent; with ``jobs > 1`` they run in a thread pool.
    Per-cell seeds depend only on cell coordinates, so concurrency never
    changes any result.
    """
    points = suite_datasets(suite)
    tasks = [(sv, data, split_i, method)
             for sv, data in points
             for method in suite.methods
             for split_i in range(suite.n_splits)]

    def run(task):
        sv, data, split_i, method = task
        return _run_cell(suite, data, sv, split_i, method)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            cell_results = list(pool.map(run, tasks))
    else:
        cell_results = [run(t) for t in tasks]

    cells: dict[tuple, list[dict]] = {}
    for task, res in zip(tasks, cell_results):
        sv, _, _, method = task
        cells.setdefault((method, str(sv)), []).append(res)

    true_rp = {str(sv): true_relative_prevalence(data, "a", "b") for sv, data in points}
    results = []
    for sv, _ in points:
        for method in suite.methods:
            cell_list = sorted(cells[(method, str(sv))], key=lambda c: c["split"])
            results.append(_aggregate(method, sv, true_rp[str(sv)], cell_list))
    return RunReport(
        suite=suite.name,
        config=suite.config_echo(),
        results=results,
        t_tests=_t_tests_vs_purple(results, suite.methods),
    )


# ---------------------------------------------------------------------------
# Serialization


def report_json_bytes(report: RunReport) -> bytes:
    return (json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n").encode()


def results_csv_bytes(report: RunReport) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["suite", "method", "sweep_value", "split", "rp_estimate",
                     "rp_true", "ratio_to_true"])
    for r in report.results:
        for s in r["splits"]:
            if "error" in s:
                continue
            writer.writerow([report.suite, r["method"], r["sweep_value"], s["split"],
                             repr(s["rp_estimate"]), repr(r["true_rp"]),
                             repr(s["ratio_to_true"])])
    return buf.getvalue().encode()


def emit_report(report: RunReport, out_dir: str) -> dict[str, str]:
    """Write ``report.json`` and ``results.csv``; returns the paths written.

    Output is a pure function of the report, with stable key ordering and
    shortest-round-trip float formatting, so identical runs produce
    byte-identical files.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for fname, blob in (("report.json", report_json_bytes(report)),
                        ("results.csv", results_csv_bytes(report))):
        path = os.path.join(out_dir, fname)
        try:
            with open(path, "wb") as fh:
                fh.write(blob)
        except OSError as e:
            raise OSError(f"failed writing {path}: {e}") from e
        paths[fname] = path
    return paths
