"""Command-line interface.

Subcommands: ``simulate gauss|corpus|semisynth``, ``fit``, ``estimate``,
``check``, ``benchmark``. Dataset files are ``.csv`` (dense) or ``.pu``
(sparse); models and reports are JSON.
"""

from __future__ import annotations

import hashlib
import json
import sys

import click
import numpy as np
from scipy.special import expit

from ._version import VERSION
from .baselines import BUILTIN_KINDS, EmConfig, fit_em, fit_negative, fit_supervised
from .checks import assumption_check_report
from .data import LabeledDataset, SplitSpec, load_dataset, split, split_indices, write_dataset
from .gauss import GaussSynthConfig, generate_gauss
from .harness import SUITE_NAMES, emit_report, make_suite, run_suite
from .model import (
    FitResult,
    PurpleModel,
    TrainConfig,
    fit as fit_purple,
    mean_score_ratio,
    predict_condition_score,
)
from .visits import (
    SemiSynthConfig,
    drop_anchor_features,
    generate_visit_corpus,
    load_symptom_indices,
    select_common_symptoms,
    select_correlated_symptoms,
    select_high_rp_symptoms,
    simulate_labels,
)


def _parse_c(text: str) -> dict[str, float]:
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise click.UsageError(f"bad labeling-frequency entry {part!r}; "
                                   "expected name=value")
        name, value = part.split("=", 1)
        out[name.strip()] = float(value)
    return out


def _file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(obj: dict, out: str | None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


@click.group()
@click.version_option(VERSION)
def main():
    """Relative prevalence estimation from positive-unlabeled data."""


@main.group()
def simulate():
    """Generate synthetic datasets."""


@simulate.command("gauss")
@click.option("--n-a", default=10000, show_default=True)
@click.option("--n-b", default=20000, show_default=True)
@click.option("--dims", default=5, show_default=True)
@click.option("--mean-b-scale", default=1.0, show_default=True,
              help="Group b mean is this value times the all-ones vector.")
@click.option("--variance", default=16.0, show_default=True)
@click.option("--c", "c_text", default="a=0.5,b=0.25", show_default=True,
              help="Per-group labeling frequencies, e.g. a=0.5,b=0.25.")
@click.option("--separable", is_flag=True)
@click.option("--violation-delta", default=0.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(),
              help="Output path; .csv writes dense, .pu writes sparse.")
def simulate_gauss(n_a, n_b, dims, mean_b_scale, variance, c_text, separable,
                   violation_delta, seed, out):
    """Two-group Gaussian data with a logistic condition probability."""
    cfg = GaussSynthConfig(
        n_dims=dims, n_a=n_a, n_b=n_b, variance=variance,
        mean_a=-np.ones(dims), mean_b=mean_b_scale * np.ones(dims),
        c=_parse_c(c_text), separable=separable, violation_delta=violation_delta,
    )
    data = generate_gauss(cfg, seed)
    write_dataset(data, out)
    click.echo(f"wrote {out} ({data.n_rows} rows, {data.n_dims} dims)")


@simulate.command("corpus")
@click.option("--n-a", default=7000, show_default=True)
@click.option("--n-b", default=14000, show_default=True)
@click.option("--dims", default=1200, show_default=True)
@click.option("--mean-active", default=8.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def simulate_corpus(n_a, n_b, dims, mean_active, seed, out):
    """Sparse binary visit matrix (all labels 0/unknown) for label simulation."""
    visits, group, names = generate_visit_corpus(n_a, n_b, dims,
                                                 mean_active=mean_active, seed=seed)
    data = LabeledDataset(visits, group, names, np.zeros(visits.n_rows, dtype=np.int8))
    write_dataset(data, out)
    click.echo(f"wrote {out} ({data.n_rows} rows, {data.n_dims} dims)")


@simulate.command("semisynth")
@click.option("--visits", "visits_path", required=True, type=click.Path(exists=True),
              help="Dataset file providing the binary features and groups.")
@click.option("--symptoms", required=True,
              help="Selection mode (common, high-rp, correlated) or a path to a "
                   "newline-separated feature-index list.")
@click.option("--c", "c_text", required=True, help="e.g. a=0.5,b=0.25")
@click.option("--seed", default=0, show_default=True)
@click.option("--pool", default=50, show_default=True, help="common: frequency pool size.")
@click.option("--pick", default=25, show_default=True, help="common: symptoms sampled.")
@click.option("--min-count", default=50, show_default=True,
              help="high-rp: minimum per-group occurrence count.")
@click.option("--top", default=None, type=int,
              help="high-rp / correlated: number of symptoms kept.")
@click.option("--group-num", default=None, help="high-rp: ratio numerator group.")
@click.option("--group-den", default=None, help="high-rp: ratio denominator group.")
@click.option("--anchors", default=None, type=click.Path(exists=True),
              help="correlated: path to anchor feature indices (dropped from x).")
@click.option("--out", required=True, type=click.Path())
def simulate_semisynth(visits_path, symptoms, c_text, seed, pool, pick, min_count,
                       top, group_num, group_den, anchors, out):
    """Simulate disease labels over a visit matrix from suspicious symptoms."""
    base = load_dataset(visits_path)
    visits, group, names = base.features, base.group, base.group_names
    if symptoms == "common":
        v_sym = select_common_symptoms(visits, pool=pool, pick=pick, seed=seed)
    elif symptoms == "high-rp":
        num = group_num or names[-1]
        den = group_den or names[0]
        v_sym = select_high_rp_symptoms(visits, group, names, num, den,
                                        min_count=min_count, top=top or 10)
    elif symptoms == "correlated":
        if not anchors:
            raise click.UsageError("--symptoms correlated requires --anchors")
        anchor_set = load_symptom_indices(anchors, name="anchors")
        v_sym = select_correlated_symptoms(visits, anchor_set, top=top or 25)
        visits, v_sym = drop_anchor_features(visits, anchor_set, v_sym)
    else:
        v_sym = load_symptom_indices(symptoms)
    cfg = SemiSynthConfig(c=_parse_c(c_text), seed=seed)
    data = simulate_labels(visits, group, names, v_sym, cfg)
    write_dataset(data, out)
    click.echo(f"wrote {out} ({data.n_rows} rows, {data.n_dims} dims, "
               f"{len(v_sym)} suspicious symptoms)")


def _train_config(lambda_grid, learning_rate, max_epochs, patience, batch_size):
    kwargs = {}
    if lambda_grid is not None:
        kwargs["lambda_grid"] = tuple(float(x) for x in lambda_grid.split(","))
    if learning_rate is not None:
        kwargs["learning_rate"] = learning_rate
    if max_epochs is not None:
        kwargs["max_epochs"] = max_epochs
    if patience is not None:
        kwargs["patience"] = patience
    if batch_size is not None:
        kwargs["batch_size"] = batch_size if batch_size > 0 else None
    return TrainConfig(**kwargs)


@main.command("fit")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--method", default="purple", show_default=True,
              help="purple, negative, supervised, or em.")
@click.option("--lambda-grid", default=None, help="Comma-separated L1 strengths.")
@click.option("--learning-rate", default=None, type=float)
@click.option("--max-epochs", default=None, type=int)
@click.option("--patience", default=None, type=int)
@click.option("--batch-size", default=None, type=int, help="0 means full batch.")
@click.option("--seed", default=0, show_default=True)
@click.option("--splits", default=5, show_default=True)
@click.option("--em-max-iters", default=100, show_default=True)
@click.option("--em-tol", default=1e-5, show_default=True)
@click.option("--out", required=True, type=click.Path())
def fit_cmd(data_path, method, lambda_grid, learning_rate, max_epochs, patience,
            batch_size, seed, splits, em_max_iters, em_tol, out):
    """Fit a method on each train/val split and save the models."""
    if method not in BUILTIN_KINDS:
        raise click.UsageError(f"unknown method {method!r}; expected one of {BUILTIN_KINDS}")
    data = load_dataset(data_path)
    config = _train_config(lambda_grid, learning_rate, max_epochs, patience, batch_size)
    em_config = EmConfig(max_iters=em_max_iters, tol=em_tol)
    spec = SplitSpec(seed=seed, n_repeats=splits)
    fits = []
    for i in range(splits):
        train, val, _ = split(data, spec, i)
        if method == "purple":
            result = fit_purple(train, val, config, seed)
            fits.append({"split": i, **result.to_dict()})
        else:
            by_group = {}
            for gid in train.present_groups():
                name = train.group_names[gid]
                sub_train = train.take_rows(np.flatnonzero(train.group == gid))
                sub_val = val.take_rows(np.flatnonzero(val.group == gid))
                if method == "negative":
                    by_group[name] = fit_negative(sub_train, sub_val, config, seed).to_dict()
                elif method == "supervised":
                    by_group[name] = fit_supervised(sub_train, sub_val, config, seed).to_dict()
                else:
                    em = fit_em(sub_train, sub_val, em_config, config, seed)
                    by_group[name] = {**em.scorer.to_dict(), "c_hat": em.c_hat,
                                      "converged": em.converged, "n_iters": em.n_iters,
                                      "c_init": em.c_init}
            fits.append({"split": i, "scorers": by_group})
    payload = {
        "version": VERSION,
        "method": method,
        "data": {"path": data_path, "sha256": _file_sha256(data_path),
                 "n_rows": data.n_rows, "n_dims": data.n_dims},
        "split": {"fractions": list(spec.fractions), "seed": spec.seed,
                  "n_repeats": spec.n_repeats},
        "train": config.to_dict(),
        "em": {"max_iters": em_max_iters, "tol": em_tol} if method == "em" else None,
        "fits": fits,
    }
    _write_json(payload, out)


def _load_model_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _eval_rows(payload: dict, data, data_path: str, split_i: int, all_rows: bool):
    if all_rows:
        return np.arange(data.n_rows)
    if _file_sha256(data_path) != payload["data"]["sha256"]:
        raise click.UsageError(
            "data file differs from the one the model was fit on; pass --all-rows "
            "to score every row instead of the held-out test partitions")
    spec = SplitSpec(tuple(payload["split"]["fractions"]), payload["split"]["seed"],
                     payload["split"]["n_repeats"])
    _, _, test_idx = split_indices(data, spec, split_i)
    return test_idx


def _split_rp(payload: dict, data, rows: np.ndarray, fit_entry: dict,
              group_a: str, group_b: str) -> float:
    sub = data.take_rows(rows)
    mask_a, mask_b = sub.group_mask(group_a), sub.group_mask(group_b)
    if payload["method"] == "purple":
        if fit_entry["degenerate"]:
            raise click.ClickException(
                "model was fit without positive labels; estimates are meaningless")
        model = PurpleModel.from_dict(fit_entry["model"])
        scores = predict_condition_score(model, sub.features)
        return mean_score_ratio(scores, mask_a, mask_b, group_a, group_b)
    scorers = fit_entry["scorers"]
    alphas = {}
    for name, mask in ((group_a, mask_a), (group_b, mask_b)):
        if name not in scorers:
            raise click.ClickException(f"model has no scorer for group {name!r}")
        if not mask.any():
            raise click.ClickException(f"no evaluation rows for group {name!r}")
        w = np.asarray(scorers[name]["w"])
        z = sub.features.matvec(w) + scorers[name]["b"]
        alphas[name] = float(expit(z)[mask].mean())
    if alphas[group_b] < 1e-12:
        raise click.ClickException(f"estimated prevalence for {group_b!r} is zero")
    return alphas[group_a] / alphas[group_b]


def _complement_view(data, group: str):
    """Dataset view where every row outside ``group`` is relabeled 'rest'."""
    names = [group, "rest"]
    gid = data.group_id(group)
    merged = np.where(data.group == gid, 0, 1)
    return LabeledDataset(data.features, merged, names, data.s, data.y, data.latent_p)


@main.command("estimate")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--pairs", default=None, help="Comma-separated ordered pairs, e.g. a:b,b:a.")
@click.option("--vs-complement", default=None,
              help="Estimate a group against all remaining rows.")
@click.option("--all-rows", is_flag=True, help="Score all rows, not test partitions.")
@click.option("--out", default=None, type=click.Path())
def estimate_cmd(model_path, data_path, pairs, vs_complement, all_rows, out):
    """Relative prevalence estimates from a saved model."""
    if not pairs and not vs_complement:
        raise click.UsageError("nothing to do: pass --pairs and/or --vs-complement")
    payload = _load_model_file(model_path)
    data = load_dataset(data_path)
    report = {"version": VERSION, "method": payload["method"], "model": model_path,
              "data": data_path, "eval_rows": "all" if all_rows else "test-partitions",
              "estimates": []}
    requests = []
    if pairs:
        for pair in pairs.split(","):
            if ":" not in pair:
                raise click.UsageError(f"bad pair {pair!r}; expected a:b")
            a, b = pair.split(":", 1)
            requests.append(("pair", a.strip(), b.strip()))
    if vs_complement:
        requests.append(("vs-complement", vs_complement.strip(), None))
    for kind, a, b in requests:
        per_split = []
        for fit_entry in payload["fits"]:
            split_i = fit_entry["split"]
            rows = _eval_rows(payload, data, data_path, split_i, all_rows)
            if kind == "pair":
                per_split.append(_split_rp(payload, data, rows, fit_entry, a, b))
            else:
                view = _complement_view(data, a)
                per_split.append(_split_rp(payload, view, rows, fit_entry, a, "rest"))
        report["estimates"].append({
            "kind": kind,
            "group_a": a,
            "group_b": b if kind == "pair" else f"complement of {a}",
            "value": float(np.mean(per_split)),
            "per_split_values": per_split,
        })
    _write_json(report, out)


@main.command("check")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--bins", default=10, show_default=True)
@click.option("--split-index", default=0, show_default=True,
              help="Which stored split's model and partitions to audit.")
@click.option("--ece-warn", default=0.05, show_default=True)
@click.option("--delta-auc-warn", default=0.01, show_default=True)
@click.option("--out", required=True, type=click.Path())
def check_cmd(model_path, data_path, bins, split_index, ece_warn, delta_auc_warn, out):
    """Assumption checks (calibration, constrained-vs-unconstrained fit)."""
    payload = _load_model_file(model_path)
    if payload["method"] != "purple":
        raise click.UsageError("assumption checks apply to purple models")
    if _file_sha256(data_path) != payload["data"]["sha256"]:
        raise click.UsageError("data file differs from the one the model was fit on")
    data = load_dataset(data_path)
    entry = next((f for f in payload["fits"] if f["split"] == split_index), None)
    if entry is None:
        raise click.UsageError(f"model file has no split {split_index}")
    spec = SplitSpec(tuple(payload["split"]["fractions"]), payload["split"]["seed"],
                     payload["split"]["n_repeats"])
    train, val, test = split(data, spec, split_index)
    result = FitResult(
        model=PurpleModel.from_dict(entry["model"]),
        selected_lambda=entry["selected_lambda"],
        val_auc=entry["val_auc"],
        val_cross_entropy=entry["val_cross_entropy"],
        epochs_run=entry["epochs_run"],
        loss_trace=[],
        degenerate=entry["degenerate"],
    )
    cfg_d = payload["train"]
    config = TrainConfig(
        learning_rate=cfg_d["learning_rate"], adam_eps=cfg_d["adam_eps"],
        weight_decay=cfg_d["weight_decay"], lambda_grid=tuple(cfg_d["lambda_grid"]),
        max_epochs=cfg_d["max_epochs"], patience=cfg_d["patience"],
        batch_size=cfg_d["batch_size"],
    )
    report = assumption_check_report(result, train, val, test, config, n_bins=bins,
                                     ece_warn=ece_warn, delta_auc_warn=delta_auc_warn)
    _write_json({"version": VERSION, "model": model_path, "data": data_path,
                 "split_index": split_index, **report.to_dict()}, out)
    click.echo(f"calibration: {report.calibration_verdict}  "
               f"model-fit: {report.model_fit_verdict}")


@main.command("benchmark")
@click.option("--suite", "suite_name", required=True,
              help=f"One of {', '.join(SUITE_NAMES)}.")
@click.option("--methods", default=None, help="Comma-separated method list.")
@click.option("--splits", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--jobs", default=1, show_default=True)
@click.option("--gauss-n", default=None,
              help="Override the Gaussian suites' group sizes, e.g. 1000,2000.")
def benchmark_cmd(suite_name, methods, splits, seed, out, jobs, gauss_n):
    """Run an experiment suite and write report.json / results.csv.

    Exit status: 0 if every cell succeeded, 2 if some cells failed,
    1 on configuration errors.
    """
    try:
        method_tuple = tuple(m.strip() for m in methods.split(",")) if methods else None
        if method_tuple:
            unknown = [m for m in method_tuple if m not in BUILTIN_KINDS]
            if unknown:
                raise ValueError(f"unknown methods: {unknown}")
        overrides = {}
        if gauss_n:
            n_a, n_b = (int(x) for x in gauss_n.split(","))
            overrides["gauss_n"] = (n_a, n_b)
        suite = make_suite(suite_name, methods=method_tuple, n_splits=splits,
                           base_seed=seed, **overrides)
    except ValueError as e:
        click.echo(f"configuration error: {e}", err=True)
        sys.exit(1)
    report = run_suite(suite, jobs=jobs)
    paths = emit_report(report, out)
    click.echo(f"wrote {paths['report.json']} and {paths['results.csv']}")
    if report.n_failed_cells:
        click.echo(f"{report.n_failed_cells} cell(s) failed; see report.json", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
