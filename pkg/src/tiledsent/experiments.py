"""Cross-validated training, evaluation metrics, and model comparison.

The protocol: a fixed stratified test block is held out once, the
remaining pool is split into rotating validation folds, and every swept
configuration is trained per fold with early stopping on the validation
metric. Candidate architectures are compared against the CNN baseline of
the same filter size with a paired two-sided Student's t-test over fold
metrics.
"""

from __future__ import annotations

import csv
import json
import logging
import multiprocessing
import os
import time
from collections import namedtuple
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import stdtr

from .errors import InvalidInputError, TiledSentError, UndefinedStatisticError
from .models import ModelConfig, build_model
from .optim import SGD, Adam

logger = logging.getLogger(__name__)

SCHEMES = {
    "imdb-4fold": (4, 0.2),
    "semeval-9fold": (9, 0.1),
}

# Reported full-corpus results, kept as reference metadata in reports;
# they need the complete datasets and long training to approach.
REFERENCE_FULL_SCALE_RESULTS = {
    "imdb_accuracy": {"cnn_n4": 0.8528, "htcnn_k3_n4": 0.8825},
    "semeval_macro_recall": {"cnn_n3": 0.7881, "htcnn_k3_n3": 0.8516},
}


@dataclass
class Fold:
    fold: int
    train_indices: np.ndarray
    validation_indices: np.ndarray


@dataclass
class CVPlan:
    dataset_id: str
    scheme: str
    seed: int
    test_indices: np.ndarray
    folds: list = field(default_factory=list)

    @property
    def n_folds(self) -> int:
        return len(self.folds)


def make_cv_plan(labels, scheme, seed=0, dataset_id="dataset",
                 n_folds=None, test_fraction=None) -> CVPlan:
    """Stratified split: one fixed test block, then the pool divided into
    n disjoint validation blocks that rotate across folds."""
    labels = np.asarray(labels)
    if scheme not in SCHEMES and (n_folds is None or test_fraction is None):
        raise InvalidInputError(
            f"unknown scheme {scheme!r}; expected one of {sorted(SCHEMES)}"
        )
    default_folds, default_frac = SCHEMES.get(scheme, (None, None))
    n_folds = n_folds or default_folds
    test_fraction = test_fraction if test_fraction is not None else default_frac

    rng = np.random.default_rng(seed)
    test_parts = []
    val_parts = [[] for _ in range(n_folds)]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = rng.permutation(idx)
        t = int(round(test_fraction * len(idx)))
        test_parts.append(idx[:t])
        pool = idx[t:]
        if len(pool) < n_folds:
            raise InvalidInputError(
                f"class {cls} has too few items ({len(idx)}) for "
                f"{n_folds}-fold splitting"
            )
        for f, block in enumerate(np.array_split(pool, n_folds)):
            val_parts[f].append(block)

    test = np.sort(np.concatenate(test_parts))
    blocks = [np.sort(np.concatenate(parts)) for parts in val_parts]
    folds = []
    for f in range(n_folds):
        val = blocks[f]
        train = np.sort(np.concatenate([blocks[g] for g in range(n_folds) if g != f]))
        folds.append(Fold(f, train, val))
    return CVPlan(dataset_id, scheme, seed, test, folds)


def class_weights(counts) -> np.ndarray:
    """Weights inversely proportional to class counts, normalized to mean 1."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0:
        raise InvalidInputError("counts must be a non-empty vector")
    if np.any(counts <= 0):
        raise InvalidInputError("every class must have a positive count")
    inv = 1.0 / counts
    return inv / inv.mean()


# -- metrics -------------------------------------------------------------------


@dataclass
class FoldResult:
    fold: int
    metric: str
    value: float
    accuracy: float
    macro_recall: float
    per_class_recall: list
    epochs_run: int = 0


def _metrics_from_predictions(y_true, y_pred, num_classes):
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    accuracy = float(np.mean(y_true == y_pred))
    per_class = []
    recalls = []
    for c in range(num_classes):
        mask = y_true == c
        if not mask.any():
            logger.warning(
                "class %d absent from the evaluation set; dropped from the "
                "macro-recall mean", c,
            )
            per_class.append(None)
            continue
        r = float(np.mean(y_pred[mask] == c))
        per_class.append(r)
        recalls.append(r)
    macro = float(np.mean(recalls)) if recalls else 0.0
    return accuracy, macro, per_class


def evaluate(model, sequences, labels, indices=None, metric="accuracy",
             fold=0) -> FoldResult:
    """Accuracy and macro-average recall of a model on a labelled set."""
    if metric not in ("accuracy", "macro_recall"):
        raise InvalidInputError(f"unknown metric {metric!r}")
    idx = np.arange(len(labels)) if indices is None else np.asarray(indices)
    if idx.size == 0:
        raise InvalidInputError("evaluation set is empty")
    preds = np.array([model.predict(sequences[i]) for i in idx])
    truth = np.asarray(labels)[idx]
    accuracy, macro, per_class = _metrics_from_predictions(
        truth, preds, model.config.num_classes
    )
    value = accuracy if metric == "accuracy" else macro
    return FoldResult(fold, metric, value, accuracy, macro, per_class)


class ExperimentRunError(TiledSentError):
    """A fold failed mid-sweep; results completed so far are attached."""

    def __init__(self, message, partial_report=None):
        super().__init__(message)
        self.partial_report = partial_report


TTestResult = namedtuple("TTestResult", ["statistic", "df", "p_value"])


def paired_t_test(baseline, candidate) -> TTestResult:
    """Two-sided paired Student's t-test over equal-length fold metrics."""
    a = np.asarray(baseline, dtype=np.float64)
    b = np.asarray(candidate, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidInputError("paired samples must be equal-length vectors")
    if a.size < 2:
        raise InvalidInputError("need at least two paired observations")
    diff = b - a
    sd = diff.std(ddof=1)
    if sd == 0.0:
        raise UndefinedStatisticError(
            "paired differences have zero variance; t statistic is undefined"
        )
    df = a.size - 1
    t = diff.mean() / (sd / np.sqrt(a.size))
    p = 2.0 * float(stdtr(df, -abs(t)))
    return TTestResult(float(t), df, p)


# -- training ------------------------------------------------------------------


@dataclass
class TrainingParams:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    patience: int = 3
    eval_metric: str = "accuracy"
    class_weighting: bool = True
    max_folds: int = 0            # 0 = use every fold in the plan


def _make_optimizer(params, name, lr):
    if name == "adam":
        return Adam(params, lr=lr)
    if name == "sgd":
        return SGD(params, lr=lr)
    raise InvalidInputError(f"unknown optimizer {name!r}")


def train_model(model, sequences, labels, train_idx, val_idx, params,
                rng, weights=None) -> int:
    """Minibatch training with early stopping on the validation metric.

    Returns the number of epochs run; the model is left at its best
    validation state.
    """
    opt = _make_optimizer(model.parameters(), params.optimizer,
                          params.learning_rate)
    best = -np.inf
    best_state = model.copy_state()
    patience_left = params.patience
    epochs_run = 0
    for _ in range(params.epochs):
        order = rng.permutation(np.asarray(train_idx))
        for start in range(0, len(order), params.batch_size):
            batch = order[start : start + params.batch_size]
            opt.zero_grad()
            scale = 1.0 / len(batch)
            for i in batch:
                out = model.forward(sequences[i], training=True, rng=rng)
                loss = model.loss(out, labels[i], weights) * scale
                loss.backward()
            opt.step()
        epochs_run += 1
        score = evaluate(model, sequences, labels, val_idx,
                         metric=params.eval_metric).value
        if score > best:
            best = score
            best_state = model.copy_state()
            patience_left = params.patience
        else:
            patience_left -= 1
            if patience_left <= 0:
                break
    model.load_state(best_state)
    return epochs_run


def _fold_class_weights(labels, train_idx, num_classes, enabled):
    if not enabled:
        return None
    counts = np.bincount(np.asarray(labels)[train_idx], minlength=num_classes)
    return class_weights(counts)


def _run_fold(args):
    (ci, fold_id, config, embeddings, assignment, train_idx, val_idx,
     test_idx, sequences, labels, params, seed) = args
    ss = np.random.SeedSequence([seed, ci, fold_id])
    init_ss, train_ss = ss.spawn(2)
    model = build_model(config, embeddings, assignment, seed=init_ss)
    weights = _fold_class_weights(labels, train_idx, config.num_classes,
                                  params.class_weighting)
    epochs = train_model(model, sequences, labels, train_idx, val_idx, params,
                         np.random.default_rng(train_ss), weights)
    result = evaluate(model, sequences, labels, test_idx,
                      metric=params.eval_metric, fold=fold_id)
    result.epochs_run = epochs
    return ci, fold_id, result, model


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("TILEDSENT_WORKERS", "1")))
    except ValueError:
        return 1


def run_experiment(sweep, plan, sequences, labels, embeddings,
                   assignments=None, params=None, seed=0,
                   checkpoint_hook=None) -> dict:
    """Train every configuration on every fold and aggregate a report.

    ``assignments`` maps cluster count -> ClusterAssignment (needed by the
    hybrid architectures). The report dictionary is a pure function of
    (data, sweep, params, seed); wall-clock timings are returned
    separately under the "_timing" key for the caller to keep out of
    deterministic artifacts.
    """
    params = params or TrainingParams()
    assignments = assignments or {}
    folds = plan.folds[: params.max_folds] if params.max_folds else plan.folds

    tasks = []
    for ci, config in enumerate(sweep):
        assignment = None
        if config.architecture in ("shtcnn", "htcnn"):
            assignment = assignments.get(config.tile_size)
            if assignment is None:
                raise InvalidInputError(
                    f"no cluster assignment for k={config.tile_size}"
                )
        for fold in folds:
            tasks.append(
                (ci, fold.fold, config, embeddings, assignment,
                 fold.train_indices, fold.validation_indices,
                 plan.test_indices, sequences, labels, params, seed)
            )

    started = time.time()
    workers = worker_count()
    if workers > 1 and len(tasks) > 1 and hasattr(os, "fork"):
        with multiprocessing.get_context("fork").Pool(workers) as pool:
            raw = pool.map(_run_fold, tasks)
    else:
        raw = []
        for task in tasks:
            try:
                raw.append(_run_fold(task))
            except Exception as exc:
                # keep what already finished; the caller decides what to do
                partial = _assemble_report(
                    sweep, raw, plan, params, seed, len(folds),
                    time.time() - started, workers, checkpoint_hook,
                    failure=f"{sweep[task[0]].architecture} "
                            f"k={sweep[task[0]].tile_size} "
                            f"n={sweep[task[0]].filter_size} "
                            f"fold {task[1]}: {exc}",
                )
                raise ExperimentRunError(str(exc), partial) from exc
    return _assemble_report(sweep, raw, plan, params, seed, len(folds),
                            time.time() - started, workers, checkpoint_hook)


def _assemble_report(sweep, raw, plan, params, seed, folds_used, elapsed,
                     workers, checkpoint_hook, failure=None):
    by_config = {}
    for ci, fold_id, result, model in sorted(raw, key=lambda r: (r[0], r[1])):
        by_config.setdefault(ci, []).append(result)
        if checkpoint_hook is not None:
            checkpoint_hook(sweep[ci], fold_id, model)

    cells = []
    for ci, config in enumerate(sweep):
        results = by_config.get(ci)
        if not results:
            continue
        values = [r.value for r in results]
        cells.append(
            {
                "architecture": config.architecture.upper(),
                "tile_size": config.tile_size,
                "filter_size": config.filter_size,
                "metric": params.eval_metric,
                "mean": float(np.mean(values)),
                "std": float(np.std(values)),
                "mean_accuracy": float(np.mean([r.accuracy for r in results])),
                "mean_macro_recall": float(np.mean([r.macro_recall for r in results])),
                "folds": [
                    {
                        "fold": r.fold,
                        "accuracy": r.accuracy,
                        "macro_recall": r.macro_recall,
                        "per_class_recall": r.per_class_recall,
                        "epochs_run": r.epochs_run,
                    }
                    for r in results
                ],
            }
        )

    baselines = {
        sweep[ci].filter_size: [r.value for r in results]
        for ci, results in by_config.items()
        if sweep[ci].architecture == "cnn"
    }
    comparisons = []
    for ci, config in enumerate(sweep):
        if config.architecture == "cnn" or ci not in by_config:
            continue
        entry = {
            "architecture": config.architecture.upper(),
            "tile_size": config.tile_size,
            "filter_size": config.filter_size,
            "baseline": "CNN",
        }
        base = baselines.get(config.filter_size)
        if base is None:
            entry["p_value"] = None
            entry["note"] = "no CNN baseline with this filter size in the sweep"
        else:
            try:
                test = paired_t_test(base, [r.value for r in by_config[ci]])
                entry["t_statistic"] = test.statistic
                entry["p_value"] = test.p_value
            except (InvalidInputError, UndefinedStatisticError) as exc:
                entry["p_value"] = None
                entry["note"] = str(exc)
        comparisons.append(entry)

    report = {
        "dataset": plan.dataset_id,
        "scheme": plan.scheme,
        "seed": seed,
        "folds_used": folds_used,
        "primary_metric": params.eval_metric,
        "training": asdict(params),
        "cells": cells,
        "comparisons": comparisons,
        "reference_full_scale_results": REFERENCE_FULL_SCALE_RESULTS,
        "notes": {
            "aggregation": "metrics are means over folds with standard "
                           "deviations; per-fold values are listed because "
                           "single-split values can differ",
        },
        "_timing": {"seconds": elapsed, "workers": workers},
    }
    if failure is not None:
        report["partial"] = True
        report["failure"] = failure
    return report


def report_to_json(report: dict) -> str:
    """Deterministic JSON: timing metadata is excluded."""
    clean = {k: v for k, v in report.items() if not k.startswith("_")}
    return json.dumps(clean, indent=2, sort_keys=False) + "\n"


def expand_grid_rows(report, architectures, k_values, n_values):
    """One row per (architecture, k, n, fold). The CNN baseline is trained
    once per filter size and repeated across k, mirroring how comparison
    tables lay it out."""
    lookup = {}
    for cell in report["cells"]:
        lookup[(cell["architecture"], cell["tile_size"], cell["filter_size"])] = cell
    rows = []
    for arch in architectures:
        arch = arch.upper()
        for k in k_values:
            for n in n_values:
                cell = lookup.get((arch, 1 if arch == "CNN" else k, n))
                if cell is None:
                    continue
                for fr in cell["folds"]:
                    rows.append(
                        {
                            "architecture": arch,
                            "tile_size": k,
                            "filter_size": n,
                            "fold": fr["fold"],
                            "accuracy": fr["accuracy"],
                            "macro_recall": fr["macro_recall"],
                            "epochs_run": fr["epochs_run"],
                        }
                    )
    return rows


def write_csv(rows, path):
    fields = ["architecture", "tile_size", "filter_size", "fold",
              "accuracy", "macro_recall", "epochs_run"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
