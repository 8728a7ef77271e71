"""Command-line pipeline: embed, cluster, prepare, train, evaluate, report.

Configuration is layered: dataclass defaults, then a JSON config file
(--config), then explicit command-line flags. Exit codes: 0 success,
1 runtime failure, 2 usage or configuration error. The parsed
configuration is echoed into every JSON artifact for provenance;
wall-clock timings live only in the *run_meta / .run.json metadata files
so repeated runs with one seed produce byte-identical result files.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__, kernels
from .datasets import detect_format, load_dataset
from .errors import ConfigError, InvalidInputError, TiledSentError
from .experiments import (
    ExperimentRunError,
    TrainingParams,
    expand_grid_rows,
    make_cv_plan,
    report_to_json,
    run_experiment,
    worker_count,
    write_csv,
)
from .gmm import (
    cluster_vocabulary,
    em_fit,
    load_assignment,
    save_assignment,
    save_mixture,
)
from .models import ModelConfig, load_checkpoint, save_checkpoint
from .text import Vocabulary, encode, suggest_max_len, tokenize
from .tiling import cluster_inputs
from .word2vec import concat_embeddings, load_embeddings, save_embeddings, train_word2vec

logger = logging.getLogger(__name__)

DEFAULT_ARCHITECTURES = ["cnn", "tcnn", "shtcnn", "htcnn"]


@dataclass
class RunConfig:
    command: str = ""
    dataset: str = ""
    format: str = ""                 # imdb | semeval | synthetic | "" = auto
    out: str = "runs"
    seed: int = 0
    architectures: list = field(default_factory=lambda: list(DEFAULT_ARCHITECTURES))
    n_values: list = field(default_factory=lambda: [2, 3, 4])
    k_values: list = field(default_factory=lambda: [2, 3])
    embeddings: str = ""             # default: <out>/embeddings.txt
    dim_cbow: int = 100
    dim_sg: int = 100
    window: int = 5
    negatives: int = 5
    embed_epochs: int = 5
    min_count: int = 2
    max_len: int = 0                 # 0 = 95th-percentile corpus length
    scheme: str = ""                 # "" = by dataset format
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    patience: int = 3
    max_folds: int = 0
    feature_maps: int = 100
    hidden_size: int = 64
    dropout_pooled: float = 0.3
    dropout_hidden: float = 0.5
    freeze_embeddings: str = "auto"  # auto: frozen for semeval, trainable otherwise
    metric: str = ""                 # "" = macro_recall for semeval, else accuracy
    gmm_iters: int = 100
    gmm_tol: float = 1e-6
    checkpoint: str = ""
    assignment: str = ""
    sentence: str = ""
    filter_size: int = 2             # n used by `prepare`

    def embeddings_path(self) -> str:
        return self.embeddings or os.path.join(self.out, "embeddings.txt")


def _parse_int_list(text):
    try:
        return [int(v) for v in str(text).replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}")


def _parse_str_list(text):
    return [v for v in str(text).replace(" ", "").lower().split(",") if v != ""]


def load_run_config(args) -> RunConfig:
    """Defaults < config file < explicit flags."""
    config = RunConfig()
    if getattr(args, "config", None):
        if not os.path.isfile(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                file_values = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}") from None
        known = {f.name for f in fields(RunConfig)}
        for key, value in file_values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            setattr(config, key, value)
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            setattr(config, f.name, flag)
    config.command = args.cmd
    if isinstance(config.architectures, str):
        config.architectures = _parse_str_list(config.architectures)
    if isinstance(config.n_values, str):
        config.n_values = _parse_int_list(config.n_values)
    if isinstance(config.k_values, str):
        config.k_values = _parse_int_list(config.k_values)
    return config


def _require_file(path, hint) -> str:
    if not os.path.isfile(path):
        raise ConfigError(f"missing file: {path}; {hint}")
    return path


def _ensure_out(config):
    os.makedirs(config.out, exist_ok=True)
    os.makedirs(os.path.join(config.out, "checkpoints"), exist_ok=True)


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _write_sidecar(config, name, extra, seconds):
    # the one place wall-clock data is recorded
    payload = {
        "run_config": asdict(config),
        "kernel_backend": kernels.BACKEND,
        "version": __version__,
        **extra,
        "timing": {"seconds": seconds, "workers": worker_count()},
    }
    _write_json(os.path.join(config.out, name), payload)


def _load_corpus(config):
    path = config.dataset
    if not path:
        raise ConfigError("--dataset is required")
    if not os.path.exists(path):
        raise ConfigError(f"dataset path does not exist: {path}")
    try:
        fmt = config.format or detect_format(path)
        return load_dataset(path, fmt), fmt
    except InvalidInputError as exc:
        # wrong format tag or directory shape: a configuration problem
        raise ConfigError(str(exc)) from None


# -- commands -------------------------------------------------------------------


def cmd_embed(config: RunConfig) -> int:
    started = time.time()
    _ensure_out(config)
    dataset, fmt = _load_corpus(config)
    corpus = [tokenize(t) for t in dataset.texts]
    vocab = Vocabulary.from_corpus(corpus, min_frequency=config.min_count)
    if len(vocab) == 0:
        raise ConfigError("vocabulary is empty; lower --min-count")
    cbow = train_word2vec(
        corpus, "cbow", dim=config.dim_cbow, window=config.window,
        negatives=config.negatives, epochs=config.embed_epochs,
        seed=np.random.SeedSequence([config.seed, 0]), vocab=vocab,
    )
    sg = train_word2vec(
        corpus, "sg", dim=config.dim_sg, window=config.window,
        negatives=config.negatives, epochs=config.embed_epochs,
        seed=np.random.SeedSequence([config.seed, 1]), vocab=vocab,
    )
    combined = concat_embeddings(cbow, sg)
    out_path = config.embeddings_path()
    save_embeddings(combined, out_path)
    _write_sidecar(config, "embed.run.json",
                   {"vocabulary_size": len(vocab), "dimension": combined.dim},
                   time.time() - started)
    print(f"wrote {out_path} ({len(vocab)} words, dim {combined.dim}, "
          f"format {fmt})")
    return 0


def cmd_cluster(config: RunConfig) -> int:
    started = time.time()
    _ensure_out(config)
    emb_path = _require_file(config.embeddings_path(),
                             "produce it with `tiledsent embed`")
    embeddings = load_embeddings(emb_path)
    written = []
    for i, k in enumerate(config.k_values):
        if k > len(embeddings.vocab):
            raise ConfigError(
                f"k={k} exceeds the vocabulary size {len(embeddings.vocab)}"
            )
        mixture = em_fit(
            embeddings.vectors[1:], k, max_iters=config.gmm_iters,
            tol=config.gmm_tol, seed=np.random.SeedSequence([config.seed, i]),
        )
        assignment = cluster_vocabulary(mixture, embeddings)
        model_path = os.path.join(config.out, f"gmm_k{k}.txt")
        assign_path = os.path.join(config.out, f"clusters_k{k}.tsv")
        save_mixture(mixture, model_path)
        save_assignment(assignment, embeddings.vocab, assign_path)
        written.extend([model_path, assign_path])
    _write_sidecar(config, "cluster.run.json", {"files": written},
                   time.time() - started)
    print("wrote " + ", ".join(written))
    return 0


def cmd_prepare(config: RunConfig) -> int:
    if not config.assignment:
        raise ConfigError("--assignment (a clusters_k*.tsv file) is required")
    _require_file(config.assignment, "produce it with `tiledsent cluster`")
    if not config.sentence:
        raise ConfigError("--sentence is required")
    mapping = load_assignment(config.assignment)
    vocab = Vocabulary.from_tokens(mapping.keys())
    k = max(mapping.values()) if mapping else 0
    index_map = np.zeros(len(vocab) + 1, dtype=np.intp)
    for token, cid in mapping.items():
        index_map[vocab.index(token)] = cid

    tokens = tokenize(config.sentence)
    if not tokens:
        raise ConfigError("the sentence contains no tokens")
    if all(vocab.index(t) == 0 for t in tokens):
        logger.warning("no sentence token appears in the assignment; "
                       "previews are all PAD")
    seq = encode(tokens, vocab, max_len=len(tokens))
    masked = cluster_inputs(seq, index_map, k, config.filter_size, expand=False)
    expanded = cluster_inputs(seq, index_map, k, config.filter_size, expand=True)
    print("shtcnn inputs:")
    for ms in masked:
        print(ms.to_text(vocab))
    print("htcnn inputs:")
    for ms in expanded:
        print(ms.to_text(vocab))
    return 0


def _resolve_training(config, fmt, dataset):
    scheme = config.scheme or ("semeval-9fold" if fmt == "semeval" else "imdb-4fold")
    metric = config.metric or ("macro_recall" if fmt == "semeval" else "accuracy")
    if config.freeze_embeddings == "auto":
        train_emb = fmt != "semeval"
    else:
        train_emb = config.freeze_embeddings not in ("true", "1", "yes", True)
    return scheme, metric, train_emb


def _build_sweep(config, num_classes, max_len, train_emb):
    sweep = []
    for arch in config.architectures:
        if arch not in DEFAULT_ARCHITECTURES:
            raise ConfigError(f"unknown architecture {arch!r}")
        k_list = [1] if arch == "cnn" else config.k_values
        for n in config.n_values:
            for k in k_list:
                sweep.append(ModelConfig(
                    architecture=arch,
                    filter_size=n,
                    tile_size=k,
                    feature_maps=config.feature_maps,
                    hidden_size=config.hidden_size,
                    dropout_pooled=config.dropout_pooled,
                    dropout_hidden=config.dropout_hidden,
                    train_embeddings=train_emb,
                    num_classes=num_classes,
                    max_len=max_len,
                    hidden_activation="relu" if num_classes > 2 else "tanh",
                ))
    return sweep


def _load_assignment_maps(config, vocab):
    """Cluster files for every k the sweep needs, as index -> cluster arrays."""
    needed = sorted(set(config.k_values)) if any(
        a in ("shtcnn", "htcnn") for a in config.architectures
    ) else []
    maps = {}
    for k in needed:
        path = os.path.join(config.out, f"clusters_k{k}.tsv")
        _require_file(path, f"produce it with `tiledsent cluster --k {k}`")
        mapping = load_assignment(path)
        arr = np.zeros(len(vocab) + 1, dtype=np.intp)
        for token, cid in mapping.items():
            idx = vocab.index(token)
            if idx != 0:
                arr[idx] = cid
        maps[k] = arr
    return maps


def cmd_train(config: RunConfig) -> int:
    started = time.time()
    _ensure_out(config)
    dataset, fmt = _load_corpus(config)
    emb_path = _require_file(config.embeddings_path(),
                             "produce it with `tiledsent embed`")
    embeddings = load_embeddings(emb_path)
    scheme, metric, train_emb = _resolve_training(config, fmt, dataset)
    embeddings.trainable = train_emb

    corpus = [tokenize(t) for t in dataset.texts]
    max_len = config.max_len or suggest_max_len(corpus)
    max_len = max(max_len, max(config.n_values))
    sequences = np.zeros((len(corpus), max_len), dtype=np.intp)
    for i, toks in enumerate(corpus):
        sequences[i] = encode(toks, embeddings.vocab, max_len).indices

    sweep = _build_sweep(config, dataset.num_classes, max_len, train_emb)
    assignments = _load_assignment_maps(config, embeddings.vocab)
    plan = make_cv_plan(dataset.labels, scheme, seed=config.seed,
                        dataset_id=dataset.name)
    params = TrainingParams(
        epochs=config.epochs, batch_size=config.batch_size,
        learning_rate=config.learning_rate, optimizer=config.optimizer,
        patience=config.patience, eval_metric=metric,
        max_folds=config.max_folds,
    )

    def checkpoint_hook(model_config, fold_id, model):
        name = (f"{model_config.architecture}_k{model_config.tile_size}"
                f"_n{model_config.filter_size}_fold{fold_id}.npz")
        save_checkpoint(model, embeddings.vocab,
                        os.path.join(config.out, "checkpoints", name))

    try:
        report = run_experiment(
            sweep, plan, sequences, dataset.labels, embeddings,
            assignments=assignments, params=params, seed=config.seed,
            checkpoint_hook=checkpoint_hook,
        )
    except ExperimentRunError as exc:
        if exc.partial_report is not None:
            exc.partial_report["run_config"] = asdict(config)
            partial_path = os.path.join(config.out, "metrics.partial.json")
            with open(partial_path, "w", encoding="utf-8") as fh:
                fh.write(report_to_json(exc.partial_report))
            print(f"run failed; partial results kept in {partial_path}",
                  file=sys.stderr)
        raise
    report["run_config"] = asdict(config)
    metrics_path = os.path.join(config.out, "metrics.json")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        fh.write(report_to_json(report))
    _write_sidecar(config, "run_meta.json",
                   {"metrics_file": "metrics.json"},
                   time.time() - started)
    print(f"wrote {metrics_path} "
          f"({len(sweep)} configurations x {report['folds_used']} folds)")
    return 0


def cmd_evaluate(config: RunConfig) -> int:
    from .experiments import evaluate  # local import keeps startup light

    if not config.checkpoint:
        raise ConfigError("--checkpoint is required")
    _require_file(config.checkpoint, "produce one with `tiledsent train`")
    dataset, fmt = _load_corpus(config)
    model, vocab = load_checkpoint(config.checkpoint)
    if dataset.num_classes != model.config.num_classes:
        raise ConfigError(
            f"checkpoint expects {model.config.num_classes} classes but the "
            f"dataset has {dataset.num_classes}"
        )
    max_len = model.config.max_len
    sequences = np.zeros((len(dataset), max_len), dtype=np.intp)
    for i, text in enumerate(dataset.texts):
        sequences[i] = encode(tokenize(text), vocab, max_len).indices
    result = evaluate(model, sequences, dataset.labels)
    payload = {
        "checkpoint": config.checkpoint,
        "dataset": dataset.name,
        "format": fmt,
        "items": len(dataset),
        "accuracy": result.accuracy,
        "macro_recall": result.macro_recall,
        "per_class_recall": result.per_class_recall,
        "run_config": asdict(config),
    }
    print(json.dumps(payload, indent=2))
    if config.out:
        _ensure_out(config)
        _write_json(os.path.join(config.out, "evaluation.json"), payload)
    return 0


def cmd_report(config: RunConfig) -> int:
    metrics_path = os.path.join(config.out, "metrics.json")
    _require_file(metrics_path, "produce it with `tiledsent train`")
    with open(metrics_path, "r", encoding="utf-8") as fh:
        report = json.load(fh)
    run_config = report.get("run_config", {})
    archs = run_config.get("architectures", DEFAULT_ARCHITECTURES)
    ks = run_config.get("k_values", [2, 3])
    ns = run_config.get("n_values", [2, 3, 4])
    rows = expand_grid_rows(report, archs, ks, ns)
    report_path = os.path.join(config.out, "report.json")
    csv_path = os.path.join(config.out, "report.csv")
    report["run_config"] = asdict(config) | {"source_run_config": run_config}
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report, indent=2) + "\n")
    write_csv(rows, csv_path)
    print(f"wrote {report_path} and {csv_path} ({len(rows)} rows)")
    return 0


# -- argument parsing -------------------------------------------------------------


def _add_shared(p):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--dataset", default=None, help="dataset path")
    p.add_argument("--format", default=None,
                   choices=["imdb", "semeval", "synthetic"])
    p.add_argument("--arch", dest="architectures", default=None,
                   help="comma-separated architecture list")
    p.add_argument("--n", dest="n_values", default=None,
                   help="comma-separated filter sizes")
    p.add_argument("--k", dest="k_values", default=None,
                   help="comma-separated tile sizes / cluster counts")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiledsent",
        description="Sentiment classification with tiled and cluster-masked "
                    "convolutions",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("embed", help="train CBOW+SG embeddings on the corpus")
    _add_shared(p)
    p.add_argument("--dim-cbow", dest="dim_cbow", type=int, default=None)
    p.add_argument("--dim-sg", dest="dim_sg", type=int, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--negatives", type=int, default=None)
    p.add_argument("--embed-epochs", dest="embed_epochs", type=int, default=None)
    p.add_argument("--min-count", dest="min_count", type=int, default=None)
    p.add_argument("--embeddings", default=None, help="output embedding file")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("cluster", help="fit word-cluster mixtures per k")
    _add_shared(p)
    p.add_argument("--embeddings", default=None, help="embedding file to cluster")
    p.add_argument("--gmm-iters", dest="gmm_iters", type=int, default=None)
    p.add_argument("--gmm-tol", dest="gmm_tol", type=float, default=None)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("prepare",
                       help="preview masked cluster inputs for a sentence")
    _add_shared(p)
    p.add_argument("--assignment", default=None, help="clusters_k*.tsv file")
    p.add_argument("--sentence", default=None)
    p.add_argument("--filter-size", dest="filter_size", type=int, default=None)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="run the cross-validated sweep")
    _add_shared(p)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--scheme", default=None, choices=list(SCHEME_CHOICES))
    p.add_argument("--metric", default=None, choices=["accuracy", "macro_recall"])
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", dest="learning_rate", type=float, default=None)
    p.add_argument("--optimizer", default=None, choices=["adam", "sgd"])
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--max-folds", dest="max_folds", type=int, default=None)
    p.add_argument("--max-len", dest="max_len", type=int, default=None)
    p.add_argument("--feature-maps", dest="feature_maps", type=int, default=None)
    p.add_argument("--hidden", dest="hidden_size", type=int, default=None)
    p.add_argument("--dropout-pooled", dest="dropout_pooled", type=float,
                   default=None)
    p.add_argument("--dropout-hidden", dest="dropout_hidden", type=float,
                   default=None)
    p.add_argument("--freeze-embeddings", dest="freeze_embeddings", default=None,
                   choices=["auto", "true", "false"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset")
    _add_shared(p)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="emit report.json and report.csv")
    _add_shared(p)
    p.set_defaults(func=cmd_report)
    return parser


SCHEME_CHOICES = ("imdb-4fold", "semeval-9fold")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_run_config(args)
        return args.func(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TiledSentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
