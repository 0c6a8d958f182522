"""Command-line entry point.

Subcommands cover the full pipeline: contrastive pre-training,
supervised fine-tuning, embedding export, representation-space
retrieval, augmentation preview, scaffold splitting, the gradient
oracle, and the two ablation sweeps.  All file outputs are CSV; every
run that writes outputs also writes its fully-resolved configuration
next to them, in the same `key = value` format the --config flag reads,
so a run can be reproduced from its own output directory.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric
abort.  See MANUAL.md for every flag and file format.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from .errors import ConfigError, DataError, NumericAbort

__all__ = ["main", "build_parser"]

_THREAD_ENV = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _apply_threads(argv: list[str]) -> None:
    # Best effort: cap worker pools created after this point.  Libraries
    # that size their pools at import time need the variables set in the
    # parent environment instead.
    value: str | None = None
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            value = argv[i + 1]
        elif arg.startswith("--threads="):
            value = arg.split("=", 1)[1]
    if value is None:
        return
    try:
        n = int(value)
    except ValueError:
        return  # the real parser reports this
    if n >= 1:
        for key in _THREAD_ENV:
            os.environ[key] = str(n)


class _Parser(argparse.ArgumentParser):
    """argparse that reports flag problems through the exit-code scheme."""

    def error(self, message: str):  # noqa: D102 - argparse override
        raise ConfigError(message)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def load_config_file(path: str | Path) -> dict[str, str]:
    """Read a `key = value` config file; '#' starts a comment."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key] = value.strip()
    return out


def _config_defaults(sub: argparse.ArgumentParser, path: Path) -> dict:
    raw = load_config_file(path)
    actions = {a.dest: a for a in sub._actions if a.option_strings}
    defaults: dict = {}
    for key, text in raw.items():
        dest = key.replace("-", "_")
        if dest in ("help", "config") or dest not in actions:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        action = actions[dest]
        if isinstance(
            action, (argparse._StoreTrueAction, argparse._StoreFalseAction)
        ):
            value: object = _parse_bool(text)
        elif action.type is not None:
            try:
                value = action.type(text)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}: bad value for {key!r}: {text!r}") from exc
        else:
            value = text
        if action.choices is not None and value not in action.choices:
            raise ConfigError(
                f"{path}: {key!r} must be one of {list(action.choices)}, "
                f"got {text!r}"
            )
        defaults[dest] = value
    return defaults


def _write_resolved_config(out_dir: Path, args: argparse.Namespace) -> None:
    skip = {"func", "command", "config", "threads"}
    lines = []
    for dest in sorted(vars(args)):
        if dest in skip:
            continue
        value = getattr(args, dest)
        if value is None or callable(value):
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{dest} = {value}")
    (out_dir / "config_resolved.txt").write_text(
        "\n".join(lines) + "\n", encoding="utf-8"
    )


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(args: argparse.Namespace, *dests: str) -> None:
    for dest in dests:
        if getattr(args, dest, None) is None:
            flag = "--" + dest.replace("_", "-")
            raise ConfigError(f"{flag} is required")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# Shared flag groups


def _add_augment_flags(sp: argparse.ArgumentParser) -> None:
    from .augment import STRATEGIES, SUBGRAPH

    sp.add_argument(
        "--strategy",
        choices=STRATEGIES,
        default=SUBGRAPH,
        help="augmentation strategy (default: %(default)s)",
    )
    sp.add_argument(
        "--ratio",
        type=float,
        default=0.25,
        help="subgraph removal ratio (default: %(default)s)",
    )
    sp.add_argument(
        "--mask-ratio",
        type=float,
        default=0.25,
        help="atom masking ratio (default: %(default)s)",
    )
    sp.add_argument(
        "--delete-ratio",
        type=float,
        default=0.25,
        help="bond deletion ratio (default: %(default)s)",
    )


def _add_encoder_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument(
        "--backbone",
        choices=("gin", "gcn"),
        default="gin",
        help="message-passing backbone (default: %(default)s)",
    )
    sp.add_argument(
        "--layers", type=int, default=5, help="GNN layers (default: %(default)s)"
    )
    sp.add_argument(
        "--hidden", type=int, default=512, help="node state width (default: %(default)s)"
    )
    sp.add_argument(
        "--latent",
        type=int,
        default=256,
        help="contrastive projection width (default: %(default)s)",
    )


def _augment_spec(args: argparse.Namespace):
    from .augment import AugmentSpec

    return AugmentSpec(
        strategy=args.strategy,
        mask_ratio=args.mask_ratio,
        delete_ratio=args.delete_ratio,
        subgraph_ratio=args.ratio,
        rng_seed=args.seed,
    )


def _encoder_config(args: argparse.Namespace, dropout: float = 0.0):
    from .encoder import EncoderConfig

    return EncoderConfig(
        backbone=args.backbone,
        num_layers=args.layers,
        hidden_dim=args.hidden,
        latent_dim=args.latent,
        dropout=dropout,
    )


def _load_corpus(path: str):
    from .smiles import parse_corpus

    corpus = parse_corpus(path)
    if corpus.failures:
        print(
            f"warning: {len(corpus.failures)} of "
            f"{len(corpus.rows) + len(corpus.failures)} rows failed to parse",
            file=sys.stderr,
        )
    if not corpus.rows:
        raise DataError(f"no parseable molecules in {path}")
    return corpus


# ---------------------------------------------------------------------------
# Subcommands


def cmd_pretrain(args: argparse.Namespace) -> int:
    _require(args, "data")
    from .training import PretrainConfig, pretrain, save_checkpoint

    corpus = _load_corpus(args.data)
    cfg = PretrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        warm_epochs=args.warm_epochs,
        weight_decay=args.weight_decay,
        temperature=args.temperature,
        augment=_augment_spec(args),
        encoder=_encoder_config(args, args.dropout),
        val_fraction=args.val_fraction,
        seed=args.seed,
    )
    out = _out_dir(args)
    result = pretrain(corpus.graphs, cfg, trace_path=out / "loss.csv")
    save_checkpoint(out / "checkpoint.bin", result.checkpoint)
    _write_resolved_config(out, args)
    last = result.history[-1]
    print(
        f"pretrained on {len(corpus.rows)} molecules for {cfg.epochs} epochs; "
        f"final train loss {last.train_loss:.4f}"
    )
    print(f"wrote {out / 'checkpoint.bin'} and {out / 'loss.csv'}")
    return 0


def _metric_rows(result, dataset) -> list[list]:
    rows: list[list] = [["best_epoch", result.best_epoch]]
    rows.append([f"val_{result.metric_name}", f"{result.val_metric:.6f}"])
    for name, value in sorted(result.metrics.items()):
        rows.append([f"test_{name}", f"{value:.6f}"])
    for task, value in zip(dataset.task_names, result.per_task_test):
        rows.append(
            [
                f"test_{result.metric_name}.{task}",
                "undefined" if value is None else f"{value:.6f}",
            ]
        )
    return rows


def cmd_finetune(args: argparse.Namespace) -> int:
    _require(args, "data")
    from .training import (
        FinetuneConfig,
        finetune,
        load_checkpoint,
        model_to_checkpoint,
        save_checkpoint,
    )

    if args.checkpoint and args.no_pretrain:
        raise ConfigError("--checkpoint and --no-pretrain are mutually exclusive")
    from .datasets import load_labeled_csv

    dataset, failures = load_labeled_csv(args.data, args.task)
    if failures:
        print(f"warning: {len(failures)} rows failed to parse", file=sys.stderr)
    if not dataset.records:
        raise DataError(f"no parseable molecules in {args.data}")
    checkpoint = load_checkpoint(args.checkpoint) if args.checkpoint else None
    cfg = FinetuneConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        lr_head=args.lr_head,
        lr_base=args.lr_base,
        dropout=args.dropout,
        n_layer=args.n_layer,
        hidden_dim=args.head_hidden,
        activation=args.activation,
        cosine_decay=args.cosine_decay,
        regression_metric=args.metric,
        seed=args.seed,
        free_values=args.free_values,
    )
    augment = _augment_spec(args) if args.augment else None
    out = _out_dir(args)
    result = finetune(
        dataset,
        cfg,
        checkpoint=checkpoint,
        encoder=None if checkpoint else _encoder_config(args),
        augment=augment,
        trace_path=out / "trace.csv",
    )
    extra: dict = {"task_names": list(dataset.task_names)}
    if result.target_stats is not None:
        extra["target_mean"] = result.target_stats.mean.tolist()
        extra["target_std"] = result.target_stats.std.tolist()
    save_checkpoint(
        out / "model.bin",
        model_to_checkpoint(result.model, epoch=cfg.epochs, extra=extra),
    )
    _write_csv(out / "metrics.csv", ["name", "value"], _metric_rows(result, dataset))
    _write_resolved_config(out, args)
    print(
        f"best epoch {result.best_epoch}: validation {result.metric_name} "
        f"{result.val_metric:.4f}, test {result.metric_name} "
        f"{result.test_metric:.4f}"
    )
    print(f"wrote {out / 'model.bin'}, {out / 'metrics.csv'}, {out / 'trace.csv'}")
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    _require(args, "data", "checkpoint")
    from .encoder import embed_molecules
    from .training import load_checkpoint, model_from_checkpoint

    corpus = _load_corpus(args.data)
    model = model_from_checkpoint(load_checkpoint(args.checkpoint))
    reps = embed_molecules(model, corpus.graphs)
    out = _out_dir(args)
    header = ["index", "smiles"] + [f"h{j}" for j in range(reps.shape[1])]
    rows = [
        [row.index, row.smiles] + [f"{v:.8g}" for v in reps[i]]
        for i, row in enumerate(corpus.rows)
    ]
    _write_csv(out / "embeddings.csv", header, rows)
    _write_resolved_config(out, args)
    print(f"wrote {len(rows)} embeddings of width {reps.shape[1]} to {out / 'embeddings.csv'}")
    return 0


def cmd_retrieve(args: argparse.Namespace) -> int:
    _require(args, "data", "checkpoint", "query")
    from .fingerprints import retrieval_analysis
    from .smiles import parse_smiles
    from .training import load_checkpoint, model_from_checkpoint

    corpus = _load_corpus(args.data)
    if len(corpus.rows) < args.bins:
        raise DataError(
            f"corpus of {len(corpus.rows)} molecules is smaller than "
            f"{args.bins} bins"
        )
    model = model_from_checkpoint(load_checkpoint(args.checkpoint))
    query = parse_smiles(args.query)
    report = retrieval_analysis(
        query,
        corpus.graphs,
        model,
        bins=args.bins,
        samples_per_bin=args.samples_per_bin,
        seed=args.seed,
        top_k=args.top,
    )
    out = _out_dir(args)
    _write_csv(
        out / "bins.csv",
        ["bin", "fp_kind", "mean_dice", "std_dice", "sample_size"],
        [
            [s.bin_index, s.fp_kind, f"{s.mean:.6f}", f"{s.std:.6f}", s.sample_size]
            for s in report.bins
        ],
    )
    _write_csv(
        out / "neighbors.csv",
        ["rank", "corpus_index", "smiles", "cosine_distance", "dice_circular", "dice_path"],
        [
            [
                n.rank,
                n.corpus_index,
                corpus.rows[n.corpus_index].smiles,
                f"{n.cosine_distance:.6f}",
                f"{n.dice_circular:.6f}",
                f"{n.dice_path:.6f}",
            ]
            for n in report.neighbors
        ],
    )
    _write_resolved_config(out, args)
    near = report.neighbors[0]
    print(
        f"ranked {report.corpus_size} molecules into {report.bin_count} bins; "
        f"nearest: index {near.corpus_index} "
        f"({corpus.rows[near.corpus_index].smiles}), "
        f"distance {near.cosine_distance:.4f}"
    )
    print(f"wrote {out / 'bins.csv'} and {out / 'neighbors.csv'}")
    return 0


def cmd_augment(args: argparse.Namespace) -> int:
    from .augment import augment_view, derive_rng
    from .graph import format_graph
    from .smiles import parse_smiles

    if (args.smiles is None) == (args.data is None):
        raise ConfigError("exactly one of --smiles or --data is required")
    if args.smiles is not None:
        graph = parse_smiles(args.smiles)
        index = 0
        label = args.smiles
    else:
        corpus = _load_corpus(args.data)
        if not 0 <= args.index < len(corpus.rows):
            raise DataError(
                f"--index {args.index} outside corpus of {len(corpus.rows)}"
            )
        row = corpus.rows[args.index]
        graph = row.graph
        index = row.index
        label = row.smiles
    spec = _augment_spec(args)
    rng = derive_rng(args.seed, 0, 0, index)
    blocks = [f"molecule {label}", format_graph(graph)]
    for k in range(args.views):
        view = augment_view(graph, spec, rng, index)
        masked = ",".join(map(str, sorted(view.masked_nodes))) or "-"
        deleted = (
            ";".join(f"{u}-{v}" for u, v in sorted(view.deleted_edges)) or "-"
        )
        blocks.append(
            f"view {k} strategy {spec.strategy} masked {masked} deleted {deleted}"
        )
        blocks.append(format_graph(view.graph))
    text = "\n".join(blocks) + "\n"
    print(text, end="")
    if args.out is not None:
        out = _out_dir(args)
        (out / "views.txt").write_text(text, encoding="utf-8")
        _write_resolved_config(out, args)
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    _require(args, "data")
    from .datasets import Split, scaffold_split

    try:
        parts = tuple(float(p) for p in args.fractions.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --fractions {args.fractions!r}") from exc
    if len(parts) != 3:
        raise ConfigError("--fractions needs three comma-separated numbers")
    corpus = _load_corpus(args.data)
    assignment = scaffold_split(corpus.graphs, parts)
    names = {Split.TRAIN: "train", Split.VALID: "valid", Split.TEST: "test"}
    out = _out_dir(args)
    _write_csv(
        out / "split.csv",
        ["index", "smiles", "split"],
        [
            [row.index, row.smiles, names[assignment.assignment[i]]]
            for i, row in enumerate(corpus.rows)
        ],
    )
    _write_resolved_config(out, args)
    counts = {name: 0 for name in names.values()}
    for part in assignment.assignment:
        counts[names[part]] += 1
    print(
        f"split {len(corpus.rows)} molecules: "
        + ", ".join(f"{k} {v}" for k, v in counts.items())
    )
    print(f"wrote {out / 'split.csv'}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    from .autodiff import gradcheck_report

    report = gradcheck_report(seed=args.seed, eps=args.eps)
    threshold = args.threshold
    failures = []
    for op in sorted(report):
        err = report[op]
        status = "ok" if err < threshold else "FAIL"
        print(f"{op:<28s} {err:.3e}  {status}")
        if err >= threshold:
            failures.append(op)
    if args.out is not None:
        out = _out_dir(args)
        _write_csv(
            out / "gradcheck.csv",
            ["op", "max_rel_error"],
            [[op, f"{report[op]:.6e}"] for op in sorted(report)],
        )
        _write_resolved_config(out, args)
    if failures:
        raise NumericAbort(
            f"gradient check failed for {len(failures)} op(s): "
            + ", ".join(failures)
        )
    print(f"all {len(report)} ops within {threshold:g}")
    return 0


def _ablate_once(args, dataset, spec, temperature, seed):
    from .training import FinetuneConfig, PretrainConfig, finetune, pretrain

    warm = (
        args.warm_epochs
        if args.warm_epochs is not None
        else min(10, args.pretrain_epochs)
    )
    pre_cfg = PretrainConfig(
        epochs=args.pretrain_epochs,
        batch_size=args.batch,
        warm_epochs=warm,
        temperature=temperature,
        augment=spec,
        encoder=_encoder_config(args),
        seed=seed,
    )
    graphs = [r.graph for r in dataset.records]
    pre = pretrain(graphs, pre_cfg)
    ft_cfg = FinetuneConfig(
        epochs=args.finetune_epochs,
        batch_size=args.finetune_batch,
        lr_head=args.lr_head,
        lr_base=args.lr_base,
        seed=seed,
        free_values=args.free_values,
    )
    result = finetune(dataset, ft_cfg, checkpoint=pre.checkpoint)
    return pre.history[-1].train_loss, result


def cmd_ablate_aug(args: argparse.Namespace) -> int:
    _require(args, "data")
    from .augment import STRATEGIES, AugmentSpec
    from .datasets import load_labeled_csv

    dataset, _ = load_labeled_csv(args.data, args.task)
    if not dataset.records:
        raise DataError(f"no parseable molecules in {args.data}")
    rows = []
    for strategy in STRATEGIES:
        spec = AugmentSpec(
            strategy=strategy,
            mask_ratio=args.mask_ratio,
            delete_ratio=args.delete_ratio,
            subgraph_ratio=args.ratio,
            rng_seed=args.seed,
        )
        loss, result = _ablate_once(args, dataset, spec, args.temperature, args.seed)
        rows.append(
            [
                strategy,
                f"{loss:.6f}",
                result.best_epoch,
                f"{result.val_metric:.6f}",
                f"{result.test_metric:.6f}",
            ]
        )
        print(
            f"{strategy:<16s} pretrain loss {loss:.4f}  "
            f"test {result.metric_name} {result.test_metric:.4f}"
        )
    out = _out_dir(args)
    _write_csv(
        out / "ablate_aug.csv",
        ["strategy", "pretrain_loss", "best_epoch", "val_metric", "test_metric"],
        rows,
    )
    _write_resolved_config(out, args)
    print(f"wrote {out / 'ablate_aug.csv'}")
    return 0


_TEMPERATURES = (0.05, 0.1, 0.5)


def cmd_ablate_temp(args: argparse.Namespace) -> int:
    _require(args, "data")
    from .datasets import load_labeled_csv

    dataset, _ = load_labeled_csv(args.data, args.task)
    if not dataset.records:
        raise DataError(f"no parseable molecules in {args.data}")
    spec = _augment_spec(args)
    rows = []
    for tau in _TEMPERATURES:
        loss, result = _ablate_once(args, dataset, spec, tau, args.seed)
        rows.append(
            [
                tau,
                f"{loss:.6f}",
                result.best_epoch,
                f"{result.val_metric:.6f}",
                f"{result.test_metric:.6f}",
            ]
        )
        print(
            f"tau {tau:<5g} pretrain loss {loss:.4f}  "
            f"test {result.metric_name} {result.test_metric:.4f}"
        )
    out = _out_dir(args)
    _write_csv(
        out / "ablate_temp.csv",
        ["temperature", "pretrain_loss", "best_epoch", "val_metric", "test_metric"],
        rows,
    )
    _write_resolved_config(out, args)
    print(f"wrote {out / 'ablate_temp.csv'}")
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def _common(sp: argparse.ArgumentParser, out_default: str | None) -> None:
    sp.add_argument("--config", help="key = value config file; flags override it")
    sp.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")
    sp.add_argument(
        "--threads",
        type=int,
        default=None,
        help="cap numeric worker threads for this process",
    )
    if out_default is not None:
        sp.add_argument(
            "--out", default=out_default, help="output directory (default: %(default)s)"
        )


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(
        prog="molcontrast",
        description="Contrastive molecular representation learning toolkit.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    index: dict[str, argparse.ArgumentParser] = {}

    def sub(name: str, help_text: str, out_default: str | None):
        sp = subs.add_parser(name, help=help_text)
        _common(sp, out_default)
        index[name] = sp
        return sp

    sp = sub("pretrain", "contrastive pre-training on an unlabeled corpus", "pretrain_run")
    sp.add_argument("--data", help="CSV with a 'smiles' column")
    sp.add_argument("--epochs", type=int, default=50, help="(default: %(default)s)")
    sp.add_argument("--batch", type=int, default=512, help="(default: %(default)s)")
    sp.add_argument("--lr", type=float, default=5e-4, help="(default: %(default)s)")
    sp.add_argument("--warm-epochs", type=int, default=10, help="(default: %(default)s)")
    sp.add_argument("--weight-decay", type=float, default=1e-5, help="(default: %(default)s)")
    sp.add_argument("--temperature", type=float, default=0.1, help="(default: %(default)s)")
    sp.add_argument("--val-fraction", type=float, default=0.05, help="(default: %(default)s)")
    sp.add_argument("--dropout", type=float, default=0.0, help="encoder dropout (default: %(default)s)")
    _add_augment_flags(sp)
    _add_encoder_flags(sp)
    sp.set_defaults(func=cmd_pretrain)

    sp = sub("finetune", "supervised training on a labeled, scaffold-split dataset", "finetune_run")
    sp.add_argument("--data", help="CSV with 'smiles' plus one column per task")
    sp.add_argument(
        "--task",
        choices=("classification", "regression"),
        default="classification",
        help="(default: %(default)s)",
    )
    sp.add_argument("--checkpoint", help="pre-trained checkpoint to start from")
    sp.add_argument(
        "--no-pretrain",
        action="store_true",
        help="random initialization (explicit; default when no --checkpoint)",
    )
    sp.add_argument(
        "--augment",
        action="store_true",
        help="apply graph augmentation to training inputs",
    )
    sp.add_argument("--epochs", type=int, default=100, help="(default: %(default)s)")
    sp.add_argument("--batch", type=int, default=32, help="(default: %(default)s)")
    sp.add_argument("--lr-head", type=float, default=5e-4, help="(default: %(default)s)")
    sp.add_argument("--lr-base", type=float, default=1e-4, help="(default: %(default)s)")
    sp.add_argument("--dropout", type=float, default=0.0, help="head dropout (default: %(default)s)")
    sp.add_argument("--n-layer", type=int, default=1, help="head hidden layers (default: %(default)s)")
    sp.add_argument("--head-hidden", type=int, default=256, help="(default: %(default)s)")
    sp.add_argument(
        "--activation",
        choices=("relu", "softplus"),
        default="relu",
        help="(default: %(default)s)",
    )
    sp.add_argument("--cosine-decay", action="store_true", help="cosine-decay both learning rates")
    sp.add_argument(
        "--metric",
        choices=("rmse", "mae"),
        default="rmse",
        help="regression model-selection metric (default: %(default)s)",
    )
    sp.add_argument(
        "--free-values",
        action="store_true",
        help="allow hyper-parameters outside the documented search grid",
    )
    _add_augment_flags(sp)
    _add_encoder_flags(sp)
    sp.set_defaults(func=cmd_finetune)

    sp = sub("embed", "write per-molecule representations as CSV", "embed_run")
    sp.add_argument("--data", help="CSV with a 'smiles' column")
    sp.add_argument("--checkpoint", help="trained checkpoint")
    sp.set_defaults(func=cmd_embed)

    sp = sub("retrieve", "rank a corpus around a query molecule", "retrieve_run")
    sp.add_argument("--data", help="CSV with a 'smiles' column")
    sp.add_argument("--checkpoint", help="trained checkpoint")
    sp.add_argument("--query", help="query molecule as SMILES")
    sp.add_argument("--bins", type=int, default=20, help="(default: %(default)s)")
    sp.add_argument(
        "--samples-per-bin",
        type=int,
        default=None,
        help="fingerprint sample size per bin (default: whole bin)",
    )
    sp.add_argument("--top", type=int, default=9, help="neighbors to report (default: %(default)s)")
    sp.set_defaults(func=cmd_retrieve)

    sp = sub("augment", "preview augmented views of one molecule", None)
    sp.add_argument("--smiles", help="molecule as SMILES text")
    sp.add_argument("--data", help="CSV with a 'smiles' column")
    sp.add_argument("--index", type=int, default=0, help="row in --data (default: %(default)s)")
    sp.add_argument("--views", type=int, default=2, help="views to draw (default: %(default)s)")
    sp.add_argument("--out", default=None, help="optional output directory")
    _add_augment_flags(sp)
    sp.set_defaults(func=cmd_augment)

    sp = sub("split", "scaffold split a dataset and write assignments", "split_run")
    sp.add_argument("--data", help="CSV with a 'smiles' column")
    sp.add_argument(
        "--fractions",
        default="0.8,0.1,0.1",
        help="train,valid,test fractions (default: %(default)s)",
    )
    sp.set_defaults(func=cmd_split)

    sp = sub("gradcheck", "run the finite-difference gradient oracle", None)
    sp.add_argument("--eps", type=float, default=1e-4, help="FD step (default: %(default)s)")
    sp.add_argument(
        "--threshold",
        type=float,
        default=1e-4,
        help="max relative error allowed (default: %(default)s)",
    )
    sp.add_argument("--out", default=None, help="optional output directory")
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub("ablate_aug", "compare augmentation strategies end to end", "ablate_aug_run")
    sp.add_argument("--data", help="labeled CSV (pre-training uses the same molecules)")
    sp.add_argument(
        "--task",
        choices=("classification", "regression"),
        default="classification",
        help="(default: %(default)s)",
    )
    sp.add_argument("--pretrain-epochs", type=int, default=20, help="(default: %(default)s)")
    sp.add_argument(
        "--warm-epochs",
        type=int,
        default=None,
        help="flat-rate epochs before decay (default: min(10, pretrain epochs))",
    )
    sp.add_argument("--finetune-epochs", type=int, default=30, help="(default: %(default)s)")
    sp.add_argument("--batch", type=int, default=64, help="pre-training batch (default: %(default)s)")
    sp.add_argument("--finetune-batch", type=int, default=32, help="(default: %(default)s)")
    sp.add_argument("--temperature", type=float, default=0.1, help="(default: %(default)s)")
    sp.add_argument("--lr-head", type=float, default=5e-4, help="(default: %(default)s)")
    sp.add_argument("--lr-base", type=float, default=1e-4, help="(default: %(default)s)")
    sp.add_argument(
        "--free-values",
        action="store_true",
        help="allow fine-tune values outside the search grid",
    )
    _add_augment_flags(sp)
    _add_encoder_flags(sp)
    sp.set_defaults(func=cmd_ablate_aug)

    sp = sub("ablate_temp", "sweep the contrastive temperature", "ablate_temp_run")
    sp.add_argument("--data", help="labeled CSV (pre-training uses the same molecules)")
    sp.add_argument(
        "--task",
        choices=("classification", "regression"),
        default="classification",
        help="(default: %(default)s)",
    )
    sp.add_argument("--pretrain-epochs", type=int, default=20, help="(default: %(default)s)")
    sp.add_argument(
        "--warm-epochs",
        type=int,
        default=None,
        help="flat-rate epochs before decay (default: min(10, pretrain epochs))",
    )
    sp.add_argument("--finetune-epochs", type=int, default=30, help="(default: %(default)s)")
    sp.add_argument("--batch", type=int, default=64, help="pre-training batch (default: %(default)s)")
    sp.add_argument("--finetune-batch", type=int, default=32, help="(default: %(default)s)")
    sp.add_argument("--lr-head", type=float, default=5e-4, help="(default: %(default)s)")
    sp.add_argument("--lr-base", type=float, default=1e-4, help="(default: %(default)s)")
    sp.add_argument(
        "--free-values",
        action="store_true",
        help="allow fine-tune values outside the search grid",
    )
    _add_augment_flags(sp)
    _add_encoder_flags(sp)
    sp.set_defaults(func=cmd_ablate_temp)

    return parser, index


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _apply_threads(argv)
    parser, index = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            sub = index[args.command]
            sub.set_defaults(**_config_defaults(sub, Path(args.config)))
            args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
