"""Command-line interface.

Subcommands: train, tree-build, index-build, predict, eval,
oracle-check, synth. Options may also come from a ``--config`` file of
``key=value`` lines (keys match the long flag names); explicit flags
win over the file, which wins over built-in defaults.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import errors as E
from .bundle import load_bundle, save_bundle
from .data import dirichlet_dists, gaussian_blobs, read_svmlight, write_svmlight
from .evaluate import RunConfig, emit_report, run_experiment, train_bundle
from .hnsw import HnswParams, build_model_index, load_index, save_index
from .inference import ClassDist, brute_force_bayes, svbop
from .labeltree import build_2means_tree, build_huffman_tree, class_profiles, dump_hierarchy
from .providers import SortedDistProvider
from .utility import parse_utility

CONFIG_ERRORS = (
    E.ConfigConflict,
    E.InvalidParams,
    E.SizeOutOfRange,
    E.ThetaOutOfRange,
    E.UndefinedAtSize,
    E.NotNormalized,
    E.NonPositiveG,
    E.UniverseTooLarge,
)
INTERNAL_ERRORS = (E.NonMonotoneProvider, E.ProviderExhaustedEarly, AssertionError)
DATA_ERRORS = (
    E.DataFormatError,
    E.TreeStructureError,
    E.DimensionMismatch,
    E.EmptyInput,
    E.EmptyCalibration,
    E.UniverseMismatch,
    E.UnnormalizedNode,
    E.MissingNodeModel,
    FileNotFoundError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="setpred")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--format", choices=("json", "csv"), default=None)
    common.add_argument("--config", default=None, help="key=value option file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic data")
    p.add_argument("--kind", choices=("blobs", "dirichlet"), default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--features", type=int, default=None)
    p.add_argument("--examples", type=int, default=None)
    p.add_argument("--sep", type=float, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--index-base", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[common], help="train a model bundle")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("flat", "tree"), default=None)
    p.add_argument("--index-base", type=int, default=None)
    p.add_argument("--C", type=float, default=None)
    p.add_argument("--eps-l", type=float, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--prune-eta", type=float, default=None)
    p.add_argument("--tree", default=None, help="hierarchy file for kind=tree")
    p.add_argument("--tree-method", choices=("kmeans", "huffman"), default=None)
    p.add_argument("--max-leaf", type=int, default=None)
    p.add_argument("--eps-c", type=float, default=None)

    p = sub.add_parser("tree-build", parents=[common], help="build a label hierarchy")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("kmeans", "huffman"), default=None)
    p.add_argument("--max-leaf", type=int, default=None)
    p.add_argument("--eps-c", type=float, default=None)
    p.add_argument("--index-base", type=int, default=None)

    p = sub.add_parser("index-build", parents=[common], help="build a retrieval index")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--ef-construction", type=int, default=None)
    p.add_argument("--augmented", action="store_const", const=True, default=None)

    p = sub.add_parser("predict", parents=[common], help="write per-example sets")
    _add_eval_options(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", parents=[common], help="run one experiment cell")
    _add_eval_options(p)
    p.add_argument("--out", default=None)
    p.add_argument("--per-example", default=None)
    p.add_argument(
        "--no-timings",
        action="store_const",
        const=True,
        default=None,
        help="suppress wall-clock fields so reports are byte-reproducible",
    )

    p = sub.add_parser("oracle-check", parents=[common],
                       help="verify the inference loop against exhaustive search")
    p.add_argument("--data", default=None)
    p.add_argument("--bundle", default=None)
    p.add_argument("--train-data", default=None)
    p.add_argument("--index-base", type=int, default=None)
    p.add_argument("--utility", default=None)
    p.add_argument("--classes", type=int, default=None, help="synthetic mode: class count")
    p.add_argument("--draws", type=int, default=None, help="synthetic mode: distributions")
    p.add_argument("--limit", type=int, default=None)
    return parser


def _add_eval_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", required=True)
    p.add_argument("--utility", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--train-data", default=None)
    p.add_argument("--bundle", default=None)
    p.add_argument("--index", default=None)
    p.add_argument("--index-base", type=int, default=None)
    p.add_argument("--s", type=int, default=None)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--k0", type=int, default=None)
    p.add_argument("--ef-search", type=int, default=None)
    p.add_argument("--tree", default=None)
    p.add_argument("--tree-method", default=None)
    p.add_argument("--max-leaf", type=int, default=None)
    p.add_argument("--eps-c", type=float, default=None)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--ef-construction", type=int, default=None)
    p.add_argument("--C", type=float, default=None)
    p.add_argument("--eps-l", type=float, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--prune-eta", type=float, default=None)
    p.add_argument("--calib-split", type=float, default=None)
    p.add_argument("--val-split", type=float, default=None)
    p.add_argument("--force-full-scan", action="store_const", const=True, default=None)


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise E.ConfigConflict(f"config line {lineno}: expected key=value, got {raw!r}")
        values[key.strip()] = value.strip()
    return values


class _Options:
    """Flag > config file > default resolution for one command."""

    _TRUE = ("1", "true", "yes", "on")

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.cfg = _read_config_file(args.config) if getattr(args, "config", None) else {}

    def get(self, name: str, cast=str, default=None):
        value = getattr(self.args, name.replace("-", "_"), None)
        if value is None and name in self.cfg:
            raw = self.cfg[name]
            value = raw.lower() in self._TRUE if cast is bool else cast(raw)
        return default if value is None else value


def _build_run_config(opt: _Options, args) -> RunConfig:
    return RunConfig(
        method=args.method,
        utility=opt.get("utility"),
        data=args.data,
        train_data=opt.get("train-data"),
        bundle=opt.get("bundle"),
        index_base=opt.get("index-base", int, 1),
        s=opt.get("s", int),
        theta=opt.get("theta", float),
        epsilon=opt.get("epsilon", float),
        k0=opt.get("k0", int, 10),
        ef_search=opt.get("ef-search", int),
        tree=opt.get("tree"),
        tree_method=opt.get("tree-method", str, "kmeans"),
        max_leaf=opt.get("max-leaf", int, 20),
        eps_c=opt.get("eps-c", float, 1e-3),
        m=opt.get("M", int, 10),
        ef_construction=opt.get("ef-construction", int, 50),
        C=opt.get("C", float, 100.0),
        eps_l=opt.get("eps-l", float, 1e-4),
        max_epochs=opt.get("max-epochs", int, 200),
        lr=opt.get("lr", float, 0.5),
        prune_eta=opt.get("prune-eta", float, 0.0),
        seed=opt.get("seed", int, 0),
        threads=opt.get("threads", int, 1),
        calib_split=opt.get("calib-split", float, 0.2),
        val_split=opt.get("val-split", float, 0.2),
        force_full_scan=opt.get("force-full-scan", bool, False),
        measure_time=not opt.get("no-timings", bool, False),
        per_example=opt.get("per-example"),
    )


def _cmd_synth(args) -> int:
    opt = _Options(args)
    kind = opt.get("kind", str, "blobs")
    K = opt.get("classes", int, 10)
    D = opt.get("features", int, 16)
    n = opt.get("examples", int, 1000)
    seed = opt.get("seed", int, 0)
    if kind == "blobs":
        ds, _ = gaussian_blobs(
            K, D, n, seed, sep=opt.get("sep", float, 3.0), noise=opt.get("noise", float, 1.0)
        )
        write_svmlight(ds, args.out, index_base=opt.get("index-base", int, 1))
    else:
        dists = dirichlet_dists(K, n, seed, alpha=opt.get("alpha", float, 1.0))
        with open(args.out, "w", encoding="utf-8") as fh:
            for row in dists:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
    print(f"wrote {args.out}")
    return 0


def _cmd_train(args) -> int:
    opt = _Options(args)
    train = read_svmlight(args.data, opt.get("index-base", int, 1))
    config = RunConfig(
        method="svbop_full",
        utility="precision",
        C=opt.get("C", float, 100.0),
        eps_l=opt.get("eps-l", float, 1e-4),
        max_epochs=opt.get("max-epochs", int, 200),
        lr=opt.get("lr", float, 0.5),
        prune_eta=opt.get("prune-eta", float, 0.0),
        tree=opt.get("tree"),
        tree_method=opt.get("tree-method", str, "kmeans"),
        max_leaf=opt.get("max-leaf", int, 20),
        eps_c=opt.get("eps-c", float, 1e-3),
        seed=opt.get("seed", int, 0),
    )
    kind = opt.get("kind", str, "flat")
    bundle = train_bundle(config, train, kind=kind)
    save_bundle(args.out, bundle)
    print(f"trained {kind} bundle over {train.n_classes} classes -> {args.out}")
    return 0


def _cmd_tree_build(args) -> int:
    opt = _Options(args)
    data = read_svmlight(args.data, opt.get("index-base", int, 1))
    method = opt.get("method", str, "kmeans")
    if method == "huffman":
        tree = build_huffman_tree(np.bincount(data.y, minlength=data.n_classes))
    else:
        tree = build_2means_tree(
            class_profiles(data),
            max_leaf=opt.get("max-leaf", int, 20),
            eps_c=opt.get("eps-c", float, 1e-3),
            seed=opt.get("seed", int, 0),
        )
    Path(args.out).write_text(dump_hierarchy(tree), encoding="utf-8")
    print(f"wrote hierarchy with {tree.n_nodes} nodes -> {args.out}")
    return 0


def _cmd_index_build(args) -> int:
    opt = _Options(args)
    bundle = load_bundle(args.bundle)
    if bundle.model is None:
        raise E.ConfigConflict("index-build needs a flat model bundle")
    params = HnswParams(
        m=opt.get("M", int, 10),
        ef_construction=opt.get("ef-construction", int, 50),
        seed=opt.get("seed", int, 0),
        augmented=opt.get("augmented", bool, False),
    )
    index = build_model_index(bundle.model, params)
    save_index(index, args.out)
    print(f"built index over {index.n_classes} classes, {index.n_layers} layers -> {args.out}")
    return 0


def _cmd_predict(args) -> int:
    opt = _Options(args)
    config = _build_run_config(opt, args)
    config.per_example = args.out
    config.measure_time = False
    _run_with_index(config, opt)
    print(f"wrote per-example sets -> {args.out}")
    return 0


def _run_with_index(config: RunConfig, opt: _Options):
    """Attach a standalone index file, if given, then run."""
    index_path = opt.get("index")
    bundle = None
    if index_path is not None:
        if config.bundle is None:
            raise E.ConfigConflict("--index needs --bundle for the model weights")
        bundle = load_bundle(config.bundle)
        bundle.index = load_index(index_path, bundle.model.weights)
    return run_experiment(config, bundle=bundle)


def _cmd_eval(args) -> int:
    opt = _Options(args)
    config = _build_run_config(opt, args)
    report = _run_with_index(config, opt)
    text = emit_report(report, opt.get("format", str, "json"))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_oracle_check(args) -> int:
    opt = _Options(args)
    utility = opt.get("utility", str, "fbeta:beta=1")
    limit = opt.get("limit", int, 200)
    seed = opt.get("seed", int, 0)
    worst = 0.0
    n_checked = 0
    if args.data is None:
        K = opt.get("classes", int, 12)
        draws = opt.get("draws", int, limit)
        spec = parse_utility(utility, k=K)
        for row in dirichlet_dists(K, draws, seed):
            dist = ClassDist.from_masses(row)
            got = svbop(SortedDistProvider(dist), spec)
            want = brute_force_bayes(dist, spec)
            worst = max(worst, abs(got.utility_value - want.utility_value))
            n_checked += 1
    else:
        if args.bundle:
            bundle = load_bundle(args.bundle)
        elif opt.get("train-data"):
            train = read_svmlight(opt.get("train-data"), opt.get("index-base", int, 1))
            cfg = RunConfig(method="svbop_full", utility=utility, seed=seed)
            bundle = train_bundle(cfg, train)
        else:
            raise E.ConfigConflict("oracle-check on data needs --bundle or --train-data")
        test = read_svmlight(
            args.data,
            opt.get("index-base", int, 1),
            n_features=bundle.model.n_features,
            label_map=bundle.label_map,
        )
        spec = parse_utility(utility, k=bundle.n_classes)
        for i in range(min(limit, test.n_examples)):
            x, _ = test.example(i)
            probs = bundle.model.predict_proba(x)
            dist = ClassDist.from_masses(probs)
            got = svbop(SortedDistProvider(dist), spec)
            want = brute_force_bayes(dist, spec)
            worst = max(worst, abs(got.utility_value - want.utility_value))
            n_checked += 1
    ok = worst <= 1e-12
    print(f"oracle-check: {n_checked} instances, max utility gap {worst:.3e} "
          f"-> {'OK' if ok else 'FAIL'}")
    return 0 if ok else 4


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "tree-build": _cmd_tree_build,
    "index-build": _cmd_index_build,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "oracle-check": _cmd_oracle_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except INTERNAL_ERRORS as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
