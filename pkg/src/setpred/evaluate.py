"""Experiment orchestration: configs, metrics, reports.

run_experiment drives one (method, utility, dataset) cell: obtain a
model (train or load a bundle), predict a set for every test example,
and aggregate realized utility, recall, set size, top-1 accuracy and
timings. All set-producing methods consume the same trained model, so
differences in the report come from the inference rule alone.

Reports are emitted as versioned JSON (lossless round-trip) or as a
fixed 8-column CSV where the utility-like columns are formatted with
4 decimals for table display.
"""

from __future__ import annotations

import json
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .bundle import Bundle, load_bundle
from .conformal import icp_calibrate, icp_predict_batch
from .data import Dataset, SparseVector, read_svmlight
from .errors import ConfigConflict
from .hnsw import HnswParams, HsgProvider, build_model_index
from .inference import (
    ClassDist,
    brute_force_bayes,
    svbop,
    threshold_predict,
    top_s_predict,
)
from .labeltree import (
    TreeProvider,
    build_2means_tree,
    build_huffman_tree,
    class_profiles,
    load_hierarchy,
)
from .linear import LinearModel, prune_weights, softmax, train_flat, train_tree_nodes
from .providers import FullProvider
from .utility import UtilitySpec, eval_u, parse_utility

METHODS = ("svbop_full", "svbop_hsg", "svbop_hf", "top_s", "threshold", "icp", "oracle")

CSV_COLUMNS = (
    "method",
    "utility",
    "mean_utility",
    "mean_recall",
    "mean_set_size",
    "top1_acc",
    "t_train_s",
    "t_test_ms",
)

REPORT_SCHEMA = 1


@dataclass
class RunConfig:
    method: str
    utility: str | UtilitySpec | None = None
    data: str | None = None  # test set path
    train_data: str | None = None
    bundle: str | None = None
    index_base: int = 1
    # method parameters
    s: int | None = None
    theta: float | None = None
    epsilon: float | None = None
    k0: int = 10
    ef_search: int | None = None
    tree: str | None = None
    tree_method: str = "kmeans"
    max_leaf: int = 20
    eps_c: float = 1e-3
    m: int = 10
    ef_construction: int = 50
    # training parameters
    C: float = 100.0
    eps_l: float = 1e-4
    max_epochs: int = 200
    lr: float = 0.5
    prune_eta: float = 0.0
    # harness
    seed: int = 0
    threads: int = 1
    calib_split: float = 0.2
    val_split: float = 0.2
    normalize: bool = True
    force_full_scan: bool = False
    measure_time: bool = True
    per_example: str | None = None

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigConflict(f"unknown method {self.method!r}")
        needs_utility = self.method in ("svbop_full", "svbop_hsg", "svbop_hf", "oracle")
        if self.utility is None:
            raise ConfigConflict("a utility must be given (metrics are utility-specific)")
        if self.method == "top_s" and self.s is None:
            raise ConfigConflict("top_s requires s")
        if self.method != "top_s" and self.s is not None:
            raise ConfigConflict("s is only meaningful for method top_s")
        if self.method == "icp" and self.epsilon is None:
            raise ConfigConflict("icp requires epsilon")
        if self.method != "threshold" and self.theta is not None:
            raise ConfigConflict("theta is only meaningful for method threshold")
        if self.seed is None:
            raise ConfigConflict("a seed is mandatory")
        del needs_utility


@dataclass
class MetricsReport:
    method: str
    utility: str
    mean_utility: float
    mean_recall: float
    mean_set_size: float
    top1_acc: float
    t_train_s: float
    t_test_ms: float


def emit_report(report: MetricsReport, fmt: str = "json") -> str:
    if fmt == "json":
        payload = {"schema": REPORT_SCHEMA}
        for f in fields(MetricsReport):
            payload[f.name] = getattr(report, f.name)
        return json.dumps(payload, indent=2) + "\n"
    if fmt == "csv":
        row = [
            report.method,
            report.utility,
            f"{report.mean_utility:.4f}",
            f"{report.mean_recall:.4f}",
            f"{report.mean_set_size:.4f}",
            f"{report.top1_acc:.4f}",
            f"{report.t_train_s:.3f}",
            f"{report.t_test_ms:.3f}",
        ]
        return ",".join(CSV_COLUMNS) + "\n" + ",".join(row) + "\n"
    raise ConfigConflict(f"unknown report format {fmt!r}")


def parse_report(text: str, fmt: str = "json") -> MetricsReport:
    if fmt == "json":
        payload = json.loads(text)
        if payload.pop("schema", None) != REPORT_SCHEMA:
            raise ConfigConflict("unsupported report schema")
        return MetricsReport(**payload)
    if fmt == "csv":
        lines = text.strip().splitlines()
        header = lines[0].split(",")
        if tuple(header) != CSV_COLUMNS:
            raise ConfigConflict("unexpected CSV header")
        raw = dict(zip(header, lines[1].split(",")))
        return MetricsReport(
            method=raw["method"],
            utility=raw["utility"],
            mean_utility=float(raw["mean_utility"]),
            mean_recall=float(raw["mean_recall"]),
            mean_set_size=float(raw["mean_set_size"]),
            top1_acc=float(raw["top1_acc"]),
            t_train_s=float(raw["t_train_s"]),
            t_test_ms=float(raw["t_test_ms"]),
        )
    raise ConfigConflict(f"unknown report format {fmt!r}")


def split_dataset(dataset: Dataset, frac: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded (1-frac, frac) row split."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(dataset.n_examples)
    n_b = int(round(dataset.n_examples * frac))
    return dataset.subset(np.sort(order[n_b:])), dataset.subset(np.sort(order[:n_b]))


def tune_threshold(model: LinearModel, val_data: Dataset, spec: UtilitySpec) -> float:
    """Pick the best of ten equally-spaced cumulative-mass thresholds.

    Candidates are 0.1, 0.2, ..., 1.0; selection is by mean realized
    utility on the validation set, first maximum on ties.
    """
    probs = model.predict_proba_batch(val_data.X)
    thetas = np.linspace(0.1, 1.0, 10)
    best_theta, best_mean = float(thetas[0]), -1.0
    for theta in thetas:
        total = 0.0
        for i in range(val_data.n_examples):
            pred = threshold_predict(ClassDist.from_masses(probs[i]), float(theta))
            total += eval_u(spec, int(val_data.y[i]), pred.classes)
        mean = total / max(val_data.n_examples, 1)
        if mean > best_mean:
            best_mean, best_theta = mean, float(theta)
    return best_theta


def train_bundle(config: RunConfig, train: Dataset, kind: str = "flat",
                 with_index: bool = False) -> Bundle:
    """Train the model family a method needs and wrap it as a Bundle."""
    if kind == "tree":
        if config.tree is not None:
            with open(config.tree, "r", encoding="utf-8") as fh:
                tree = load_hierarchy(fh.read())
        elif config.tree_method == "huffman":
            freqs = np.bincount(train.y, minlength=train.n_classes)
            tree = build_huffman_tree(freqs)
        else:
            tree = build_2means_tree(
                class_profiles(train), config.max_leaf, config.eps_c, config.seed
            )
        tm = train_tree_nodes(
            train, tree, C=config.C, eps_l=config.eps_l, seed=config.seed,
            max_epochs=config.max_epochs, lr=config.lr,
        )
        return Bundle(kind="tree", tree=tree, tree_models=tm, label_map=train.label_map)

    model = train_flat(
        train, C=config.C, eps_l=config.eps_l, seed=config.seed,
        max_epochs=config.max_epochs, lr=config.lr,
    )
    if config.prune_eta > 0.0:
        model = prune_weights(model, config.prune_eta)
    index = None
    if with_index:
        index = build_model_index(
            model,
            HnswParams(m=config.m, ef_construction=config.ef_construction, seed=config.seed),
        )
    return Bundle(kind="flat", model=model, index=index, label_map=train.label_map)


def _load_test(config: RunConfig, train: Dataset | None, bundle: Bundle | None) -> Dataset:
    label_map = n_features = None
    if train is not None:
        label_map, n_features = train.label_map, train.n_features
    elif bundle is not None and bundle.label_map:
        label_map = bundle.label_map
        n_features = bundle.model.n_features if bundle.model else None
    return read_svmlight(
        config.data, config.index_base, n_features=n_features, label_map=label_map
    )


def run_experiment(
    config: RunConfig,
    train_dataset: Dataset | None = None,
    test_dataset: Dataset | None = None,
    bundle: Bundle | None = None,
) -> MetricsReport:
    """Run one experiment cell and aggregate its metrics.

    Datasets and the model bundle may be passed in-memory (tests,
    scripts) or referenced by path in the config. With measure_time,
    the prediction loop runs three passes and the median wall time per
    example is reported; otherwise timings are zero so fixed-seed runs
    are byte-identical.
    """
    config.validate()
    train = train_dataset
    if train is None and config.train_data:
        train = read_svmlight(config.train_data, config.index_base)

    calib = None
    if config.method == "icp":
        if train is None:
            raise ConfigConflict("icp needs training data for calibration")
        train, calib = split_dataset(train, config.calib_split, config.seed)

    if bundle is None and config.bundle:
        bundle = load_bundle(config.bundle)
    t_train = 0.0
    if bundle is None:
        if train is None:
            raise ConfigConflict("either a bundle or training data is required")
        kind = "tree" if config.method == "svbop_hf" else "flat"
        tic = time.perf_counter()
        bundle = train_bundle(
            config, train, kind=kind, with_index=(config.method == "svbop_hsg")
        )
        t_train = time.perf_counter() - tic
    if config.method == "svbop_hsg" and bundle.index is None:
        tic = time.perf_counter()
        bundle.index = build_model_index(
            bundle.model,
            HnswParams(m=config.m, ef_construction=config.ef_construction, seed=config.seed),
        )
        t_train += time.perf_counter() - tic

    test = test_dataset if test_dataset is not None else _load_test(config, train, bundle)
    n_classes = bundle.n_classes
    spec = (
        config.utility
        if isinstance(config.utility, UtilitySpec)
        else parse_utility(config.utility, k=n_classes)
    )

    theta = config.theta
    if config.method == "threshold" and theta is None:
        if train is None:
            raise ConfigConflict("threshold tuning needs training data or an explicit theta")
        fit, val = split_dataset(train, config.val_split, config.seed)
        del fit
        theta = tune_threshold(bundle.model, val, spec)

    table = icp_calibrate(bundle.model, calib) if config.method == "icp" else None

    predict = _make_predictor(config, bundle, spec, test, theta, table)
    n = test.n_examples
    passes = 3 if config.measure_time else 1
    durations = []
    sets: list[list[int]] = []
    for _ in range(passes):
        tic = time.perf_counter()
        if config.threads > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                sets = list(pool.map(predict, range(n)))
        else:
            sets = [predict(i) for i in range(n)]
        durations.append(time.perf_counter() - tic)
    t_test_ms = 1000.0 * statistics.median(durations) / max(n, 1)

    top1 = _top1_predictions(config, bundle, test)
    utilities = np.zeros(n)
    recalls = np.zeros(n)
    sizes = np.zeros(n)
    for i, pred in enumerate(sets):
        y = int(test.y[i])
        sizes[i] = len(pred)
        recalls[i] = 1.0 if y in pred else 0.0
        utilities[i] = eval_u(spec, y, pred) if pred else 0.0

    if config.per_example:
        with open(config.per_example, "w", encoding="utf-8") as fh:
            for i, pred in enumerate(sets):
                fh.write(
                    json.dumps(
                        {
                            "index": i,
                            "label": int(test.y[i]),
                            "set": [int(c) for c in pred],
                            "utility": utilities[i],
                            "recall": recalls[i],
                        }
                    )
                    + "\n"
                )

    return MetricsReport(
        method=config.method,
        utility=str(spec),
        mean_utility=float(utilities.mean()) if n else 0.0,
        mean_recall=float(recalls.mean()) if n else 0.0,
        mean_set_size=float(sizes.mean()) if n else 0.0,
        top1_acc=float(np.mean(top1 == test.y)) if n else 0.0,
        t_train_s=t_train if config.measure_time else 0.0,
        t_test_ms=t_test_ms if config.measure_time else 0.0,
    )


def _make_predictor(config, bundle, spec, test, theta, table):
    method = config.method
    X = test.X.tocsr()

    def sv(i):
        row = X.getrow(i)
        return SparseVector(row.indices.astype(np.int64), row.data)

    if method == "svbop_full":
        def predict(i):
            provider = FullProvider(bundle.model, normalize=config.normalize)
            return list(
                svbop(provider, spec, sv(i), force_full_scan=config.force_full_scan).classes
            )
    elif method == "svbop_hsg":
        def predict(i):
            provider = HsgProvider(
                bundle.model, bundle.index, k0=config.k0, ef_search=config.ef_search
            )
            x = np.asarray(X.getrow(i).todense()).ravel()
            return list(svbop(provider, spec, x, force_full_scan=config.force_full_scan).classes)
    elif method == "svbop_hf":
        def predict(i):
            provider = TreeProvider(bundle.tree, bundle.tree_models)
            return list(
                svbop(provider, spec, sv(i), force_full_scan=config.force_full_scan).classes
            )
    elif method == "top_s":
        def predict(i):
            dist = ClassDist.from_masses(softmax(bundle.model.predict_scores(sv(i))))
            return list(top_s_predict(dist, config.s).classes)
    elif method == "threshold":
        def predict(i):
            dist = ClassDist.from_masses(softmax(bundle.model.predict_scores(sv(i))))
            return list(threshold_predict(dist, theta).classes)
    elif method == "icp":
        def predict(i):
            return [int(c) for c in icp_predict_batch(bundle.model, table, X[i], config.epsilon)[0]]
    elif method == "oracle":
        def predict(i):
            dist = ClassDist.from_masses(softmax(bundle.model.predict_scores(sv(i))))
            return list(brute_force_bayes(dist, spec).classes)
    else:  # pragma: no cover - validate() guards this
        raise ConfigConflict(f"unknown method {method!r}")

    return predict


def _top1_predictions(config, bundle, test) -> np.ndarray:
    if config.method == "svbop_hf":
        out = np.zeros(test.n_examples, dtype=np.int64)
        X = test.X.tocsr()
        for i in range(test.n_examples):
            row = X.getrow(i)
            provider = TreeProvider(bundle.tree, bundle.tree_models)
            provider.init_prediction(SparseVector(row.indices.astype(np.int64), row.data))
            out[i] = provider.get_next_class()[0]
        return out
    scores = bundle.model.predict_scores_batch(test.X)
    return np.argmax(scores, axis=1)
