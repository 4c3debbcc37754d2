"""On-disk model bundles.

A bundle is a directory holding everything one trained model needs:

    manifest.json   version, kind (flat | tree), dimensions, label map,
                    training metadata, and which optional files exist
    weights.bin     weight blocks, documented layout below
    tree.txt        optional label hierarchy (edge-list format)
    index.hnsw      optional retrieval index (see hnsw module)

weights.bin layout (little-endian, version 1):

    magic b"SPWB" | u32 version | u32 n_blocks
    per block:
        u32 node id (0xFFFFFFFF for the flat model)
        u8 tag: 1 = linear (u32 K, u32 D, K*D f64 weights, K f64 bias)
                2 = constant distribution (u32 K, K f64 values)

Floats are raw IEEE-754 doubles, so a save/load/save cycle is
bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .hnsw import HnswIndex, load_index, save_index
from .labeltree import LabelTree, dump_hierarchy, load_hierarchy, relabel_preorder
from .linear import LinearModel, TreeNodeModels

WEIGHTS_MAGIC = b"SPWB"
WEIGHTS_VERSION = 1
FLAT_BLOCK_ID = 0xFFFFFFFF


@dataclass
class Bundle:
    kind: str  # "flat" | "tree"
    model: LinearModel | None = None
    tree: LabelTree | None = None
    tree_models: TreeNodeModels | None = None
    index: HnswIndex | None = None
    label_map: dict[int, int] | None = None
    meta: dict | None = None

    @property
    def n_classes(self) -> int:
        if self.model is not None:
            return self.model.n_classes
        return self.tree.n_classes


def _pack_linear(node_id: int, model: LinearModel) -> bytes:
    K, D = model.weights.shape
    head = struct.pack("<IBII", node_id, 1, K, D)
    body = model.weights.astype("<f8").tobytes() + model.bias.astype("<f8").tobytes()
    return head + body


def _pack_constant(node_id: int, dist: np.ndarray) -> bytes:
    head = struct.pack("<IBI", node_id, 2, dist.size)
    return head + dist.astype("<f8").tobytes()


def _write_weights(path: Path, blocks: list[bytes]) -> None:
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<II", WEIGHTS_VERSION, len(blocks)))
        for b in blocks:
            fh.write(b)


def _read_weights(path: Path):
    blob = path.read_bytes()
    if blob[:4] != WEIGHTS_MAGIC:
        raise DataFormatError("not a weights file (bad magic)")
    version, n_blocks = struct.unpack_from("<II", blob, 4)
    if version != WEIGHTS_VERSION:
        raise DataFormatError(f"unsupported weights version {version}")
    offset = 12
    blocks = {}
    for _ in range(n_blocks):
        node_id, tag = struct.unpack_from("<IB", blob, offset)
        offset += 5
        if tag == 1:
            K, D = struct.unpack_from("<II", blob, offset)
            offset += 8
            W = np.frombuffer(blob, "<f8", K * D, offset).reshape(K, D).copy()
            offset += K * D * 8
            b = np.frombuffer(blob, "<f8", K, offset).copy()
            offset += K * 8
            blocks[node_id] = LinearModel(W, b)
        elif tag == 2:
            (K,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            blocks[node_id] = np.frombuffer(blob, "<f8", K, offset).copy()
            offset += K * 8
        else:
            raise DataFormatError(f"unknown weight block tag {tag}")
    return blocks


def save_bundle(path, bundle: Bundle) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    files = {"weights": "weights.bin"}
    tree = bundle.tree
    if bundle.kind == "flat":
        blocks = [_pack_linear(FLAT_BLOCK_ID, bundle.model)]
        n_classes, n_features = bundle.model.weights.shape
    elif bundle.kind == "tree":
        # the dumped hierarchy uses canonical preorder ids, so weight
        # blocks must be keyed the same way
        tree, mapping = relabel_preorder(bundle.tree)
        tm = bundle.tree_models
        blocks = []
        for node in sorted(set(tm.models) | set(tm.constants), key=mapping.__getitem__):
            if node in tm.models:
                blocks.append(_pack_linear(mapping[node], tm.models[node]))
            else:
                blocks.append(_pack_constant(mapping[node], tm.constants[node]))
        n_classes = bundle.tree.n_classes
        n_features = next(iter(tm.models.values())).n_features if tm.models else 0
    else:
        raise DataFormatError(f"unknown bundle kind {bundle.kind!r}")
    _write_weights(root / "weights.bin", blocks)

    if tree is not None:
        (root / "tree.txt").write_text(dump_hierarchy(tree), encoding="utf-8")
        files["tree"] = "tree.txt"
    if bundle.index is not None:
        save_index(bundle.index, root / "index.hnsw")
        files["index"] = "index.hnsw"

    manifest = {
        "version": 1,
        "kind": bundle.kind,
        "n_classes": int(n_classes),
        "n_features": int(n_features),
        "label_map": {str(k): v for k, v in (bundle.label_map or {}).items()},
        "meta": bundle.meta or {},
        "files": files,
    }
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_bundle(path) -> Bundle:
    root = Path(path)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("version") != 1:
        raise DataFormatError(f"unsupported bundle version {manifest.get('version')}")
    kind = manifest["kind"]
    blocks = _read_weights(root / manifest["files"]["weights"])
    label_map = {int(k): v for k, v in manifest.get("label_map", {}).items()} or None

    tree = None
    if "tree" in manifest["files"]:
        tree = load_hierarchy((root / manifest["files"]["tree"]).read_text(encoding="utf-8"))

    bundle = Bundle(kind=kind, tree=tree, label_map=label_map, meta=manifest.get("meta", {}))
    if kind == "flat":
        bundle.model = blocks[FLAT_BLOCK_ID]
    elif kind == "tree":
        models = {n: b for n, b in blocks.items() if isinstance(b, LinearModel)}
        constants = {n: b for n, b in blocks.items() if not isinstance(b, LinearModel)}
        bundle.tree_models = TreeNodeModels(tree, models, constants)
    else:
        raise DataFormatError(f"unknown bundle kind {kind!r}")

    if "index" in manifest["files"]:
        if bundle.model is None:
            raise DataFormatError("index requires a flat model in the bundle")
        bundle.index = load_index(root / manifest["files"]["index"], bundle.model.weights)
    return bundle
