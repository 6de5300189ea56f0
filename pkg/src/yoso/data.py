"""Dataset ingestion, serialization and synthetic graph generation.

On-disk layout of a dataset directory (all plain text):

* ``edges.txt``     one "u v" per line, 0-based, '#' lines ignored
* ``features.csv``  N rows of d comma-separated floats, no header
* ``labels.csv``    optional, lines "node,label" (integers)
* ``splits.json``   {"train": [...], "valid": [...], "test": [...]}
* ``links.json``    optional, positive/negative edge lists per split

The feature file fixes the node count; edges referencing nodes beyond it
are an inconsistency.  Directed edge lists are symmetrized and duplicates
dropped at build time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    InconsistentDimensions,
    InvalidParams,
    MissingFile,
    ParseError,
)
from .graph import Graph, build_graph

SYNTHETIC_KINDS = ("sbm", "erdos-renyi", "barabasi-albert")
LINK_KEYS = ("pos_train", "pos_valid", "pos_test", "neg_valid", "neg_test")


@dataclass
class DatasetBundle:
    graph: Graph
    features: np.ndarray = field(repr=False)
    labels: np.ndarray | None = field(default=None, repr=False)
    splits: dict = field(default_factory=dict)
    links: dict | None = None

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def _validate_bundle(bundle: DatasetBundle) -> DatasetBundle:
    n = bundle.graph.num_nodes
    if bundle.features.shape[0] != n:
        raise InconsistentDimensions(
            f"feature rows {bundle.features.shape[0]} != num_nodes {n}"
        )
    if bundle.labels is not None and bundle.labels.shape[0] != n:
        raise InconsistentDimensions("labels length != num_nodes")
    seen = np.zeros(n, dtype=bool)
    for name in ("train", "valid", "test"):
        idx = np.asarray(bundle.splits.get(name, []), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise InconsistentDimensions(f"{name} split index out of range")
        if np.any(seen[idx]):
            raise InconsistentDimensions("splits overlap")
        seen[idx] = True
    if bundle.links is not None:
        for key, edges in bundle.links.items():
            e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
            if e.size and (e.min() < 0 or e.max() >= n):
                raise InconsistentDimensions(f"{key} edge endpoint out of range")
    return bundle


def _read_edges(path: Path) -> list[tuple[int, int]]:
    edges = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise ParseError(f"expected 'u v', got {stripped!r}", lineno)
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError as exc:
                raise ParseError(f"non-integer endpoint in {stripped!r}", lineno) from exc
    return edges


def _read_features(path: Path) -> np.ndarray:
    rows = []
    width = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            parts = stripped.split(",")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise ParseError(f"expected {width} columns, got {len(parts)}", lineno)
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ParseError(f"non-numeric feature in {stripped!r}", lineno) from exc
    if not rows:
        raise ParseError("empty feature file", 1)
    return np.asarray(rows, dtype=np.float64)


def _read_labels(path: Path, num_nodes: int) -> np.ndarray:
    labels = np.full(num_nodes, -1, dtype=np.int64)
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split(",")
            if len(parts) != 2:
                raise ParseError(f"expected 'node,label', got {stripped!r}", lineno)
            try:
                node, label = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ParseError(f"non-integer entry in {stripped!r}", lineno) from exc
            if not 0 <= node < num_nodes:
                raise InconsistentDimensions(f"label for node {node} outside [0, {num_nodes})")
            labels[node] = label
    return labels


def load_dataset(directory) -> DatasetBundle:
    directory = Path(directory)
    edges_path = directory / "edges.txt"
    features_path = directory / "features.csv"
    for p in (edges_path, features_path):
        if not p.exists():
            raise MissingFile(str(p))
    features = _read_features(features_path)
    n = features.shape[0]
    edges = _read_edges(edges_path)
    if edges and max(max(e) for e in edges) >= n:
        raise InconsistentDimensions(
            f"edge endpoint exceeds feature row count {n}"
        )
    graph = build_graph(edges, n)

    labels = None
    labels_path = directory / "labels.csv"
    if labels_path.exists():
        labels = _read_labels(labels_path, n)

    splits = {}
    splits_path = directory / "splits.json"
    if splits_path.exists():
        raw = json.loads(splits_path.read_text())
        splits = {k: np.asarray(v, dtype=np.int64) for k, v in raw.items()}

    links = None
    links_path = directory / "links.json"
    if links_path.exists():
        raw = json.loads(links_path.read_text())
        links = {k: np.asarray(v, dtype=np.int64).reshape(-1, 2) for k, v in raw.items()}

    return _validate_bundle(DatasetBundle(graph=graph, features=features, labels=labels,
                                          splits=splits, links=links))


def save_dataset(bundle: DatasetBundle, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with (directory / "edges.txt").open("w") as fh:
        for u, v in bundle.graph.edges:
            fh.write(f"{u} {v}\n")
    with (directory / "features.csv").open("w") as fh:
        for row in bundle.features:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    if bundle.labels is not None:
        with (directory / "labels.csv").open("w") as fh:
            for node, label in enumerate(bundle.labels):
                if label >= 0:
                    fh.write(f"{node},{label}\n")
    if bundle.splits:
        (directory / "splits.json").write_text(json.dumps(
            {k: np.asarray(v).tolist() for k, v in bundle.splits.items()}
        ))
    if bundle.links is not None:
        (directory / "links.json").write_text(json.dumps(
            {k: np.asarray(v).tolist() for k, v in bundle.links.items()}
        ))


# ---------------------------------------------------------------------------
# synthetic generators


def _stratified_splits(labels: np.ndarray, rng: np.random.Generator,
                       fractions=(0.6, 0.2, 0.2)) -> dict:
    train, valid, test = [], [], []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        members = rng.permutation(members)
        n_train = int(round(fractions[0] * members.size))
        n_valid = int(round(fractions[1] * members.size))
        train.append(members[:n_train])
        valid.append(members[n_train:n_train + n_valid])
        test.append(members[n_train + n_valid:])
    return {
        "train": np.sort(np.concatenate(train)),
        "valid": np.sort(np.concatenate(valid)),
        "test": np.sort(np.concatenate(test)),
    }


def _sbm_edges(block_of: np.ndarray, p_in: float, p_out: float,
               rng: np.random.Generator) -> list[tuple[int, int]]:
    n = block_of.size
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            p = p_in if block_of[u] == block_of[v] else p_out
            if rng.random() < p:
                edges.append((u, v))
    return edges


def _class_means(num_classes: int, dim: int, separation: float,
                 rng: np.random.Generator) -> np.ndarray:
    # orthonormal directions scaled so every pairwise mean distance == separation
    raw = rng.standard_normal((dim, num_classes))
    q, _ = np.linalg.qr(raw)
    return (separation / np.sqrt(2.0)) * q[:, :num_classes].T


def _sample_non_edges(graph: Graph, count: int, rng: np.random.Generator,
                      forbidden: set) -> np.ndarray:
    out = []
    while len(out) < count:
        u = int(rng.integers(graph.num_nodes))
        v = int(rng.integers(graph.num_nodes))
        if u == v:
            continue
        key = (min(u, v), max(u, v))
        if key in forbidden or key in out:
            continue
        out.append(key)
    return np.asarray(out, dtype=np.int64)


def _hold_out_links(edges: np.ndarray, num_nodes: int, rng: np.random.Generator,
                    valid_fracः=0.1, valid_frac: float = 0.1, test_frac: float = 0.1):
    order = rng.permutation(edges.shape[0])
    n_valid = int(round(valid_frac * edges.shape[0]))
    n_test = int(round(test_frac * edges.shape[0]))
    valid_e = edges[order[:n_valid]]
    test_e = edges[order[n_valid:n_valid + n_test]]
    train_e = edges[order[n_valid + n_test:]]
    all_set = {(int(u), int(v)) for u, v in edges}
    graph = build_graph(train_e, num_nodes)
    links = {
        "pos_train": train_e,
        "pos_valid": valid_e,
        "pos_test": test_e,
        "neg_valid": _sample_non_edges(graph, valid_e.shape[0], rng, all_set),
        "neg_test": _sample_non_edges(graph, test_e.shape[0], rng, all_set),
    }
    return graph, links


def generate_synthetic(kind: str, params: dict, rng: np.random.Generator) -> DatasetBundle:
    """Desk-scale synthetic datasets.

    ``sbm`` draws a stochastic block model whose class label is the block
    id, features are class-mean Gaussians (pairwise mean separation
    ``separation``, unit noise), splits 60/20/20 stratified.  ``erdos-renyi``
    and ``barabasi-albert`` produce unlabeled graphs with standard-normal
    features and uniform splits.  With ``link_split: true`` a 10%/10%
    valid/test edge set is held out of the graph and negatives sampled.
    """
    if kind not in SYNTHETIC_KINDS:
        raise InvalidParams(f"kind must be one of {SYNTHETIC_KINDS}, got {kind!r}")
    dim = int(params.get("dim", 16))
    if kind == "sbm":
        sizes = params.get("block_sizes")
        if sizes is None:
            n = int(params["num_nodes"])
            blocks = int(params.get("num_blocks", 2))
            sizes = [n // blocks] * blocks
            for i in range(n - sum(sizes)):
                sizes[i] += 1
        sizes = [int(s) for s in sizes]
        if min(sizes) < 1:
            raise InvalidParams("every block needs at least one node")
        p_in = float(params.get("p_in", 0.1))
        p_out = float(params.get("p_out", 0.01))
        if not (0 <= p_in <= 1 and 0 <= p_out <= 1):
            raise InvalidParams("edge probabilities must lie in [0, 1]")
        block_of = np.repeat(np.arange(len(sizes)), sizes)
        n = block_of.size
        edges = np.asarray(_sbm_edges(block_of, p_in, p_out, rng), dtype=np.int64).reshape(-1, 2)
        separation = float(params.get("separation", 1.0))
        means = _class_means(len(sizes), dim, separation, rng)
        features = means[block_of] + rng.standard_normal((n, dim))
        labels = block_of.astype(np.int64)
        splits = _stratified_splits(labels, rng)
    elif kind == "erdos-renyi":
        n = int(params["num_nodes"])
        p = float(params.get("p", 0.05))
        if not 0 <= p <= 1:
            raise InvalidParams("p must lie in [0, 1]")
        mask = rng.random((n, n)) < p
        iu = np.triu_indices(n, k=1)
        keep = mask[iu]
        edges = np.stack([iu[0][keep], iu[1][keep]], axis=1).astype(np.int64)
        features = rng.standard_normal((n, dim))
        labels = None
        splits = _uniform_splits(n, rng)
    else:  # barabasi-albert
        n = int(params["num_nodes"])
        attach = int(params.get("attachment", 2))
        if attach < 1 or attach >= n:
            raise InvalidParams("attachment count must be in [1, num_nodes)")
        targets = list(range(attach))
        repeated: list[int] = list(range(attach))
        edge_set = set()
        for u in range(attach, n):
            chosen = set()
            while len(chosen) < attach:
                pick = repeated[int(rng.integers(len(repeated)))] if repeated else int(rng.integers(u))
                if pick != u:
                    chosen.add(pick)
            for v in chosen:
                edge_set.add((min(u, v), max(u, v)))
                repeated.extend([u, v])
        edges = np.asarray(sorted(edge_set), dtype=np.int64).reshape(-1, 2)
        features = rng.standard_normal((n, dim))
        labels = None
        splits = _uniform_splits(n, rng)

    links = None
    if params.get("link_split"):
        graph, links = _hold_out_links(
            edges, n, rng,
            valid_frac=float(params.get("valid_frac", 0.1)),
            test_frac=float(params.get("test_frac", 0.1)),
        )
    else:
        graph = build_graph(edges, n)
    return _validate_bundle(DatasetBundle(graph=graph, features=features, labels=labels,
                                          splits=splits, links=links))


def _uniform_splits(n: int, rng: np.random.Generator, fractions=(0.6, 0.2, 0.2)) -> dict:
    order = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_valid = int(round(fractions[1] * n))
    return {
        "train": np.sort(order[:n_train]),
        "valid": np.sort(order[n_train:n_train + n_valid]),
        "test": np.sort(order[n_train + n_valid:]),
    }
