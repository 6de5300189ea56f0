"""Undirected graph container and its symmetric propagation matrix."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import EmptyGraph, NodeOutOfRange


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph.

    ``edges`` holds each undirected edge once as (u, v) with u < v; the CSR
    adjacency stores both directions.  Self-loops from the input are dropped
    so the adjacency diagonal is zero.
    """

    num_nodes: int
    edges: np.ndarray
    adjacency: sp.csr_matrix = field(repr=False)
    degrees: np.ndarray = field(repr=False)

    def neighbors(self, node: int) -> np.ndarray:
        start, stop = self.adjacency.indptr[node], self.adjacency.indptr[node + 1]
        return self.adjacency.indices[start:stop]


def build_graph(edge_list, num_nodes: int) -> Graph:
    """Build a :class:`Graph` from (u, v) pairs.

    Duplicate edges (in either orientation) and self-loops are removed;
    endpoints outside [0, num_nodes) raise :class:`NodeOutOfRange`.
    """
    n = int(num_nodes)
    if n <= 0:
        raise EmptyGraph("graph must have at least one node")
    pairs = np.asarray(list(edge_list), dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
        raise NodeOutOfRange(f"edge endpoint outside [0, {n})")
    # canonical orientation u < v; self-loops vanish in the dedup
    keep = pairs[:, 0] != pairs[:, 1]
    pairs = pairs[keep]
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    edges = np.unique(np.stack([lo, hi], axis=1), axis=0) if pairs.size else np.empty((0, 2), dtype=np.int64)

    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    data = np.ones(rows.shape[0], dtype=np.float64)
    adjacency = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    adjacency.sum_duplicates()
    degrees = np.asarray(adjacency.sum(axis=1)).ravel().astype(np.int64)
    return Graph(num_nodes=n, edges=edges, adjacency=adjacency, degrees=degrees)


@dataclass(frozen=True)
class PropagationMatrix:
    """Symmetric propagation operator I - D^{-1/2} A D^{-1/2}.

    Isolated nodes use the convention that their D^{-1/2} entry is 0, which
    reduces their row to the bare self term.  Consequently every diagonal
    entry equals 1 and the trace equals the node count.
    """

    matrix: sp.csr_matrix = field(repr=False)

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def normalized_laplacian(g: Graph) -> PropagationMatrix:
    inv_sqrt = np.zeros(g.num_nodes)
    nz = g.degrees > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(g.degrees[nz].astype(np.float64))
    d_half = sp.diags(inv_sqrt)
    norm_adj = d_half @ g.adjacency @ d_half
    lap = (sp.identity(g.num_nodes, format="csr") - norm_adj).tocsr()
    lap.sum_duplicates()
    return PropagationMatrix(matrix=lap)
