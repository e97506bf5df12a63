"""Bernoulli-Poisson edge model over non-negative community affiliations.

Edge (u, v) exists with probability 1 - exp(-<F_u, F_v>). This module
provides the balanced negative log-likelihood of a graph under fixed
affiliations, an unbiased stochastic estimator over sampled pairs, the
gradients with respect to F, and a generator that samples graphs from
the model.

The full-graph non-edge sums never touch all O(N^2) pairs: with
s = sum_u F_u, the identity

    sum_{u<v not in E} <F_u, F_v> = 0.5 * (|s|^2 - sum_u |F_u|^2)
                                    - sum_{u<v in E} <F_u, F_v>

reduces the cost to O(N*C^2 + M*C).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .graph import SparseGraph

# Lower clamp for the dot product inside log(1 - exp(-x)). ReLU outputs
# make exact zeros common; the clamp bounds a pair's edge loss at
# -log(-expm1(-1e-10)) ~ 23.03 instead of infinity.
MIN_EDGE_DOT = 1e-10


@dataclass(frozen=True)
class AffiliationMatrix:
    """Non-negative N x C community strengths."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("affiliations must be a 2-D matrix")
        if v.size and v.min() < 0:
            raise ValueError("affiliations must be non-negative")
        object.__setattr__(self, "values", v)

    @property
    def num_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def num_communities(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PairBatch:
    """S edges and S non-edges drawn uniformly with replacement."""

    edge_u: np.ndarray
    edge_v: np.ndarray
    non_u: np.ndarray
    non_v: np.ndarray
    batch_size: int


def _values(f) -> np.ndarray:
    if isinstance(f, AffiliationMatrix):
        return f.values
    return np.ascontiguousarray(f, dtype=np.float64)


def edge_probability(fu, fv) -> float:
    """P(edge) = 1 - exp(-<fu, fv>), in [0, 1)."""
    dot = float(np.dot(np.asarray(fu, dtype=np.float64), np.asarray(fv, dtype=np.float64)))
    return float(-np.expm1(-dot))


def _pair_counts(g: SparseGraph) -> tuple[int, int]:
    n, m = g.num_nodes, g.num_edges
    total = n * (n - 1) // 2
    return m, total - m


def full_balanced_loss(f, g: SparseGraph) -> float:
    """Balanced loss over the whole graph.

    Mean edge term -log(1 - exp(-<F_u, F_v>)) over the M edges plus
    mean dot product over the N(N-1)/2 - M non-edges, both over
    unordered pairs.
    """
    fv = _values(f)
    if fv.shape[0] != g.num_nodes:
        raise ValueError("affiliation rows must match graph nodes")
    if g.num_nodes < 2:
        raise ValueError("need at least two nodes")
    m, mbar = _pair_counts(g)
    if m == 0:
        raise ValueError("graph has no edges")
    if mbar == 0:
        raise ValueError("graph is complete; no non-edges exist")
    eu, ev = g.edge_arrays()
    nll_sum, edge_dot_sum = kernels.edge_term_sums(fv, eu, ev, MIN_EDGE_DOT)
    col_sum = fv.sum(axis=0)
    all_pairs_dot = 0.5 * (col_sum @ col_sum - float((fv * fv).sum()))
    non_edge_dot = all_pairs_dot - edge_dot_sum
    return nll_sum / m + non_edge_dot / mbar


def stochastic_balanced_loss(f, batch: PairBatch) -> float:
    """Unbiased estimate of the balanced loss from a sampled pair batch."""
    fv = _values(f)
    s = batch.batch_size
    if s == 0:
        raise ValueError("batch is empty")
    nll_sum, _ = kernels.edge_term_sums(fv, batch.edge_u, batch.edge_v, MIN_EDGE_DOT)
    non_dot_sum = float(kernels.pair_dots(fv, batch.non_u, batch.non_v).sum())
    return nll_sum / s + non_dot_sum / s


def sample_pair_batch(g: SparseGraph, s: int, rng: np.random.Generator) -> PairBatch:
    """Draw S edges and S non-edges uniformly with replacement.

    Non-edges come from rejection sampling: ordered pairs are drawn
    uniformly, self-pairs and edges rejected, survivors canonicalized to
    u < v. Raises if rejections exceed 1000*S attempts (graph too dense).
    """
    if g.num_edges == 0:
        raise ValueError("graph has no edges")
    if _pair_counts(g)[1] == 0:
        raise ValueError("graph is complete; no non-edges exist")
    empty = np.empty(0, dtype=np.int64)
    if s == 0:
        return PairBatch(empty, empty, empty, empty, 0)
    eu, ev = g.edge_arrays()
    idx = rng.integers(0, g.num_edges, size=s)
    edge_u = eu[idx]
    edge_v = ev[idx]

    n = g.num_nodes
    non_u: list[np.ndarray] = []
    non_v: list[np.ndarray] = []
    needed = s
    attempts = 0
    max_attempts = 1000 * s
    while needed > 0:
        chunk = max(2 * needed, 16)
        if attempts + chunk > max_attempts:
            chunk = max_attempts - attempts
            if chunk <= 0:
                raise ValueError("non-edge rejection sampling exceeded attempt budget")
        us = rng.integers(0, n, size=chunk)
        vs = rng.integers(0, n, size=chunk)
        attempts += chunk
        ok = us != vs
        ok &= ~g.contains_pairs(us, vs)
        us, vs = us[ok][:needed], vs[ok][:needed]
        non_u.append(np.minimum(us, vs))
        non_v.append(np.maximum(us, vs))
        needed -= us.size
    return PairBatch(edge_u, edge_v, np.concatenate(non_u), np.concatenate(non_v), s)


def _edge_coefs(fv: np.ndarray, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """exp(-d)/(1 - exp(-d)) = 1/expm1(d) per pair, with the dot clamp."""
    d = np.maximum(kernels.pair_dots(fv, us, vs), MIN_EDGE_DOT)
    return 1.0 / np.expm1(d)


def full_loss_gradient(f, g: SparseGraph) -> np.ndarray:
    """d(full_balanced_loss)/dF, using the cached non-edge identity.

    The non-edge row sums come from sum_{v not in N(u), v != u} F_v =
    s - F_u - sum_{v in N(u)} F_v, so the cost stays O(N*C + M*C).
    """
    fv = _values(f)
    if fv.shape[0] != g.num_nodes:
        raise ValueError("affiliation rows must match graph nodes")
    m, mbar = _pair_counts(g)
    if m == 0:
        raise ValueError("graph has no edges")
    if mbar == 0:
        raise ValueError("graph is complete; no non-edges exist")
    eu, ev = g.edge_arrays()
    coefs = _edge_coefs(fv, eu, ev)
    edge_acc = np.zeros_like(fv)
    kernels.accumulate_pair_grads(fv, eu, ev, coefs, edge_acc)
    neighbor_sums = g.adjacency_matmul(fv)
    col_sum = fv.sum(axis=0)
    non_edge_rows = col_sum[None, :] - fv - neighbor_sums
    return -edge_acc / m + non_edge_rows / mbar


def batch_loss_gradient(f, batch: PairBatch) -> np.ndarray:
    """d(stochastic_balanced_loss)/dF for a sampled batch."""
    fv = _values(f)
    if batch.batch_size == 0:
        raise ValueError("batch is empty")
    out = np.zeros_like(fv)
    inv_s = 1.0 / batch.batch_size
    edge_coefs = -_edge_coefs(fv, batch.edge_u, batch.edge_v) * inv_s
    kernels.accumulate_pair_grads(fv, batch.edge_u, batch.edge_v, edge_coefs, out)
    non_coefs = np.full(batch.non_u.size, inv_s)
    kernels.accumulate_pair_grads(fv, batch.non_u, batch.non_v, non_coefs, out)
    return out


def loss_gradient_wrt_f(f, scope) -> np.ndarray:
    """Gradient dispatch: full graph (SparseGraph) or PairBatch scope."""
    if isinstance(scope, SparseGraph):
        return full_loss_gradient(f, scope)
    if isinstance(scope, PairBatch):
        return batch_loss_gradient(f, scope)
    raise TypeError(f"expected SparseGraph or PairBatch, got {type(scope).__name__}")


def generate_bp_graph(f, rng: np.random.Generator) -> SparseGraph:
    """Sample a graph: every unordered pair independently, no self-loops.

    Deterministic given the generator state. May return an edgeless
    graph (e.g. for F = 0); training-facing code decides whether that is
    acceptable.
    """
    fv = _values(f)
    n = fv.shape[0]
    us: list[np.ndarray] = []
    vs: list[np.ndarray] = []
    for u in range(n - 1):
        dots = fv[u + 1 :] @ fv[u]
        probs = -np.expm1(-dots)
        hits = np.flatnonzero(rng.random(n - 1 - u) < probs)
        if hits.size:
            us.append(np.full(hits.size, u, dtype=np.int64))
            vs.append(hits + u + 1)
    if not us:
        return SparseGraph.from_edges(n, [], [], allow_empty=True)
    return SparseGraph.from_edges(n, np.concatenate(us), np.concatenate(vs))
