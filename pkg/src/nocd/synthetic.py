"""Planted-community instances for closed-loop validation.

Builds ground-truth affiliations with a controllable within-community
dot product and overlap fraction, samples a graph from the edge model,
and derives node attributes that are informative (noisy copies of the
membership, or sparse keyword bags drawn from community vocabularies),
pure noise, or absent.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .bp import AffiliationMatrix, generate_bp_graph
from .graph import FeatureMatrix, GroundTruth, SparseGraph

DEFAULT_WITHIN_DOT = float(np.log(4.0))  # within-community edge probability 0.75


def planted_affiliations(
    num_nodes: int,
    num_communities: int,
    within_dot: float = DEFAULT_WITHIN_DOT,
    overlap_fraction: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[AffiliationMatrix, GroundTruth]:
    """Block-structured affiliations with optional two-community overlap.

    Nodes are split into equal blocks; members of a block share
    affiliation strength sqrt(within_dot) in its column, so two
    same-block nodes connect with probability 1 - exp(-within_dot).
    A fraction of nodes additionally joins the next block.
    """
    if num_communities < 1 or num_nodes < num_communities:
        raise ValueError("need at least one node per community")
    if within_dot < 0 or not 0.0 <= overlap_fraction <= 1.0:
        raise ValueError("invalid plant parameters")
    if rng is None:
        rng = np.random.default_rng(0)
    strength = float(np.sqrt(within_dot))
    f = np.zeros((num_nodes, num_communities))
    primary = (np.arange(num_nodes) * num_communities) // num_nodes
    f[np.arange(num_nodes), primary] = strength
    if overlap_fraction > 0 and num_communities > 1:
        n_overlap = int(round(overlap_fraction * num_nodes))
        chosen = rng.choice(num_nodes, size=n_overlap, replace=False)
        f[chosen, (primary[chosen] + 1) % num_communities] = strength
    truth = GroundTruth(f > 0)
    return AffiliationMatrix(f), truth


def planted_instance(
    num_nodes: int,
    num_communities: int,
    within_dot: float = DEFAULT_WITHIN_DOT,
    overlap_fraction: float = 0.0,
    seed: int = 0,
) -> tuple[SparseGraph, GroundTruth, AffiliationMatrix]:
    """Affiliations plus one sampled graph, all from one seed."""
    rng = np.random.default_rng(seed)
    f, truth = planted_affiliations(
        num_nodes, num_communities, within_dot, overlap_fraction, rng
    )
    g = generate_bp_graph(f, rng)
    return g, truth, f


def synthetic_attributes(
    truth: GroundTruth,
    mode: str = "noisy",
    flip_rate: float = 0.1,
    noise_columns: int = 0,
    rng: np.random.Generator | None = None,
) -> FeatureMatrix:
    """Node attributes tied to (or independent of) the ground truth.

    "clean" copies the membership columns, "noisy" flips each bit with
    ``flip_rate``, "noise" replaces everything with Bernoulli(0.5)
    columns that carry no community signal. Extra noise columns can be
    appended in every mode.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    n = truth.num_nodes
    if mode in ("clean", "noisy"):
        x = truth.membership.astype(np.float64)
        if mode == "noisy":
            flips = rng.random(x.shape) < flip_rate
            x = np.where(flips, 1.0 - x, x)
    elif mode == "noise":
        x = (rng.random((n, truth.num_communities)) < 0.5).astype(np.float64)
    else:
        raise ValueError(f"unknown attribute mode {mode!r}")
    if noise_columns > 0:
        extra = (rng.random((n, noise_columns)) < 0.5).astype(np.float64)
        x = np.hstack([x, extra])
    return FeatureMatrix(x)


def keyword_attributes(
    truth: GroundTruth,
    vocab_per_community: int,
    keywords_per_node: int,
    rng: np.random.Generator | None = None,
) -> FeatureMatrix:
    """Sparse bag-of-keywords attributes tied to community vocabularies.

    Every community owns ``vocab_per_community`` consecutive keyword
    columns; each node draws ``keywords_per_node`` distinct keywords
    from the union of its communities' vocabularies. The result is a
    high-dimensional sparse binary matrix in which nodes are pairwise
    distinct but community-mates share vocabulary, similar to
    co-authorship keyword data.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    n, c = truth.membership.shape
    d = vocab_per_community * c
    rows: list[int] = []
    cols: list[int] = []
    for u in range(n):
        comms = np.flatnonzero(truth.membership[u])
        if comms.size == 0:
            continue
        pool = np.concatenate(
            [np.arange(k * vocab_per_community, (k + 1) * vocab_per_community) for k in comms]
        )
        kw = rng.choice(pool, size=min(keywords_per_node, pool.size), replace=False)
        rows.extend([u] * kw.size)
        cols.extend(kw.tolist())
    mat = sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n, d), dtype=np.float64
    )
    return FeatureMatrix(mat)
