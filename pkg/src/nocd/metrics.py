"""Agreement scores between overlapping covers.

The primary metric is overlapping normalized mutual information over
binary membership vectors, which scores the "everything in one
community" degenerate prediction as 0. The best-match symmetric
agreement scores (set-F1 / set-Jaccard) that reward that degenerate
prediction are also provided, mainly as a cautionary comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bp import AffiliationMatrix
from .graph import GroundTruth
from .models import CommunityAssignment, assign_communities


class CoverError(ValueError):
    """A cover is unusable for scoring (empty, or node counts differ)."""


def _membership(cover) -> np.ndarray:
    if isinstance(cover, GroundTruth):
        return np.asarray(cover.membership, dtype=bool)
    if isinstance(cover, CommunityAssignment):
        return np.asarray(cover.membership, dtype=bool)
    m = np.asarray(cover)
    if m.ndim != 2:
        raise CoverError("membership must be a 2-D binary matrix")
    return m.astype(bool)


@dataclass(frozen=True)
class CoverPair:
    """Cleaned pair of covers ready for scoring.

    Empty communities are dropped (the predicted-side count is kept as a
    diagnostic since thresholding can empty a column).
    """

    truth: np.ndarray
    predicted: np.ndarray
    num_nodes: int
    dropped_empty_predicted: int


def make_cover_pair(truth, predicted) -> CoverPair:
    t = _membership(truth)
    p = _membership(predicted)
    if t.shape[0] != p.shape[0]:
        raise CoverError(f"node counts differ: {t.shape[0]} vs {p.shape[0]}")
    t = t[:, t.any(axis=0)]
    p_nonempty = p.any(axis=0)
    dropped = int(p.shape[1] - p_nonempty.sum())
    p = p[:, p_nonempty]
    if t.shape[1] == 0:
        raise CoverError("ground-truth cover has no non-empty communities")
    if p.shape[1] == 0:
        raise CoverError("predicted cover has no non-empty communities")
    return CoverPair(truth=t, predicted=p, num_nodes=t.shape[0], dropped_empty_predicted=dropped)


def _contingency(a: np.ndarray, b: np.ndarray):
    """Pairwise intersection counts and community sizes."""
    inter = a.T.astype(np.float64) @ b.astype(np.float64)
    sa = a.sum(axis=0).astype(np.float64)
    sb = b.sum(axis=0).astype(np.float64)
    return inter, sa, sb


def symmetric_agreement(truth, predicted, delta: str = "f1") -> float:
    """Best-match average of a set similarity, computed in both directions.

    ``delta`` selects the per-pair similarity: "f1" for set-F1 or
    "jaccard" for set-Jaccard. The result is the mean of the two
    directional best-match averages and lies in [0, 1].
    """
    if delta not in ("f1", "jaccard"):
        raise ValueError("delta must be 'f1' or 'jaccard'")
    pair = make_cover_pair(truth, predicted)
    inter, st, sp_ = _contingency(pair.truth, pair.predicted)
    if delta == "f1":
        sim = 2.0 * inter / (st[:, None] + sp_[None, :])
    else:
        union = st[:, None] + sp_[None, :] - inter
        sim = inter / union
    return 0.5 * (sim.max(axis=1).mean() + sim.max(axis=0).mean())


def _h(counts: np.ndarray, n: int) -> np.ndarray:
    """Entropy contribution -(c/n) * log2(c/n), elementwise, 0 at c = 0."""
    frac = np.asarray(counts, dtype=np.float64) / n
    out = np.zeros_like(frac)
    nz = frac > 0
    out[nz] = -frac[nz] * np.log2(frac[nz])
    return out


def _binary_entropies(m: np.ndarray, n: int) -> np.ndarray:
    sizes = m.sum(axis=0)
    return _h(sizes, n) + _h(n - sizes, n)


def _conditional_entropy(a: np.ndarray, b: np.ndarray, n: int) -> float:
    """Sum over communities of A of the best conditional entropy given B.

    For each pair the 2x2 contingency (a_, b_, c_, d_) over the node set
    gives H(A_i, B_j) - H(B_j); the pair only counts when
    h(a_) + h(d_) >= h(b_) + h(c_), otherwise the unconditional H(A_i)
    is used (this rejects "complement" matches).
    """
    inter, sa, sb = _contingency(a, b)
    d_ = inter
    c_ = sa[:, None] - d_
    b_ = sb[None, :] - d_
    a_ = n - sa[:, None] - sb[None, :] + d_
    ha, hb, hc, hd = _h(a_, n), _h(b_, n), _h(c_, n), _h(d_, n)
    joint_minus_hb = ha + hb + hc + hd - _h(sb[None, :], n) - _h(n - sb[None, :], n)
    unconditional = _binary_entropies(a, n)[:, None]
    valid = (ha + hd) >= (hb + hc)
    cond = np.where(valid, joint_minus_hb, unconditional)
    return float(cond.min(axis=1).sum())


def _as_community_multiset(m: np.ndarray) -> list[bytes]:
    return sorted(m[:, c].tobytes() for c in range(m.shape[1]))


def overlapping_nmi(truth, predicted) -> float:
    """Overlapping NMI between two covers, in [0, 1].

    Each community is treated as a binary variable over the nodes; each
    side's conditional entropy is the sum over its communities of the
    best (smallest, complement-rejecting) conditional entropy against
    the other side, normalized by the side's unconditional entropy sum:

        NMI = 1 - 0.5 * (H(X|Y)/H(X) + H(Y|X)/H(Y))

    A cover with zero total entropy scores 0 against anything except an
    identical zero-entropy cover (then 1).
    """
    pair = make_cover_pair(truth, predicted)
    n = pair.num_nodes
    hx = float(_binary_entropies(pair.truth, n).sum())
    hy = float(_binary_entropies(pair.predicted, n).sum())
    if hx == 0.0 or hy == 0.0:
        if hx == 0.0 and hy == 0.0:
            same = _as_community_multiset(pair.truth) == _as_community_multiset(pair.predicted)
            return 1.0 if same else 0.0
        return 0.0
    hx_given_y = _conditional_entropy(pair.truth, pair.predicted, n)
    hy_given_x = _conditional_entropy(pair.predicted, pair.truth, n)
    return 1.0 - 0.5 * (hx_given_y / hx + hy_given_x / hy)


def nmi_from_affiliations(f, truth, rho: float) -> float:
    """Threshold affiliations at rho, then score against the ground truth.

    Raises CoverError when thresholding leaves no non-empty community,
    signalling that the score is undefined for this prediction.
    """
    values = f.values if isinstance(f, AffiliationMatrix) else np.asarray(f)
    assignment = assign_communities(values, rho)
    return overlapping_nmi(truth, assignment)
