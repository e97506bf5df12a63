"""Graph and attribute containers plus the text formats around them.

The graph is undirected and unweighted, held in symmetric CSR form: each
unordered edge appears in both incident rows and column indices within a
row are strictly increasing. All containers are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class ParseError(ValueError):
    """An input file does not follow its documented format."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class SparseGraph:
    """Undirected, unweighted graph over dense 0-based node ids.

    Attributes
    ----------
    num_nodes : int
        Number of nodes N.
    num_edges : int
        Number of unordered edges M.
    indptr, indices : int64 arrays
        Symmetric CSR structure; ``indices`` has 2*M entries and is
        sorted within each row, so ``has_edge`` costs O(log deg(u)).
    """

    def __init__(self, num_nodes: int, indptr: np.ndarray, indices: np.ndarray):
        self.num_nodes = int(num_nodes)
        self.indptr = _readonly(np.asarray(indptr, dtype=np.int64))
        self.indices = _readonly(np.asarray(indices, dtype=np.int64))
        if self.indptr.shape != (self.num_nodes + 1,):
            raise ValueError("indptr length must be num_nodes + 1")
        if self.indices.size % 2 != 0:
            raise ValueError("symmetric storage requires an even number of entries")
        self.num_edges = self.indices.size // 2
        # Unordered edge list (u < v), shared by loss kernels and samplers.
        row_lengths = np.diff(self.indptr)
        rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64), row_lengths)
        upper = rows < self.indices
        self._edge_u = _readonly(rows[upper])
        self._edge_v = _readonly(self.indices[upper])
        # Sorted canonical keys u*N + v for vectorized membership tests.
        self._edge_keys = _readonly(np.sort(self._edge_u * self.num_nodes + self._edge_v))
        self._degrees = _readonly(row_lengths.astype(np.int64))
        self._csr_cache: sp.csr_matrix | None = None

    @classmethod
    def from_edges(
        cls,
        num_nodes: int,
        us,
        vs,
        *,
        allow_empty: bool = False,
        warn_self_loops: bool = True,
    ) -> "SparseGraph":
        """Build a graph from (possibly repeated, possibly ordered) pairs.

        Self-loops are dropped (with a warning when ``warn_self_loops``);
        duplicate edges and (u,v)/(v,u) repeats collapse to one unordered
        edge.
        """
        us = np.asarray(us, dtype=np.int64)
        vs = np.asarray(vs, dtype=np.int64)
        if us.size and (us.min() < 0 or vs.min() < 0):
            raise ValueError("node ids must be non-negative")
        if us.size and max(us.max(), vs.max()) >= num_nodes:
            raise ValueError("node id exceeds num_nodes")
        loops = us == vs
        n_loops = int(loops.sum())
        if n_loops and warn_self_loops:
            warnings.warn(f"dropped {n_loops} self-loop(s)", stacklevel=2)
        us, vs = us[~loops], vs[~loops]
        lo = np.minimum(us, vs)
        hi = np.maximum(us, vs)
        keys = np.unique(lo * np.int64(num_nodes) + hi)
        if keys.size == 0 and not allow_empty:
            raise ValueError("graph has no edges")
        lo = keys // num_nodes
        hi = keys % num_nodes
        rows = np.concatenate([lo, hi])
        cols = np.concatenate([hi, lo])
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(num_nodes, indptr, cols)

    @property
    def degrees(self) -> np.ndarray:
        return self._degrees

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        """Membership test via binary search in row u, O(log deg(u))."""
        row = self.neighbors(u)
        i = np.searchsorted(row, v)
        return bool(i < row.size and row[i] == v)

    def contains_pairs(self, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
        """Vectorized edge membership for arrays of (u, v) pairs."""
        lo = np.minimum(us, vs)
        hi = np.maximum(us, vs)
        keys = lo * np.int64(self.num_nodes) + hi
        if self._edge_keys.size == 0:
            return np.zeros(keys.shape, dtype=bool)
        pos = np.searchsorted(self._edge_keys, keys)
        pos = np.minimum(pos, self._edge_keys.size - 1)
        return self._edge_keys[pos] == keys

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """The M unordered edges as parallel (u, v) arrays with u < v."""
        return self._edge_u, self._edge_v

    def _csr(self) -> sp.csr_matrix:
        if self._csr_cache is None:
            data = np.ones(self.indices.size, dtype=np.float64)
            self._csr_cache = sp.csr_matrix(
                (data, self.indices, self.indptr),
                shape=(self.num_nodes, self.num_nodes),
            )
        return self._csr_cache

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr().copy()

    def adjacency_matmul(self, x: np.ndarray) -> np.ndarray:
        """A @ x (entries are all ones)."""
        return np.asarray(self._csr() @ x)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SparseGraph)
            and self.num_nodes == other.num_nodes
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    def __repr__(self) -> str:
        return f"SparseGraph(num_nodes={self.num_nodes}, num_edges={self.num_edges})"


@dataclass(frozen=True)
class FeatureMatrix:
    """N x D non-negative node attributes, dense ndarray or CSR."""

    values: "np.ndarray | sp.spmatrix"

    @property
    def num_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def num_features(self) -> int:
        return self.values.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.values)

    def toarray(self) -> np.ndarray:
        if self.is_sparse:
            return np.asarray(self.values.todense(), dtype=np.float64)
        return np.asarray(self.values, dtype=np.float64)


@dataclass(frozen=True)
class GroundTruth:
    """Binary N x C overlapping membership used as evaluation reference."""

    membership: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.membership, dtype=bool)
        if m.ndim != 2:
            raise ValueError("membership must be a 2-D binary matrix")
        if not m.any():
            raise ValueError("at least one community must be non-empty")
        object.__setattr__(self, "membership", _readonly(m))

    @property
    def num_nodes(self) -> int:
        return self.membership.shape[0]

    @property
    def num_communities(self) -> int:
        return self.membership.shape[1]

    def communities(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.membership[:, c]) for c in range(self.num_communities)]


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetrically normalized adjacency with self-loops, as CSR."""

    values: sp.csr_matrix

    @property
    def num_nodes(self) -> int:
        return self.values.shape[0]

    def matmul(self, x):
        out = self.values @ x
        if sp.issparse(out):
            return out
        return np.asarray(out)


def normalize_adjacency(g: SparseGraph) -> NormalizedAdjacency:
    """Self-loops added, then rows/columns scaled by 1/sqrt(degree).

    An isolated node ends up with a single unit diagonal entry.
    """
    a = g.to_scipy().tocoo()
    n = g.num_nodes
    row = np.concatenate([a.row, np.arange(n)])
    col = np.concatenate([a.col, np.arange(n)])
    data = np.concatenate([a.data, np.ones(n)])
    d = g.degrees + 1.0
    scale = 1.0 / np.sqrt(d)
    data = data * scale[row] * scale[col]
    mat = sp.csr_matrix((data, (row, col)), shape=(n, n))
    mat.sort_indices()
    return NormalizedAdjacency(mat)


def row_normalize(x: FeatureMatrix) -> FeatureMatrix:
    """Scale every nonzero row to unit L2 norm; zero rows stay zero."""
    if x.is_sparse:
        v = x.values.tocsr().astype(np.float64)
        norms = np.sqrt(np.asarray(v.multiply(v).sum(axis=1)).ravel())
        inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
        out = sp.diags(inv) @ v
        return FeatureMatrix(out.tocsr())
    v = np.asarray(x.values, dtype=np.float64)
    norms = np.linalg.norm(v, axis=1)
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    return FeatureMatrix(v * inv[:, None])


def adjacency_as_features(g: SparseGraph) -> FeatureMatrix:
    """The binary adjacency reused as a sparse N x N feature matrix."""
    return FeatureMatrix(g.to_scipy())


def induced_subgraph(g: SparseGraph, keep) -> tuple[SparseGraph, np.ndarray]:
    """Subgraph over ``keep`` plus the map from new ids to original ids.

    Edges survive only when both endpoints are kept. The subgraph may
    have an empty edge set; callers that need edges decide the policy.
    """
    keep = np.unique(np.asarray(keep, dtype=np.int64))
    if keep.size == 0:
        raise ValueError("keep must be non-empty")
    if keep.min() < 0 or keep.max() >= g.num_nodes:
        raise ValueError("keep contains out-of-range node index")
    old_to_new = np.full(g.num_nodes, -1, dtype=np.int64)
    old_to_new[keep] = np.arange(keep.size)
    eu, ev = g.edge_arrays()
    mask = (old_to_new[eu] >= 0) & (old_to_new[ev] >= 0)
    sub = SparseGraph.from_edges(
        keep.size, old_to_new[eu[mask]], old_to_new[ev[mask]], allow_empty=True
    )
    return sub, keep


# ---------------------------------------------------------------------------
# Text formats
# ---------------------------------------------------------------------------


def load_edge_list(path) -> SparseGraph:
    """Read a "u<TAB>v" edge list.

    Lines starting with "#" are comments; an optional header line
    "N=<int>" fixes the node count (otherwise 1 + max id is used).
    Self-loops are dropped with a warning; duplicates collapse.
    """
    us: list[int] = []
    vs: list[int] = []
    header_n = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("N="):
                try:
                    header_n = int(line[2:])
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: bad header {line!r}") from None
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected 'u<TAB>v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer node id in {line!r}") from None
            if u < 0 or v < 0:
                raise ParseError(f"{path}:{lineno}: negative node id in {line!r}")
            us.append(u)
            vs.append(v)
    if not us:
        raise ValueError(f"{path}: empty edge set")
    n = header_n if header_n is not None else 1 + max(max(us), max(vs))
    return SparseGraph.from_edges(n, us, vs)


def save_edge_list(g: SparseGraph, path) -> None:
    """Write the graph so that load_edge_list round-trips the CSR exactly."""
    eu, ev = g.edge_arrays()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"N={g.num_nodes}\n")
        for u, v in zip(eu.tolist(), ev.tolist()):
            fh.write(f"{u}\t{v}\n")


def load_features(path) -> FeatureMatrix:
    """Read a feature file, auto-detected by its "sparse"/"dense" header.

    Sparse body lines are "u<TAB>feat_index<TAB>value" triplets; dense
    bodies are whitespace-separated rows. The header may optionally
    carry explicit dimensions: "sparse N D".
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    body_start = None
    header = None
    for i, raw in enumerate(lines):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        header = line.split()
        body_start = i + 1
        break
    if header is None or header[0] not in ("sparse", "dense"):
        raise ParseError(f"{path}: missing 'sparse'/'dense' header line")
    shape = None
    if len(header) == 3:
        try:
            shape = (int(header[1]), int(header[2]))
        except ValueError:
            raise ParseError(f"{path}: bad dimensions in header") from None
    elif len(header) != 1:
        raise ParseError(f"{path}: header must be 'sparse|dense [N D]'")

    if header[0] == "dense":
        rows = []
        for lineno, raw in enumerate(lines[body_start:], start=body_start + 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(t) for t in line.split()])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value") from None
        if not rows:
            raise ParseError(f"{path}: dense feature file has no rows")
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise ParseError(f"{path}: ragged dense rows")
        values = np.asarray(rows, dtype=np.float64)
        if shape is not None and values.shape != shape:
            raise ParseError(f"{path}: data shape {values.shape} != header {shape}")
        return FeatureMatrix(values)

    ii: list[int] = []
    jj: list[int] = []
    vv: list[float] = []
    for lineno, raw in enumerate(lines[body_start:], start=body_start + 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"{path}:{lineno}: expected 'u feat value' triplet")
        try:
            ii.append(int(parts[0]))
            jj.append(int(parts[1]))
            vv.append(float(parts[2]))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: malformed triplet {line!r}") from None
    if not ii and shape is None:
        raise ParseError(f"{path}: sparse feature file has no entries and no dimensions")
    n = shape[0] if shape else 1 + max(ii)
    d = shape[1] if shape else 1 + max(jj)
    mat = sp.csr_matrix((vv, (ii, jj)), shape=(n, d))
    return FeatureMatrix(mat)


def save_features(fm: FeatureMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if fm.is_sparse:
            coo = fm.values.tocoo()
            fh.write(f"sparse {fm.num_nodes} {fm.num_features}\n")
            for i, j, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()):
                fh.write(f"{i}\t{j}\t{v:.17g}\n")
        else:
            fh.write(f"dense {fm.num_nodes} {fm.num_features}\n")
            for row in np.asarray(fm.values):
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_communities(path, num_nodes: int | None = None) -> GroundTruth:
    """Read a cover file: line c lists the node ids of community c."""
    comms: list[list[int]] = []
    header_n = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line.startswith("#"):
                if line.startswith("# N="):
                    try:
                        header_n = int(line[4:])
                    except ValueError:
                        raise ParseError(f"{path}:{lineno}: bad header {line!r}") from None
                continue
            if not line:
                comms.append([])
                continue
            try:
                comms.append([int(t) for t in line.split()])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer node id") from None
    while comms and not comms[-1]:
        comms.pop()
    if not comms:
        raise ParseError(f"{path}: no communities found")
    max_id = max((max(c) for c in comms if c), default=-1)
    if num_nodes is None:
        num_nodes = header_n if header_n is not None else max_id + 1
    if max_id >= num_nodes:
        raise ValueError(f"{path}: node id {max_id} out of range for N={num_nodes}")
    membership = np.zeros((num_nodes, len(comms)), dtype=bool)
    for c, nodes in enumerate(comms):
        membership[nodes, c] = True
    return GroundTruth(membership)


def save_communities(membership: np.ndarray, path, num_nodes: int | None = None) -> None:
    """Write a cover: one line per community listing member node ids."""
    m = np.asarray(membership, dtype=bool)
    n = num_nodes if num_nodes is not None else m.shape[0]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# N={n}\n")
        for c in range(m.shape[1]):
            nodes = np.flatnonzero(m[:, c])
            fh.write(" ".join(str(i) for i in nodes.tolist()) + "\n")
