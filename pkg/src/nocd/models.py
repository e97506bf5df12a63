"""The affiliation-producing models behind one interface.

Three variants: a two-layer graph convolutional network, a two-layer
MLP on raw features, and direct projected-gradient optimization of the
affiliation matrix itself. The neural variants share one pipeline
(the MLP simply skips the propagation steps); thresholding turns any
continuous affiliation matrix into a binary community assignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import nn
from .bp import AffiliationMatrix
from .graph import FeatureMatrix, NormalizedAdjacency, ParseError, SparseGraph

VARIANT_NAMES = ("nocd-x", "nocd-g", "mlp-x", "mlp-g", "free")


@dataclass(frozen=True)
class ModelVariant:
    """Model kind plus which input it consumes."""

    kind: str  # gcn | mlp | free_variable
    input_kind: str  # attributes | adjacency | none

    def __post_init__(self):
        if self.kind not in ("gcn", "mlp", "free_variable"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_kind not in ("attributes", "adjacency", "none"):
            raise ValueError(f"unknown input kind {self.input_kind!r}")
        if (self.kind == "free_variable") != (self.input_kind == "none"):
            raise ValueError("exactly the free-variable model takes no input")

    @property
    def name(self) -> str:
        if self.kind == "free_variable":
            return "free"
        prefix = "nocd" if self.kind == "gcn" else "mlp"
        suffix = "x" if self.input_kind == "attributes" else "g"
        return f"{prefix}-{suffix}"


def parse_variant(name: str) -> ModelVariant:
    table = {
        "nocd-x": ModelVariant("gcn", "attributes"),
        "nocd-g": ModelVariant("gcn", "adjacency"),
        "mlp-x": ModelVariant("mlp", "attributes"),
        "mlp-g": ModelVariant("mlp", "adjacency"),
        "free": ModelVariant("free_variable", "none"),
    }
    try:
        return table[name]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; expected one of {VARIANT_NAMES}") from None


@dataclass(frozen=True)
class CommunityAssignment:
    """Binary membership obtained by thresholding affiliations."""

    membership: np.ndarray
    threshold_used: float


def assign_communities(f, rho: float) -> CommunityAssignment:
    """Node u joins community c iff F[u, c] >= rho (inclusive boundary)."""
    if rho <= 0:
        raise ValueError("threshold must be positive")
    values = f.values if isinstance(f, AffiliationMatrix) else np.asarray(f)
    return CommunityAssignment(membership=values >= rho, threshold_used=float(rho))


# ---------------------------------------------------------------------------
# Neural models
# ---------------------------------------------------------------------------


class NeuralModel:
    """Two-layer affiliation network with a recorded forward tape.

    With a normalized adjacency the pipeline is

        dropout -> propagate -> W1 -> batchnorm -> ReLU
                -> dropout -> propagate -> W2 -> ReLU

    and without one (MLP) the propagate steps vanish. ``backward``
    reuses the dropout masks and batch statistics recorded by the most
    recent ``forward``.
    """

    def __init__(
        self,
        params: nn.ParameterSet,
        x,
        a_hat: NormalizedAdjacency | None = None,
        dropout_keep: float = 1.0,
        rng: np.random.Generator | None = None,
    ):
        self.params = params
        xv = x.values if isinstance(x, FeatureMatrix) else x
        if sp.issparse(xv):
            # Sparse kernels only pay off on genuinely sparse inputs.
            density = xv.nnz / max(1, xv.shape[0] * xv.shape[1])
            if density > 0.25:
                xv = np.asarray(xv.todense(), dtype=np.float64)
        self.x = xv
        self.a_hat = a_hat
        self.dropout_keep = dropout_keep
        self.rng = rng
        self._tape = None

    def _propagate(self, h):
        return nn.spmm(self.a_hat, h) if self.a_hat is not None else h

    def forward(self, mode: str = "train", update_running: bool = True) -> np.ndarray:
        keep = self.dropout_keep
        h0, mask0 = nn.dropout(self.x, keep, self.rng, mode)
        h1 = self._propagate(h0)
        h2 = nn.dense_forward(h1, self.params.w1)
        h3, bn_cache = nn.batchnorm_forward(h2, self.params, mode, update_running)
        h4 = nn.relu(h3)
        h5, mask5 = nn.dropout(h4, keep, self.rng, mode)
        h6 = self._propagate(h5)
        h7 = nn.dense_forward(h6, self.params.w2)
        f = nn.relu(h7)
        self._tape = {
            "h1": h1,
            "h3": h3,
            "bn_cache": bn_cache,
            "mask5": mask5,
            "h6": h6,
            "h7": h7,
        }
        return f

    def backward(self, d_f: np.ndarray) -> dict:
        """Gradients of a scalar loss wrt every trainable parameter."""
        if self._tape is None:
            raise RuntimeError("backward called before any forward pass")
        t = self._tape
        g = nn.relu_backward(d_f, t["h7"])
        h6 = t["h6"]
        dw2 = np.asarray(h6.T @ g) if sp.issparse(h6) else h6.T @ g
        dh6 = g @ self.params.w2.T
        dh5 = self._propagate(dh6)  # a_hat is symmetric
        dh4 = nn.dropout_backward(dh5, t["mask5"], self.dropout_keep)
        dh3 = nn.relu_backward(dh4, t["h3"])
        dh2, dgamma, dbeta = nn.batchnorm_backward(dh3, t["bn_cache"])
        h1 = t["h1"]
        dw1 = np.asarray(h1.T @ dh2) if sp.issparse(h1) else h1.T @ dh2
        return {"w1": dw1, "w2": dw2, "bn_gamma": dgamma, "bn_beta": dbeta}

    def snapshot(self) -> nn.ParameterSet:
        return self.params.copy()

    def restore(self, state: nn.ParameterSet) -> None:
        self.params = state.copy()

    def apply_gradients(self, grads: dict, lr: float, weight_decay: float) -> None:
        nn.adam_step(self.params, grads, lr, weight_decay)


def gcn_forward(
    a_hat: NormalizedAdjacency,
    x,
    params: nn.ParameterSet,
    mode: str = "inference",
    rng: np.random.Generator | None = None,
    dropout_keep: float = 1.0,
) -> np.ndarray:
    """One graph-convolution forward pass; output is N x C, non-negative."""
    model = NeuralModel(params, x, a_hat=a_hat, dropout_keep=dropout_keep, rng=rng)
    return model.forward(mode, update_running=False)


def mlp_forward(
    x,
    params: nn.ParameterSet,
    mode: str = "inference",
    rng: np.random.Generator | None = None,
    dropout_keep: float = 1.0,
) -> np.ndarray:
    """Feature-only forward pass: the same pipeline minus propagation."""
    model = NeuralModel(params, x, a_hat=None, dropout_keep=dropout_keep, rng=rng)
    return model.forward(mode, update_running=False)


# ---------------------------------------------------------------------------
# Free-variable model
# ---------------------------------------------------------------------------


class FreeVariableModel:
    """Directly optimized affiliation matrix with Adam state."""

    def __init__(self, f: np.ndarray):
        self.f = np.ascontiguousarray(f, dtype=np.float64)
        self.adam_m = np.zeros_like(self.f)
        self.adam_v = np.zeros_like(self.f)
        self.step_count = 0

    def forward(self, mode: str = "train", update_running: bool = True) -> np.ndarray:
        return self.f

    def step(self, grad: np.ndarray, lr: float) -> None:
        """Adam update followed by projection onto F >= 0."""
        self.step_count += 1
        nn.adam_update_single(self.f, grad, self.adam_m, self.adam_v, self.step_count, lr)
        np.maximum(self.f, 0.0, out=self.f)

    def snapshot(self) -> np.ndarray:
        return self.f.copy()

    def restore(self, state: np.ndarray) -> None:
        self.f = state.copy()
        self.adam_m = np.zeros_like(self.f)
        self.adam_v = np.zeros_like(self.f)
        self.step_count = 0


def free_variable_step(model: FreeVariableModel, grad: np.ndarray, lr: float) -> AffiliationMatrix:
    model.step(grad, lr)
    return AffiliationMatrix(model.f.copy())


def _closed_neighborhood_conductance(g: SparseGraph) -> np.ndarray:
    """phi(N[u]) for every node, with cut == 0 mapped to conductance 0."""
    n = g.num_nodes
    degrees = g.degrees
    total_vol = float(2 * g.num_edges)
    phi = np.zeros(n)
    in_s = np.zeros(n, dtype=bool)
    for u in range(n):
        members = np.append(g.neighbors(u), u)
        in_s[members] = True
        cut = 0
        vol = 0.0
        for x in members:
            nbrs = g.neighbors(x)
            cut += int((~in_s[nbrs]).sum())
            vol += degrees[x]
        in_s[members] = False
        denom = min(vol, total_vol - vol)
        phi[u] = 0.0 if cut == 0 else cut / denom
    return phi


def locally_minimal_neighborhoods(g: SparseGraph) -> list[tuple[float, int, np.ndarray]]:
    """Closed neighborhoods whose conductance is <= all neighbors' (weak
    minima), deduplicated by node set and sorted by (conductance, node id)."""
    phi = _closed_neighborhood_conductance(g)
    out = []
    seen = set()
    for u in range(g.num_nodes):
        nbrs = g.neighbors(u)
        if nbrs.size and phi[nbrs].min() < phi[u]:
            continue
        members = np.sort(np.append(nbrs, u))
        key = members.tobytes()
        if key in seen:
            continue
        seen.add(key)
        out.append((float(phi[u]), u, members))
    out.sort(key=lambda t: (t[0], t[1]))
    return out


def free_variable_init(
    g: SparseGraph, c: int, rng: np.random.Generator | None = None
) -> AffiliationMatrix:
    """Seed F from the lowest-conductance locally minimal neighborhoods.

    Up to ``c`` seed communities get indicator columns; if fewer exist,
    the remaining columns receive a single unit entry on a random node.
    """
    if c < 1:
        raise ValueError("need at least one community")
    if g.num_edges < 1:
        raise ValueError("graph has no edges")
    if rng is None:
        rng = np.random.default_rng(0)
    f = np.zeros((g.num_nodes, c))
    seeds = locally_minimal_neighborhoods(g)[:c]
    for k, (_, _, members) in enumerate(seeds):
        f[members, k] = 1.0
    for k in range(len(seeds), c):
        f[rng.integers(0, g.num_nodes), k] = 1.0
    return AffiliationMatrix(f)


# ---------------------------------------------------------------------------
# Affiliation and free-state files
# ---------------------------------------------------------------------------


def save_affiliations(path, f, rho: float) -> None:
    """Text matrix with an "N C rho" header."""
    values = f.values if isinstance(f, AffiliationMatrix) else np.asarray(f)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{values.shape[0]} {values.shape[1]} {rho:.17g}\n")
        for row in values:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_affiliations(path) -> tuple[AffiliationMatrix, float]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ParseError(f"{path}: expected 'N C rho' header")
        try:
            n, c, rho = int(header[0]), int(header[1]), float(header[2])
        except ValueError:
            raise ParseError(f"{path}: malformed header") from None
        values = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if values.shape != (n, c):
        raise ParseError(f"{path}: data shape {values.shape} != header ({n}, {c})")
    return AffiliationMatrix(values), rho


def save_free_state(path, model: FreeVariableModel) -> None:
    np.savez(
        path,
        format_version=np.int64(nn.CHECKPOINT_VERSION),
        kind="free",
        f=model.f,
        adam_m=model.adam_m,
        adam_v=model.adam_v,
        step_count=np.int64(model.step_count),
    )


def load_free_state(path) -> FreeVariableModel:
    with np.load(path) as data:
        model = FreeVariableModel(data["f"])
        model.adam_m = data["adam_m"]
        model.adam_v = data["adam_v"]
        model.step_count = int(data["step_count"])
    return model
