"""Training loops and experiment protocols.

One loop serves all model variants: every epoch draws a pair batch (or
uses the full-graph gradient), steps Adam, and every ``eval_every``
epochs records the full balanced loss in inference mode. Early stopping
keeps the parameters from the best recorded evaluation. On top of the
loop sit the batch-size convergence sweep, loss-based model selection
between the two input choices, and the hold-out (inductive) protocol.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .bp import (
    AffiliationMatrix,
    batch_loss_gradient,
    full_balanced_loss,
    full_loss_gradient,
    sample_pair_batch,
)
from .graph import (
    FeatureMatrix,
    GroundTruth,
    SparseGraph,
    adjacency_as_features,
    induced_subgraph,
    normalize_adjacency,
    row_normalize,
)
from .metrics import overlapping_nmi, symmetric_agreement
from .models import (
    FreeVariableModel,
    ModelVariant,
    NeuralModel,
    assign_communities,
    free_variable_init,
    parse_variant,
)


@dataclass
class TrainTrace:
    """Evaluation history of one training run.

    ``evaluations`` holds (epoch, adjacency_entries_accessed, full_loss)
    tuples in epoch order; the entry counter only counts training-epoch
    accesses (2S per stochastic epoch, 2N+2M per full-batch epoch).
    """

    evaluations: list[tuple[int, int, float]]
    stopped_reason: str
    best_loss: float
    best_epoch: int

    def losses(self) -> np.ndarray:
        return np.array([e[2] for e in self.evaluations])

    def entries(self) -> np.ndarray:
        return np.array([e[1] for e in self.evaluations])


class EarlyStopper:
    """Patience over full-loss evaluations; strict improvement resets it."""

    def __init__(self, patience: int):
        if patience <= 0:
            raise ValueError("patience must be positive")
        self.patience = patience
        self.best_loss = np.inf
        self.best_index = -1

    def update(self, index: int, loss: float) -> bool:
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_index = index
            return True
        return False

    def should_stop(self, index: int) -> bool:
        return (index - self.best_index) >= self.patience


def _prepare_features(variant: ModelVariant, g: SparseGraph, x: FeatureMatrix | None):
    if variant.input_kind == "attributes":
        if x is None:
            raise ValueError(f"variant {variant.name} requires a feature matrix")
        if x.num_nodes != g.num_nodes:
            raise ValueError("feature rows must match graph nodes")
        return row_normalize(x).values
    if variant.input_kind == "adjacency":
        return row_normalize(adjacency_as_features(g)).values
    return None


def _build_model(
    variant: ModelVariant,
    g: SparseGraph,
    x: FeatureMatrix | None,
    num_communities: int,
    cfg: nn.TrainConfig,
    rng: np.random.Generator,
    init_state=None,
):
    if variant.kind == "free_variable":
        if init_state is not None:
            f0 = init_state.values if isinstance(init_state, AffiliationMatrix) else init_state
            return FreeVariableModel(np.array(f0, dtype=np.float64))
        return FreeVariableModel(free_variable_init(g, num_communities, rng).values)
    xv = _prepare_features(variant, g, x)
    a_hat = normalize_adjacency(g) if variant.kind == "gcn" else None
    if init_state is not None:
        params = init_state.copy()
    else:
        params = nn.init_parameters(xv.shape[1], cfg.hidden_size, num_communities, rng)
    return NeuralModel(params, xv, a_hat=a_hat, dropout_keep=cfg.dropout_keep, rng=rng)


def _train_loop(model, g: SparseGraph, cfg: nn.TrainConfig, rng, full_batch: bool):
    entries_per_epoch = (
        2 * g.num_nodes + 2 * g.num_edges if full_batch else 2 * cfg.batch_size
    )
    stopper = EarlyStopper(cfg.patience_evals)
    evaluations: list[tuple[int, int, float]] = []
    best_state = None
    entries = 0

    def evaluate(epoch: int) -> bool:
        nonlocal best_state
        f = model.forward("inference", update_running=False)
        loss = full_balanced_loss(f, g)
        index = len(evaluations)
        evaluations.append((epoch, entries, loss))
        if stopper.update(index, loss):
            best_state = model.snapshot()
        return stopper.should_stop(index)

    evaluate(0)
    stopped_reason = "max_epochs"
    for epoch in range(1, cfg.max_epochs + 1):
        f = model.forward("train")
        if full_batch:
            d_f = full_loss_gradient(f, g)
        else:
            batch = sample_pair_batch(g, cfg.batch_size, rng)
            d_f = batch_loss_gradient(f, batch)
        if isinstance(model, FreeVariableModel):
            model.step(d_f, cfg.learning_rate)
        else:
            grads = model.backward(d_f)
            model.apply_gradients(grads, cfg.learning_rate, cfg.weight_decay)
        entries += entries_per_epoch
        if epoch % cfg.eval_every == 0:
            if evaluate(epoch):
                stopped_reason = "patience"
                break
    else:
        if cfg.max_epochs > 0 and cfg.max_epochs % cfg.eval_every != 0:
            evaluate(cfg.max_epochs)

    trace = TrainTrace(
        evaluations=evaluations,
        stopped_reason=stopped_reason,
        best_loss=stopper.best_loss,
        best_epoch=evaluations[stopper.best_index][0],
    )
    if isinstance(model, FreeVariableModel):
        return AffiliationMatrix(best_state), trace
    return best_state, trace


def train(
    variant,
    g: SparseGraph,
    x: FeatureMatrix | None,
    num_communities: int,
    cfg: nn.TrainConfig,
    init_state=None,
    rng: np.random.Generator | None = None,
):
    """Minibatch training with early stopping.

    Returns (state, trace) where state is the ParameterSet (neural
    variants) or AffiliationMatrix (free variable) from the evaluation
    with the lowest recorded full loss.
    """
    if isinstance(variant, str):
        variant = parse_variant(variant)
    cfg = cfg.for_variant(variant.kind)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    model = _build_model(variant, g, x, num_communities, cfg, rng, init_state)
    return _train_loop(model, g, cfg, rng, full_batch=False)


def train_full_batch(
    variant,
    g: SparseGraph,
    x: FeatureMatrix | None,
    num_communities: int,
    cfg: nn.TrainConfig,
    init_state=None,
    rng: np.random.Generator | None = None,
):
    """Same loop, but each epoch steps on the exact full-loss gradient."""
    if isinstance(variant, str):
        variant = parse_variant(variant)
    cfg = cfg.for_variant(variant.kind)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    model = _build_model(variant, g, x, num_communities, cfg, rng, init_state)
    return _train_loop(model, g, cfg, rng, full_batch=True)


def predict_affiliations(variant, state, g: SparseGraph, x: FeatureMatrix | None) -> np.ndarray:
    """Inference-mode forward pass of a trained state on (g, x)."""
    if isinstance(variant, str):
        variant = parse_variant(variant)
    if variant.kind == "free_variable":
        return state.values if isinstance(state, AffiliationMatrix) else np.asarray(state)
    xv = _prepare_features(variant, g, x)
    a_hat = normalize_adjacency(g) if variant.kind == "gcn" else None
    model = NeuralModel(state, xv, a_hat=a_hat)
    return model.forward("inference", update_running=False)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def _shared_init(variant, g, x, num_communities, cfg):
    rng = np.random.default_rng(cfg.seed)
    if variant.kind == "free_variable":
        return free_variable_init(g, num_communities, rng)
    xv = _prepare_features(variant, g, x)
    return nn.init_parameters(xv.shape[1], cfg.hidden_size, num_communities, rng)


def convergence_experiment(
    variant,
    g: SparseGraph,
    x: FeatureMatrix | None,
    num_communities: int,
    batch_sizes: list[int],
    cfg: nn.TrainConfig,
) -> dict[str, TrainTrace]:
    """Stochastic runs at several batch sizes plus one full-batch run,
    all from one shared initialization. Keys are "S=<s>" and "full"."""
    if isinstance(variant, str):
        variant = parse_variant(variant)
    cfg = cfg.for_variant(variant.kind)
    init = _shared_init(variant, g, x, num_communities, cfg)
    results: dict[str, TrainTrace] = {}
    for i, s in enumerate(batch_sizes, start=1):
        run_cfg = replace(cfg, batch_size=int(s))
        rng = np.random.default_rng([cfg.seed, i])
        _, trace = train(variant, g, x, num_communities, run_cfg, init_state=init, rng=rng)
        results[f"S={s}"] = trace
    rng = np.random.default_rng([cfg.seed, 0])
    _, trace = train_full_batch(variant, g, x, num_communities, cfg, init_state=init, rng=rng)
    results["full"] = trace
    return results


def select_by_loss(run_x: TrainTrace, run_g: TrainTrace) -> ModelVariant:
    """Pick the input source by reconstruction loss alone.

    Lower best full loss wins; ties within 1e-9 go to the
    attribute-input model.
    """
    if not run_x.evaluations or not run_g.evaluations:
        raise ValueError("both traces must contain at least one evaluation")
    if run_g.best_loss < run_x.best_loss - 1e-9:
        return ModelVariant("gcn", "adjacency")
    return ModelVariant("gcn", "attributes")


@dataclass(frozen=True)
class InductiveSplit:
    """Disjoint, exhaustive train/test node split."""

    test_fraction: float
    train_nodes: np.ndarray
    test_nodes: np.ndarray


def make_inductive_split(num_nodes: int, t: float, rng: np.random.Generator) -> InductiveSplit:
    if not 0.0 < t < 1.0:
        raise ValueError("test fraction must be in (0, 1)")
    n_test = int(round(t * num_nodes))
    n_test = min(max(n_test, 1), num_nodes - 1)
    perm = rng.permutation(num_nodes)
    test = np.sort(perm[:n_test])
    train = np.sort(perm[n_test:])
    return InductiveSplit(test_fraction=t, train_nodes=train, test_nodes=test)


def inductive_evaluate(
    g: SparseGraph,
    x: FeatureMatrix | None,
    truth: GroundTruth,
    t: float,
    cfg: nn.TrainConfig,
    variant,
    metric: str = "nmi",
) -> float:
    """Hold-out evaluation: train on the induced subgraph, predict on the
    full graph, score only the held-out rows.

    For adjacency-input variants the feature space is pinned to the
    train-node columns so the weight shapes match at prediction time.
    """
    if isinstance(variant, str):
        variant = parse_variant(variant)
    if variant.kind == "free_variable":
        raise ValueError("the free-variable model cannot predict held-out nodes")
    split = make_inductive_split(
        g.num_nodes, t, np.random.default_rng([cfg.seed, int(round(t * 1000))])
    )
    sub, kept = induced_subgraph(g, split.train_nodes)
    if sub.num_edges == 0:
        raise ValueError("induced train subgraph has no edges")

    if variant.input_kind == "attributes":
        xv = x.values
        train_x = FeatureMatrix(xv[kept])
        full_x = x
    else:
        a = g.to_scipy().tocsc()[:, kept].tocsr()
        train_x = adjacency_as_features(sub)
        full_x = FeatureMatrix(a)

    inner = ModelVariant(variant.kind, "attributes")
    state, _ = train(inner, sub, train_x, truth.num_communities, cfg)

    a_hat = normalize_adjacency(g) if variant.kind == "gcn" else None
    model = NeuralModel(state, row_normalize(full_x).values, a_hat=a_hat)
    f_full = model.forward("inference", update_running=False)
    predicted = assign_communities(f_full, cfg.threshold)

    test = split.test_nodes
    truth_slice = truth.membership[test]
    pred_slice = predicted.membership[test]
    if metric == "nmi":
        return overlapping_nmi(truth_slice, pred_slice)
    return symmetric_agreement(truth_slice, pred_slice, delta=metric)
