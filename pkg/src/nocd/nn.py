"""Minimal differentiable building blocks for the two-layer models.

Dense and sparse linear maps, ReLU, batch normalization, inverted
dropout, and Adam with L2 weight decay folded into the gradient. All
math is float64 so finite-difference checks are decisive. Reverse-mode
gradients are implemented per-operation; the model classes in
``nocd.models`` wire them into full pipelines.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .graph import NormalizedAdjacency

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
BN_EPS = 1e-5
BN_MOMENTUM = 0.9

TRAINABLE = ("w1", "w2", "bn_gamma", "bn_beta")
DECAYED = ("w1", "w2")


@dataclass
class TrainConfig:
    """Knobs shared by every training run."""

    hidden_size: int = 128
    learning_rate: float = 1e-3
    weight_decay: float = 1e-2
    dropout_keep: float = 0.5
    batch_size: int = 1000
    max_epochs: int = 5000
    eval_every: int = 50
    patience_evals: int = 10
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.hidden_size <= 0 or self.batch_size <= 0:
            raise ValueError("hidden_size and batch_size must be positive")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("learning_rate must be positive, weight_decay non-negative")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout_keep must be in (0, 1]")
        if self.max_epochs < 0 or self.eval_every <= 0 or self.patience_evals <= 0:
            raise ValueError("epoch/evaluation counts must be positive")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")

    def for_variant(self, kind: str) -> "TrainConfig":
        """Default learning rate is 1e-3 for neural models, 5e-2 for the
        free-variable model; only applied when the rate was left at its
        default."""
        if kind == "free_variable" and self.learning_rate == 1e-3:
            return replace(self, learning_rate=5e-2)
        return self


@dataclass
class ParameterSet:
    """Weights, batch-norm state and Adam moments for a two-layer model."""

    w1: np.ndarray
    w2: np.ndarray
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_running_mean: np.ndarray
    bn_running_var: np.ndarray
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    step_count: int = 0

    def __post_init__(self):
        h = self.w1.shape[1]
        if self.w2.shape[0] != h:
            raise ValueError("w1/w2 inner dimensions disagree")
        for name in ("bn_gamma", "bn_beta", "bn_running_mean", "bn_running_var"):
            if getattr(self, name).shape != (h,):
                raise ValueError(f"{name} must have length {h}")
        if np.any(self.bn_running_var < 0):
            raise ValueError("bn_running_var must be non-negative")
        for name in TRAINABLE:
            self.adam_m.setdefault(name, np.zeros_like(getattr(self, name)))
            self.adam_v.setdefault(name, np.zeros_like(getattr(self, name)))

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            w1=self.w1.copy(),
            w2=self.w2.copy(),
            bn_gamma=self.bn_gamma.copy(),
            bn_beta=self.bn_beta.copy(),
            bn_running_mean=self.bn_running_mean.copy(),
            bn_running_var=self.bn_running_var.copy(),
            adam_m={k: v.copy() for k, v in self.adam_m.items()},
            adam_v={k: v.copy() for k, v in self.adam_v.items()},
            step_count=self.step_count,
        )


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_parameters(
    num_features: int, hidden_size: int, num_communities: int, rng: np.random.Generator
) -> ParameterSet:
    return ParameterSet(
        w1=glorot_uniform(num_features, hidden_size, rng),
        w2=glorot_uniform(hidden_size, num_communities, rng),
        bn_gamma=np.ones(hidden_size),
        bn_beta=np.zeros(hidden_size),
        bn_running_mean=np.zeros(hidden_size),
        bn_running_var=np.ones(hidden_size),
    )


# ---------------------------------------------------------------------------
# Forward / backward primitives
# ---------------------------------------------------------------------------


def dense_forward(x, w: np.ndarray):
    """x @ w; x may be a scipy sparse matrix against a dense w."""
    if sp.issparse(x):
        return np.asarray(x @ w)
    x = np.asarray(x)
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"inner dimensions disagree: {x.shape} @ {w.shape}")
    return x @ w


def spmm(a_hat: NormalizedAdjacency, x):
    """Normalized-adjacency propagation a_hat @ x."""
    if a_hat.num_nodes != x.shape[0]:
        raise ValueError("row count must match the adjacency")
    return a_hat.matmul(x)


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(grad: np.ndarray, pre_activation: np.ndarray) -> np.ndarray:
    # Subgradient at exactly 0 is taken as 0.
    return grad * (pre_activation > 0)


def batchnorm_forward(
    x: np.ndarray,
    params: ParameterSet,
    mode: str,
    update_running: bool = True,
):
    """Column-wise batch normalization.

    Train mode normalizes by batch statistics (and, when
    ``update_running``, folds them into the running averages with
    momentum 0.9); inference mode uses the stored running statistics.
    Returns (output, cache) where the cache feeds ``batchnorm_backward``.
    """
    if x.shape[1] != params.bn_gamma.shape[0]:
        raise ValueError("feature dimension does not match batch-norm parameters")
    if mode == "train":
        if x.shape[0] < 2:
            raise ValueError("batch normalization needs at least two rows in train mode")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mean) * inv_std
        if update_running:
            b = x.shape[0]
            unbiased = var * b / (b - 1)
            params.bn_running_mean *= BN_MOMENTUM
            params.bn_running_mean += (1 - BN_MOMENTUM) * mean
            params.bn_running_var *= BN_MOMENTUM
            params.bn_running_var += (1 - BN_MOMENTUM) * unbiased
        cache = {"xhat": xhat, "inv_std": inv_std, "gamma": params.bn_gamma, "train": True}
    elif mode == "inference":
        inv_std = 1.0 / np.sqrt(params.bn_running_var + BN_EPS)
        xhat = (x - params.bn_running_mean) * inv_std
        cache = {"xhat": xhat, "inv_std": inv_std, "gamma": params.bn_gamma, "train": False}
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return params.bn_gamma * xhat + params.bn_beta, cache


def batchnorm_backward(grad: np.ndarray, cache: dict):
    """Returns (dx, dgamma, dbeta) for the cached forward pass."""
    xhat = cache["xhat"]
    inv_std = cache["inv_std"]
    dgamma = (grad * xhat).sum(axis=0)
    dbeta = grad.sum(axis=0)
    dxhat = grad * cache["gamma"]
    if cache["train"]:
        dx = inv_std * (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0))
    else:
        # Running statistics are constants in inference mode.
        dx = dxhat * inv_std
    return dx, dgamma, dbeta


def dropout(x, keep: float, rng: np.random.Generator | None, mode: str):
    """Inverted dropout. Returns (output, mask); mask is None when inactive."""
    if not 0.0 < keep <= 1.0:
        raise ValueError("keep probability must be in (0, 1]")
    if mode == "inference" or keep == 1.0:
        return x, None
    if rng is None:
        raise ValueError("train-mode dropout needs a random generator")
    if sp.issparse(x):
        out = x.copy().astype(np.float64)
        mask = rng.random(out.data.shape) < keep
        out.data = np.where(mask, out.data / keep, 0.0)
        return out, mask
    mask = rng.random(x.shape) < keep
    return x * mask / keep, mask


def dropout_backward(grad: np.ndarray, mask, keep: float) -> np.ndarray:
    if mask is None:
        return grad
    return grad * mask / keep


def adam_step(params: ParameterSet, grads: dict, lr: float, weight_decay: float) -> ParameterSet:
    """One Adam update over every trainable array, in place.

    Weight decay is classic L2: lambda*W is added to the raw gradient of
    the weight matrices (not the batch-norm parameters) before the
    moment updates.
    """
    params.step_count += 1
    t = params.step_count
    bias1 = 1.0 - ADAM_BETA1**t
    bias2 = 1.0 - ADAM_BETA2**t
    for name in TRAINABLE:
        g = grads[name]
        if weight_decay and name in DECAYED:
            g = g + weight_decay * getattr(params, name)
        m = params.adam_m[name]
        v = params.adam_v[name]
        m *= ADAM_BETA1
        m += (1 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1 - ADAM_BETA2) * np.square(g)
        param = getattr(params, name)
        param -= lr * (m / bias1) / (np.sqrt(v / bias2) + ADAM_EPS)
    return params


def adam_update_single(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step_count: int,
    lr: float,
) -> None:
    """Adam on one free array (used by the direct-affiliation model)."""
    m *= ADAM_BETA1
    m += (1 - ADAM_BETA1) * grad
    v *= ADAM_BETA2
    v += (1 - ADAM_BETA2) * np.square(grad)
    bias1 = 1.0 - ADAM_BETA1**step_count
    bias2 = 1.0 - ADAM_BETA2**step_count
    param -= lr * (m / bias1) / (np.sqrt(v / bias2) + ADAM_EPS)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_parameter_set(path, params: ParameterSet, **meta) -> None:
    """Binary checkpoint with shape headers; float64 round-trips bit-exactly."""
    payload = {
        "format_version": np.int64(CHECKPOINT_VERSION),
        "kind": str(meta.pop("kind", "neural")),
        "step_count": np.int64(params.step_count),
        "w1": params.w1,
        "w2": params.w2,
        "bn_gamma": params.bn_gamma,
        "bn_beta": params.bn_beta,
        "bn_running_mean": params.bn_running_mean,
        "bn_running_var": params.bn_running_var,
    }
    for name in TRAINABLE:
        payload[f"adam_m__{name}"] = params.adam_m[name]
        payload[f"adam_v__{name}"] = params.adam_v[name]
    for key, value in meta.items():
        payload[f"meta__{key}"] = value
    np.savez(path, **payload)


def load_parameter_set(path) -> ParameterSet:
    with np.load(path) as data:
        if int(data["format_version"]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {int(data['format_version'])}")
        return ParameterSet(
            w1=data["w1"],
            w2=data["w2"],
            bn_gamma=data["bn_gamma"],
            bn_beta=data["bn_beta"],
            bn_running_mean=data["bn_running_mean"],
            bn_running_var=data["bn_running_var"],
            adam_m={n: data[f"adam_m__{n}"] for n in TRAINABLE},
            adam_v={n: data[f"adam_v__{n}"] for n in TRAINABLE},
            step_count=int(data["step_count"]),
        )
