"""Differentiable probe over frozen features, trained with Adam.

The probe is either a linear map (features -> L scores) or a single
tanh hidden layer. Parameters live in a name -> float64 array dict so
the optimizer state mirrors them one-to-one. Training is plain
mini-batch gradient descent with bias-corrected Adam; all randomness
(init, shuffling) derives from the config seed, so runs are exactly
reproducible.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .dataset import AnnotationMatrix
from .embedding_store import EmbeddingMatrix
from .errors import (
    ConfigError,
    DimensionMismatch,
    DivergenceDetected,
    EmptyDataset,
    InvalidShape,
    NonFiniteGradient,
    NonFiniteScore,
    ShapeMismatch,
)
from .losses import LossConfig, batch_loss
from .metrics import mean_average_precision

_INIT_SALT = 0x494E4954
_SHUFFLE_SALT = 0x53484C46

MODEL_MAGIC = b"VLPLMDL1"


@dataclass
class ProbeModel:
    dim: int
    n_labels: int
    hidden: int | None
    params: dict[str, np.ndarray]

    def copy(self) -> "ProbeModel":
        return ProbeModel(
            dim=self.dim,
            n_labels=self.n_labels,
            hidden=self.hidden,
            params={k: v.copy() for k, v in self.params.items()},
        )


def init(dim: int, n_labels: int, hidden: int | None = None, seed: int = 0) -> ProbeModel:
    """Fresh probe: weights ~ N(0, 1/fan_in), biases zero."""
    if dim < 1 or n_labels < 1 or (hidden is not None and hidden < 1):
        raise InvalidShape(f"invalid probe shape dim={dim}, n_labels={n_labels}, hidden={hidden}")
    rng = np.random.default_rng([seed, _INIT_SALT])
    if hidden is None:
        params = {
            "w": rng.standard_normal((dim, n_labels)) / np.sqrt(dim),
            "b": np.zeros(n_labels),
        }
    else:
        params = {
            "w1": rng.standard_normal((dim, hidden)) / np.sqrt(dim),
            "b1": np.zeros(hidden),
            "w2": rng.standard_normal((hidden, n_labels)) / np.sqrt(hidden),
            "b2": np.zeros(n_labels),
        }
    return ProbeModel(dim=dim, n_labels=n_labels, hidden=hidden, params=params)


def _as_matrix(features) -> np.ndarray:
    if isinstance(features, EmbeddingMatrix):
        features = features.data
    return np.asarray(features, dtype=np.float64)


def forward(model: ProbeModel, features) -> np.ndarray:
    """Scores for one feature vector (d,) or a batch (B, d)."""
    x = _as_matrix(features)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.dim:
        raise DimensionMismatch(f"feature dim {x.shape[1]} != model dim {model.dim}")
    scores, _ = _forward_cached(model, x)
    return scores[0] if single else scores


def _forward_cached(model: ProbeModel, x: np.ndarray):
    if model.hidden is None:
        return x @ model.params["w"] + model.params["b"], None
    hidden_act = np.tanh(x @ model.params["w1"] + model.params["b1"])
    return hidden_act @ model.params["w2"] + model.params["b2"], hidden_act


def _backward(model: ProbeModel, x: np.ndarray, hidden_act, dscores: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients given d(loss)/d(scores) for a batch."""
    if model.hidden is None:
        return {"w": x.T @ dscores, "b": dscores.sum(axis=0)}
    dhidden = (dscores @ model.params["w2"].T) * (1.0 - hidden_act**2)
    return {
        "w2": hidden_act.T @ dscores,
        "b2": dscores.sum(axis=0),
        "w1": x.T @ dhidden,
        "b1": dhidden.sum(axis=0),
    }


def loss_and_grads(model: ProbeModel, x: np.ndarray, states: np.ndarray, loss_cfg: LossConfig):
    """Batch loss plus parameter gradients in one pass."""
    scores, hidden_act = _forward_cached(model, x)
    value, dscores = batch_loss(scores, states, loss_cfg)
    return value, _backward(model, x, hidden_act, dscores)


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_model(cls, model: ProbeModel, lr: float, **kwargs) -> "AdamState":
        if lr < 0.0:
            raise ConfigError(f"learning rate must be >= 0, got {lr}")
        return cls(
            lr=lr,
            m={k: np.zeros_like(p) for k, p in model.params.items()},
            v={k: np.zeros_like(p) for k, p in model.params.items()},
            **kwargs,
        )


def adam_step(model: ProbeModel, grads: dict[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update, in place; returns (model, state)."""
    if grads.keys() != model.params.keys():
        raise ShapeMismatch(f"gradient keys {sorted(grads)} != parameter keys {sorted(model.params)}")
    for k, g in grads.items():
        if g.shape != model.params[k].shape:
            raise ShapeMismatch(f"gradient {k} shape {g.shape} != parameter shape {model.params[k].shape}")
        if not np.isfinite(g).all():
            raise NonFiniteGradient(f"gradient {k} contains NaN or Inf")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for k, g in grads.items():
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g**2
        model.params[k] -= state.lr * (state.m[k] / bc1) / (np.sqrt(state.v[k] / bc2) + state.eps)
    return model, state


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    shuffle: bool = True
    hidden: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not np.isfinite(self.lr) or self.lr < 0.0:
            raise ConfigError(f"lr must be finite and >= 0, got {self.lr}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_map: float  # NaN when no validation set was given


@dataclass
class TrainResult:
    model: ProbeModel
    history: list[EpochRecord]
    best_epoch: int


def train(
    features,
    annotations,
    cfg: TrainConfig,
    val_features=None,
    val_labels=None,
) -> TrainResult:
    """Train a probe; returns the snapshot with the best validation mAP.

    ``annotations`` may contain merged pseudo states. When no validation
    set is supplied the final-epoch parameters are returned instead.
    """
    x = _as_matrix(features)
    states = annotations.states if isinstance(annotations, AnnotationMatrix) else np.asarray(annotations, dtype=np.int8)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyDataset(f"need a non-empty (N, d) feature matrix, got shape {x.shape}")
    if states.shape[0] != x.shape[0]:
        raise ShapeMismatch(f"{x.shape[0]} feature rows vs {states.shape[0]} annotation rows")
    if (val_features is None) != (val_labels is None):
        raise ConfigError("val_features and val_labels must be given together")

    n, dim = x.shape
    n_labels = states.shape[1]
    model = init(dim, n_labels, cfg.hidden, cfg.seed)
    state = AdamState.for_model(model, cfg.lr)
    rng = np.random.default_rng([cfg.seed, _SHUFFLE_SALT])

    history: list[EpochRecord] = []
    best_epoch = -1
    best_map = -np.inf
    best_params = None

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            try:
                value, grads = loss_and_grads(model, x[idx], states[idx], cfg.loss)
            except NonFiniteScore as exc:
                raise DivergenceDetected(f"non-finite scores at epoch {epoch}: {exc}") from exc
            if not np.isfinite(value):
                raise DivergenceDetected(f"non-finite loss at epoch {epoch}")
            adam_step(model, grads, state)
            loss_sum += value * idx.size
        train_loss = loss_sum / n

        if val_features is not None:
            val_scores = forward(model, val_features)
            val_map = mean_average_precision(val_scores, val_labels).map
            if val_map > best_map:
                best_map = val_map
                best_epoch = epoch
                best_params = {k: p.copy() for k, p in model.params.items()}
        else:
            val_map = float("nan")
        history.append(EpochRecord(epoch=epoch, train_loss=train_loss, val_map=val_map))

    if best_params is None:
        best_epoch = cfg.epochs
        best_params = model.params
    best_model = ProbeModel(dim=dim, n_labels=n_labels, hidden=cfg.hidden, params=best_params)
    return TrainResult(model=best_model.copy(), history=history, best_epoch=best_epoch)


def save_checkpoint(path: str, model: ProbeModel, meta: dict | None = None) -> None:
    """Binary checkpoint (f32 parameters) plus a JSON sidecar with metadata."""
    names = sorted(model.params)
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            encoded = name.encode("utf-8")
            shape = model.params[name].shape
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", len(shape)))
            fh.write(struct.pack(f"<{len(shape)}I", *shape))
        for name in names:
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f4").tobytes())
    sidecar = {
        "dim": model.dim,
        "n_labels": model.n_labels,
        "hidden": model.hidden,
        "meta": meta or {},
    }
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def load_checkpoint(path: str) -> tuple[ProbeModel, dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise InvalidShape(f"{path} is not a probe checkpoint")
    off = len(MODEL_MAGIC)
    (n_tensors,) = struct.unpack_from("<I", blob, off)
    off += 4
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for _ in range(n_tensors):
        (name_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<I", blob, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        shapes.append((name, shape))
    params = {}
    for name, shape in shapes:
        count = int(np.prod(shape))
        params[name] = (
            np.frombuffer(blob, dtype="<f4", count=count, offset=off).astype(np.float64).reshape(shape)
        )
        off += 4 * count
    with open(path + ".json", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    model = ProbeModel(
        dim=int(sidecar["dim"]),
        n_labels=int(sidecar["n_labels"]),
        hidden=sidecar["hidden"],
        params=params,
    )
    return model, sidecar.get("meta", {})
