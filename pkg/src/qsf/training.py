"""Objective, optimizer, training loop, gradient checker, persistence.

Seeding scheme (all np.random.default_rng):
  - model init: default_rng(seed), consumed by Stack.__init__;
  - epoch shuffling: default_rng([seed, epoch]);
  - dropout masks: default_rng([seed, epoch, 7]).
Batches update Adam immediately (per-batch steps); the recorded train loss
is the mean over each sample's squared residual from the batch it was
trained in, accumulated by original sample position so the value does not
depend on shuffle order.  Test loss is an eval-mode pass over the full
test set after each epoch.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import datapipe
from .autodiff import Tensor
from .errors import ConfigError, DataError, TrainingError
from .recurrent import Stack, StackConfig
from .vqc import VqcShape

CHECKPOINT_MAGIC = "QSF-CHECKPOINT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 0.001
    seed: int = 0
    shuffle_train: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr >= 0.0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: dict[str, Tensor], lr: float) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(t.data) for k, t in params.items()},
        v={k: np.zeros_like(t.data) for k, t in params.items()},
        t=0,
        lr=lr,
    )


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update, applied to params in place."""
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name, tensor in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        m = state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        tensor.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


@dataclass
class EpochHistory:
    train_loss: np.ndarray
    test_loss: np.ndarray
    wall_seconds: np.ndarray

    def __post_init__(self):
        self.train_loss = np.asarray(self.train_loss, dtype=float)
        self.test_loss = np.asarray(self.test_loss, dtype=float)
        self.wall_seconds = np.asarray(self.wall_seconds, dtype=float)
        n = self.train_loss.size
        if self.test_loss.size != n or self.wall_seconds.size != n:
            raise ConfigError("history vectors must have equal lengths")
        for name in ("train_loss", "test_loss", "wall_seconds"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ConfigError(f"{name} entries must be finite and >= 0")

    @property
    def epochs(self) -> int:
        return self.train_loss.size

    def save_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,train_loss,test_loss,wall_seconds\n")
            for i in range(self.epochs):
                fh.write(
                    f"{i + 1},{float(self.train_loss[i])!r},"
                    f"{float(self.test_loss[i])!r},{float(self.wall_seconds[i])!r}\n"
                )

    @classmethod
    def load_csv(cls, path) -> "EpochHistory":
        try:
            with open(path) as fh:
                lines = [ln.strip() for ln in fh if ln.strip()]
        except FileNotFoundError:
            raise DataError(f"no such history file: {path}")
        if not lines or lines[0] != "epoch,train_loss,test_loss,wall_seconds":
            raise DataError(f"{path} is not a history CSV")
        rows = []
        for ln in lines[1:]:
            parts = ln.split(",")
            if len(parts) != 4:
                raise DataError(f"malformed history row: {ln!r}")
            try:
                rows.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError:
                raise DataError(f"malformed history row: {ln!r}")
        if not rows:
            raise DataError(f"{path} has no epochs")
        arr = np.array(rows)
        return cls(train_loss=arr[:, 0], test_loss=arr[:, 1], wall_seconds=arr[:, 2])


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.ndim != 1 or pred.shape != target.shape:
        raise DataError(f"need equal-length vectors, got {pred.shape} and {target.shape}")
    if pred.size == 0:
        raise DataError("need at least one sample")
    return float(np.mean((pred - target) ** 2))


def zero_grads(params: dict[str, Tensor]) -> None:
    for tensor in params.values():
        tensor.grad = None


def train(
    model: Stack,
    train_set: datapipe.WindowedDataset,
    test_set: datapipe.WindowedDataset,
    cfg: TrainConfig,
) -> EpochHistory:
    """Fit the model in place and return per-epoch losses and wall time."""
    if train_set.n < 1 or test_set.n < 1:
        raise DataError("train and test sets must be nonempty")
    params = model.parameters()
    state = init_adam(params, cfg.lr)
    n = train_set.n
    train_losses, test_losses, walls = [], [], []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        shuffle_rng = np.random.default_rng([cfg.seed, epoch])
        dropout_rng = np.random.default_rng([cfg.seed, epoch, 7])
        sq_residuals = np.empty(n)
        index_batches = datapipe.batch_indices(n, cfg.batch_size, cfg.shuffle_train, shuffle_rng)
        for bi, idx in enumerate(index_batches):
            xb = train_set.inputs[idx]
            yb = train_set.targets[idx]
            pred = model.forward(xb, mode="train", dropout_rng=dropout_rng)
            loss = ad.mean(ad.square(ad.sub(pred, Tensor(yb))))
            if not np.isfinite(loss.data):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, batch {bi + 1}")
            zero_grads(params)
            loss.backward()
            grads = {
                k: (t.grad if t.grad is not None else np.zeros_like(t.data))
                for k, t in params.items()
            }
            try:
                adam_step(params, grads, state)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch + 1}, batch {bi + 1}: {exc}")
            sq_residuals[idx] = (pred.data - yb) ** 2
        train_losses.append(float(sq_residuals.mean()))
        test_losses.append(mse_loss(model.predict(test_set.inputs), test_set.targets))
        walls.append(time.perf_counter() - t0)
    return EpochHistory(
        train_loss=np.array(train_losses),
        test_loss=np.array(test_losses),
        wall_seconds=np.array(walls),
    )


def grad_check(model: Stack, batch, h: float = 1e-5, rel_floor: float = 1e-3) -> float:
    """Worst relative disagreement between backprop and central differences.

    The denominator max(|analytic|, |numeric|, rel_floor) turns the check
    into an absolute one (h^2-limited) for near-zero gradients.  Eval-mode
    forward keeps the objective deterministic.  Guarded to small models.
    """
    inputs, targets = batch
    targets = np.asarray(targets, dtype=float)
    params = model.parameters()
    total = sum(t.data.size for t in params.values())
    if total > 500:
        raise ConfigError(f"grad_check supports at most 500 parameters, model has {total}")

    def loss_value() -> float:
        return mse_loss(model.predict(inputs), targets)

    pred = model.forward(inputs, mode="eval")
    loss = ad.mean(ad.square(ad.sub(pred, Tensor(targets))))
    zero_grads(params)
    loss.backward()
    worst = 0.0
    for tensor in params.values():
        grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        gflat = grad.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = loss_value()
            flat[k] = orig - h
            down = loss_value()
            flat[k] = orig
            fd = (up - down) / (2.0 * h)
            err = abs(gflat[k] - fd) / max(abs(gflat[k]), abs(fd), rel_floor)
            worst = max(worst, err)
    return worst


# --- persistence ----------------------------------------------------------


@dataclass
class Checkpoint:
    """Everything needed to rebuild a trained model and invert its outputs."""

    model: Stack
    seed: int
    window: int
    feature_names: list[str]
    target_name: str
    scaler: datapipe.ScalerParams | None = field(default=None)


def _config_to_dict(config: StackConfig) -> dict:
    d = {
        "hidden": config.hidden,
        "model_kind": config.model_kind,
        "n_layers": config.n_layers,
        "dropout": config.dropout,
        "six_vqc": config.six_vqc,
        "share_out_proj": config.share_out_proj,
        "vqc_shape": None,
    }
    if config.vqc_shape is not None:
        s = config.vqc_shape
        d["vqc_shape"] = {
            "n_qubits": s.n_qubits,
            "n_qlayers": s.n_qlayers,
            "n_vrotations": s.n_vrotations,
            "entangler": s.entangler,
        }
    return d


def _config_from_dict(d: dict) -> StackConfig:
    shape = None
    if d.get("vqc_shape") is not None:
        shape = VqcShape(**d["vqc_shape"])
    return StackConfig(
        hidden=d["hidden"],
        model_kind=d["model_kind"],
        n_layers=d["n_layers"],
        dropout=d["dropout"],
        vqc_shape=shape,
        six_vqc=d.get("six_vqc", False),
        share_out_proj=d.get("share_out_proj", False),
    )


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    """Versioned text container: magic line, then one sorted JSON object."""
    body = {
        "config": _config_to_dict(ckpt.model.config),
        "n_features": ckpt.model.n_features,
        "seed": ckpt.seed,
        "window": ckpt.window,
        "feature_names": list(ckpt.feature_names),
        "target": ckpt.target_name,
        "scaler": None if ckpt.scaler is None else ckpt.scaler.to_dict(),
        "params": {k: t.data.tolist() for k, t in ckpt.model.parameters().items()},
    }
    with open(path, "w") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
        json.dump(body, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path) as fh:
            header = fh.readline().strip()
            rest = fh.read()
    except FileNotFoundError:
        raise DataError(f"no such checkpoint: {path}")
    parts = header.split()
    if len(parts) != 2 or parts[0] != CHECKPOINT_MAGIC:
        raise DataError(f"{path} is not a checkpoint file")
    if parts[1] != str(CHECKPOINT_VERSION):
        raise DataError(f"unsupported checkpoint version {parts[1]}")
    try:
        body = json.loads(rest)
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt checkpoint body: {exc}")
    config = _config_from_dict(body["config"])
    model = Stack(config, body["n_features"], np.random.default_rng(0))
    params = model.parameters()
    saved = body["params"]
    if set(saved) != set(params):
        raise DataError("checkpoint parameter names do not match the configuration")
    for name, tensor in params.items():
        arr = np.asarray(saved[name], dtype=float)
        if arr.shape != tensor.data.shape:
            raise DataError(f"checkpoint parameter {name!r} has shape {arr.shape}, "
                            f"expected {tensor.data.shape}")
        tensor.data = arr
    scaler = None
    if body.get("scaler") is not None:
        scaler = datapipe.ScalerParams.from_dict(body["scaler"])
    return Checkpoint(
        model=model,
        seed=body["seed"],
        window=body["window"],
        feature_names=list(body["feature_names"]),
        target_name=body["target"],
        scaler=scaler,
    )
