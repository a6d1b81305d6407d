"""
SIGN readout over a precomputed feature bank, trained full-batch with Adam.

The model applies one linear map per bank block, concatenates, passes the
result through a ReLU, and finishes with a linear softmax readout::

    Z = relu([B_0 T_0 + b_0, ..., B_r T_r + b_r])
    P = softmax(Z W + c)

Gradients are derived by hand; ``tests/test_learn.py`` checks them against
central finite differences.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .errors import DataError, ShapeError
from .labels import LabelVector
from .operators import FeatureBank
from .synth import make_rng


@dataclass
class SignModel:
    thetas: List[np.ndarray]
    theta_biases: List[np.ndarray]
    omega: np.ndarray
    omega_bias: np.ndarray

    @property
    def hidden(self) -> int:
        return self.thetas[0].shape[1]

    @property
    def num_classes(self) -> int:
        return self.omega.shape[1]

    @property
    def num_blocks(self) -> int:
        return len(self.thetas)

    def parameters(self) -> List[np.ndarray]:
        return [*self.thetas, *self.theta_biases, self.omega, self.omega_bias]

    def copy(self) -> "SignModel":
        return SignModel([t.copy() for t in self.thetas], [b.copy() for b in self.theta_biases],
                         self.omega.copy(), self.omega_bias.copy())

    @classmethod
    def zeros(cls, num_blocks: int, d: int, hidden: int, num_classes: int) -> "SignModel":
        return cls([np.zeros((d, hidden)) for _ in range(num_blocks)],
                   [np.zeros(hidden) for _ in range(num_blocks)],
                   np.zeros((num_blocks * hidden, num_classes)), np.zeros(num_classes))

    @classmethod
    def init(cls, num_blocks: int, d: int, hidden: int, num_classes: int, seed) -> "SignModel":
        """Weights ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``, biases zero."""
        rng = make_rng(seed)
        m = cls.zeros(num_blocks, d, hidden, num_classes)
        for t in m.thetas:
            t[:] = rng.uniform(-1.0, 1.0, t.shape) / np.sqrt(d)
        m.omega[:] = rng.uniform(-1.0, 1.0, m.omega.shape) / np.sqrt(num_blocks * hidden)
        return m

    def to_dict(self) -> dict:
        def enc(a):
            return {"shape": list(a.shape), "data": a.ravel().tolist()}
        return {
            "architecture": "sign-readout",
            "activation": "relu",
            "hidden": self.hidden,
            "thetas": [enc(t) for t in self.thetas],
            "theta_biases": [enc(b) for b in self.theta_biases],
            "omega": enc(self.omega),
            "omega_bias": enc(self.omega_bias),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SignModel":
        def dec(e):
            return np.asarray(e["data"], dtype=np.float64).reshape(e["shape"])
        return cls([dec(t) for t in obj["thetas"]], [dec(b) for b in obj["theta_biases"]],
                   dec(obj["omega"]), dec(obj["omega_bias"]))


def _check(model: SignModel, bank: FeatureBank):
    if model.num_blocks != len(bank):
        raise ShapeError(f"model has {model.num_blocks} blocks but the bank has {len(bank)}")
    if model.thetas[0].shape[0] != bank.d:
        raise ShapeError(f"model expects {model.thetas[0].shape[0]} features per block, "
                         f"bank has {bank.d}")


def _forward(model: SignModel, bank: FeatureBank, idx):
    _check(model, bank)
    inputs = [B if idx is None else B[idx] for B in bank.blocks]
    pre = np.concatenate([X @ T + b for X, T, b in
                          zip(inputs, model.thetas, model.theta_biases)], axis=1)
    Z = np.maximum(pre, 0.0)
    logits = Z @ model.omega + model.omega_bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    denom = expd.sum(axis=1, keepdims=True)
    P = expd / denom
    log_p = shifted - np.log(denom)
    return inputs, pre, Z, P, log_p


def forward(model: SignModel, bank: FeatureBank, idx=None) -> np.ndarray:
    """Class probabilities for the rows in ``idx`` (all rows by default)."""
    return _forward(model, bank, idx)[3]


def predict(model: SignModel, bank: FeatureBank, idx=None) -> np.ndarray:
    return np.argmax(forward(model, bank, idx), axis=1)


def loss_and_grads(model: SignModel, bank: FeatureBank, y: LabelVector, idx,
                   weight_decay: float = 0.0):
    """Mean cross-entropy over ``idx`` plus ``weight_decay/2 * ||weights||^2``.

    Biases are not decayed. Returns ``(loss, grads)`` where ``grads`` is a
    :class:`SignModel` holding the gradient of every parameter.
    """
    idx = np.asarray(idx)
    labels = y.require_known(idx)
    if labels.size == 0:
        raise DataError("empty index set")
    inputs, pre, Z, P, log_p = _forward(model, bank, idx)
    N = labels.size
    rows = np.arange(N)
    loss = -float(np.mean(log_p[rows, labels]))
    decay = 0.5 * weight_decay * (sum(float(np.sum(t * t)) for t in model.thetas)
                                  + float(np.sum(model.omega * model.omega)))
    dlogits = P.copy()
    dlogits[rows, labels] -= 1.0
    dlogits /= N
    d_omega = Z.T @ dlogits + weight_decay * model.omega
    d_omega_bias = dlogits.sum(axis=0)
    dpre = (dlogits @ model.omega.T) * (pre > 0)
    h = model.hidden
    d_thetas, d_biases = [], []
    for k, X in enumerate(inputs):
        dk = dpre[:, k * h:(k + 1) * h]
        d_thetas.append(X.T @ dk + weight_decay * model.thetas[k])
        d_biases.append(dk.sum(axis=0))
    return loss + decay, SignModel(d_thetas, d_biases, d_omega, d_omega_bias)


def accuracy(model: SignModel, bank: FeatureBank, y: LabelVector, idx) -> float:
    idx = np.asarray(idx)
    if idx.size == 0:
        return float("nan")
    return float(np.mean(predict(model, bank, idx) == y.require_known(idx)))


# ---------------------------------------------------------------------------
# Splits and training
# ---------------------------------------------------------------------------


@dataclass
class SplitSpec:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.train = np.asarray(self.train, dtype=np.int64)
        self.val = np.asarray(self.val, dtype=np.int64)
        self.test = np.asarray(self.test, dtype=np.int64)
        parts = [self.train, self.val, self.test]
        allidx = np.concatenate(parts)
        if np.unique(allidx).size != allidx.size:
            raise DataError("train/val/test index sets must be disjoint")
        if allidx.size and allidx.min() < 0:
            raise DataError("negative node index in split")

    def check_bounds(self, n: int):
        for part in (self.train, self.val, self.test):
            if part.size and part.max() >= n:
                raise DataError(f"split index {part.max()} >= n = {n}")

    def to_dict(self) -> dict:
        return {"train": self.train.tolist(), "val": self.val.tolist(),
                "test": self.test.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "SplitSpec":
        return cls(obj["train"], obj["val"], obj["test"])


def per_class_split(y: LabelVector, per_class: int = 20, val_frac: float = 0.15,
                    seed=None) -> SplitSpec:
    """``per_class`` training nodes per class, ``val_frac * n`` validation, rest test.

    Only nodes with known labels are used.
    """
    rng = make_rng(seed)
    known = np.flatnonzero(y.known)
    train = []
    for c in range(y.num_classes):
        members = known[y.values[known] == c]
        take = min(per_class, members.size)
        train.append(rng.choice(members, size=take, replace=False))
    train = np.sort(np.concatenate(train)) if train else np.zeros(0, dtype=np.int64)
    rest = rng.permutation(np.setdiff1d(known, train))
    n_val = int(round(val_frac * y.values.size))
    return SplitSpec(train, np.sort(rest[:n_val]), np.sort(rest[n_val:]))


def random_split(n: int, train_frac: float = 0.5, val_frac: float = 0.25, seed=None) -> SplitSpec:
    perm = make_rng(seed).permutation(n)
    a = int(round(train_frac * n))
    b = a + int(round(val_frac * n))
    return SplitSpec(np.sort(perm[:a]), np.sort(perm[a:b]), np.sort(perm[b:]))


@dataclass
class TrainConfig:
    lr: float = 0.005
    max_epochs: int = 2000
    patience: int = 200
    seed: int = 0
    hidden: int = 64
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr < 0:
            raise DataError(f"learning rate must be non-negative, got {self.lr}")
        if self.patience < 1:
            raise DataError(f"patience must be >= 1, got {self.patience}")
        if self.hidden < 1 or self.max_epochs < 1:
            raise DataError("hidden width and max_epochs must be >= 1")

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise DataError(f"unknown training options: {sorted(unknown)}")
        return cls(**obj)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainHistory:
    train_loss: List[float] = field(default_factory=list)
    train_acc: List[float] = field(default_factory=list)
    val_acc: List[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_acc: float = -1.0

    @property
    def epochs(self) -> int:
        return len(self.val_acc)

    def to_dict(self) -> dict:
        return asdict(self)


def train(bank: FeatureBank, y: LabelVector, split: SplitSpec, cfg: TrainConfig):
    """Full-batch Adam with early stopping on validation accuracy.

    Training stops after ``patience`` epochs without a strict improvement
    (ties keep the earliest epoch). Returns the best-validation parameters
    and the history.
    """
    if split.train.size == 0 or split.val.size == 0:
        raise DataError("train and validation sets must be nonempty")
    split.check_bounds(bank.n)
    y.require_known(split.train)
    y.require_known(split.val)
    model = SignModel.init(len(bank), bank.d, cfg.hidden, y.num_classes, cfg.seed)
    params = model.parameters()
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    hist = TrainHistory()
    best = model.copy()
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        loss, grads = loss_and_grads(model, bank, y, split.train, cfg.weight_decay)
        b1c = 1.0 - cfg.beta1 ** epoch
        b2c = 1.0 - cfg.beta2 ** epoch
        for p, g, a, b in zip(params, grads.parameters(), m1, m2):
            a *= cfg.beta1
            a += (1.0 - cfg.beta1) * g
            b *= cfg.beta2
            b += (1.0 - cfg.beta2) * g * g
            p -= cfg.lr * (a / b1c) / (np.sqrt(b / b2c) + cfg.eps)
        hist.train_loss.append(loss)
        hist.train_acc.append(accuracy(model, bank, y, split.train))
        va = accuracy(model, bank, y, split.val)
        hist.val_acc.append(va)
        if va > hist.best_val_acc:
            hist.best_val_acc = va
            hist.best_epoch = epoch
            best = model.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best, hist


def save_model(path: Union[str, Path], model: SignModel) -> None:
    Path(path).write_text(json.dumps(model.to_dict()) + "\n", encoding="utf-8")


def load_model(path: Union[str, Path]) -> SignModel:
    return SignModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
