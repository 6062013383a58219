"""BCE + Adam training, random oversampling, and thresholding."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .models import Model, ModelSpec
from .nnet.tensor import Tape, bce_with_logits, stable_sigmoid
from .tokenizer import Vocabulary, encode_batch

log = logging.getLogger(__name__)

BCE_EPS = 1e-7


class SingleClassCorpus(ValueError):
    pass


class EmptyTrainingSet(ValueError):
    pass


def bce_loss(p, y, eps: float = BCE_EPS):
    """Binary cross-entropy with ``p`` clamped to ``[eps, 1 - eps]``; arrays give the mean."""
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps)
    y = np.asarray(y, dtype=np.float64)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(loss.mean())


def classify(p, threshold: float = 0.5):
    """1 (authentic) iff ``p >= threshold``; works on scalars and arrays."""
    out = (np.asarray(p) >= threshold).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def balance_by_oversampling(train: list, seed: int = 0) -> list:
    """Duplicate random minority-class documents until both classes are equal, then shuffle.

    Documents need a ``label`` attribute; none is altered or synthesized.
    """
    rng = np.random.default_rng(seed)
    by_label: dict[int, list] = {0: [], 1: []}
    for doc in train:
        by_label[int(doc.label)].append(doc)
    if not by_label[0] or not by_label[1]:
        raise SingleClassCorpus("oversampling needs both classes present")
    minority = 0 if len(by_label[0]) < len(by_label[1]) else 1
    deficit = abs(len(by_label[0]) - len(by_label[1]))
    pool = by_label[minority]
    extra = [pool[i] for i in rng.integers(0, len(pool), size=deficit)]
    out = list(train) + extra
    return [out[i] for i in rng.permutation(len(out))]


def adam_step(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray, t: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place on ``param``, ``m`` and ``v``."""
    if not (param.shape == grad.shape == m.shape == v.shape):
        raise ValueError(f"shape mismatch: param {param.shape}, grad {grad.shape}")
    if t < 1:
        raise ValueError("Adam step index starts at 1")
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    param -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype, copy=False)


class Adam:
    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            adam_step(p.data, g, m, v, self.t, self.lr, self.beta1, self.beta2, self.eps)


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads:
            g *= scale
    return norm


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float
    validation: dict | None = None


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    steps: int = 0

    def to_csv(self) -> str:
        rows = ["epoch,loss,accuracy"]
        rows += [f"{e.epoch},{e.loss:.6f},{e.accuracy:.6f}" for e in self.epochs]
        return "\n".join(rows) + "\n"


def spec_from_config(name: str, vocab: Vocabulary, config: TrainConfig) -> ModelSpec:
    return ModelSpec(
        name=name,
        vocab_size=len(vocab),
        seq_len=config.seq_len,
        embed_dim=config.embed_dim,
        hidden=config.hidden,
        conv_filters=config.conv_filters,
        kernel_size=config.kernel_size,
        pool_window=config.pool_window,
        dense_sizes=(config.dense1, config.dense2),
        dropout=config.dropout,
        masked_pooling=config.masked_pooling,
    )


def fit_arrays(model: Model, X: np.ndarray, y: np.ndarray, config: TrainConfig, validation=None) -> tuple[Model, TrainHistory]:
    """Train on an encoded ``[N, L]`` matrix; shuffles are drawn from ``config.seed``."""
    if len(X) == 0:
        raise EmptyTrainingSet("no training examples")
    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.epsilon)
    history = TrainHistory()
    y = np.asarray(y, dtype=np.int64)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(X))
        total_loss = 0.0
        correct = 0
        for start in range(0, len(X), config.batch_size):
            idx = order[start : start + config.batch_size]
            with Tape() as tape:
                logits = model.forward(X[idx], mode="train", rng=rng)
                loss = bce_with_logits(logits, y[idx])
            grads = tape.gradient(loss, params)
            clip_by_global_norm(grads, config.clip_norm)
            opt.step(grads)
            history.steps += 1
            total_loss += float(loss.data) * len(idx)
            correct += int((classify(stable_sigmoid(logits.data), config.threshold) == y[idx]).sum())
        stats = EpochStats(epoch, total_loss / len(X), correct / len(X))
        if validation is not None:
            Xv, yv = validation
            pv = model.predict(Xv)
            stats.validation = {"loss": bce_loss(pv, yv), "accuracy": float((classify(pv, config.threshold) == yv).mean())}
        history.epochs.append(stats)
        log.info("epoch %d loss %.4f acc %.4f", epoch, stats.loss, stats.accuracy)
    return model, history


def train(model: Model, train_docs: list, vocab: Vocabulary, config: TrainConfig, validation_docs: list | None = None) -> tuple[Model, TrainHistory]:
    """Optionally balance, encode and pad, then run mini-batch Adam on BCE.

    ``vocab`` must come from ``train_docs``; balancing touches the training split only.
    """
    if not train_docs:
        raise EmptyTrainingSet("no training documents")
    docs = balance_by_oversampling(train_docs, config.seed) if config.balance else list(train_docs)
    X = encode_batch(docs, vocab, config.seq_len)
    y = np.array([d.label for d in docs], dtype=np.int64)
    validation = None
    if validation_docs:
        validation = (encode_batch(validation_docs, vocab, config.seq_len), np.array([d.label for d in validation_docs]))
    return fit_arrays(model, X, y, config, validation)
