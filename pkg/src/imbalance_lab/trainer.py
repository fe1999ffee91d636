"""Small differentiable models, momentum SGD and the training loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .losses import LossSpec, PerturbationContext, perturbed_ce_batch
from .numerics import rng_stream
from .taskgen import Dataset


class TrainingDivergence(RuntimeError):
    pass


ACTIVATIONS = ("relu", "tanh", "linear")


class Model:
    """Linear classifier or one-hidden-layer MLP over flat parameter storage.

    Parameter layout: linear is ``[W (C x d), b (C)]``; the MLP is
    ``[W1 (h x d), b1 (h), W2 (C x h), b2 (C)]``.
    """

    def __init__(self, d: int, C: int, hidden: int | None = None, activation: str = "relu",
                 params: np.ndarray | None = None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        self.d, self.C, self.hidden, self.activation = d, C, hidden, activation
        shapes = [(C, d), (C,)] if hidden is None else [(hidden, d), (hidden,), (C, hidden), (C,)]
        self._shapes = shapes
        self.size = sum(math.prod(s) for s in shapes)
        self.params = np.zeros(self.size) if params is None else np.array(params, dtype=np.float64)
        if self.params.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got {self.params.shape}")

    @property
    def variant(self) -> str:
        return "linear" if self.hidden is None else "mlp"

    @property
    def feature_dim(self) -> int:
        return self.d if self.hidden is None else self.hidden

    @classmethod
    def init(cls, d, C, hidden=None, activation="relu", seed=0, scale=None):
        m = cls(d, C, hidden, activation)
        rng = rng_stream(seed, "trainer", "init")
        parts = []
        for shape in m._shapes:
            if len(shape) == 2:
                s = scale if scale is not None else 1.0 / math.sqrt(shape[1])
                parts.append((s * rng.standard_normal(shape)).ravel())
            else:
                parts.append(np.zeros(shape))
        m.params = np.concatenate(parts)
        return m

    def copy(self, params=None) -> "Model":
        return Model(self.d, self.C, self.hidden, self.activation,
                     self.params.copy() if params is None else params)

    def unpack(self, flat=None):
        flat = self.params if flat is None else flat
        out, k = [], 0
        for shape in self._shapes:
            size = math.prod(shape)
            out.append(flat[k:k + size].reshape(shape))
            k += size
        return out

    @property
    def classifier_weights(self) -> np.ndarray:
        """Rows ``w_c`` of the last (classification) layer."""
        return self.unpack()[0] if self.hidden is None else self.unpack()[2]

    def _act(self, h):
        if self.activation == "relu":
            return np.maximum(h, 0.0)
        if self.activation == "tanh":
            return np.tanh(h)
        return h

    def _act_grad(self, h, a):
        if self.activation == "relu":
            return (h > 0).astype(np.float64)
        if self.activation == "tanh":
            return 1.0 - a * a
        return np.ones_like(h)

    def forward(self, X, params=None):
        """Logits and a cache for ``backward``/``jvp``; the cache holds the final features."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ValueError(f"expected features of width {self.d}, got shape {X.shape}")
        p = self.unpack(params)
        if self.hidden is None:
            W, b = p
            return X @ W.T + b, {"X": X, "a": X}
        W1, b1, W2, b2 = p
        h = X @ W1.T + b1
        a = self._act(h)
        return a @ W2.T + b2, {"X": X, "h": h, "a": a}

    def features(self, X, params=None):
        return self.forward(X, params)[1]["a"]

    def backward(self, cache, dZ, params=None):
        """Flat gradient of ``sum(dZ * logits)`` with respect to the parameters."""
        p = self.unpack(params)
        X = cache["X"]
        if self.hidden is None:
            return np.concatenate([(dZ.T @ X).ravel(), dZ.sum(axis=0)])
        W1, b1, W2, b2 = p
        a, h = cache["a"], cache["h"]
        gW2 = dZ.T @ a
        gb2 = dZ.sum(axis=0)
        dH = (dZ @ W2) * self._act_grad(h, a)
        return np.concatenate([(dH.T @ X).ravel(), dH.sum(axis=0), gW2.ravel(), gb2])

    def jvp(self, cache, v, params=None):
        """Directional derivative of the logits along parameter direction ``v``."""
        dv = self.unpack(v)
        X = cache["X"]
        if self.hidden is None:
            dW, db = dv
            return X @ dW.T + db
        W1, b1, W2, b2 = self.unpack(params)
        dW1, db1, dW2, db2 = dv
        a, h = cache["a"], cache["h"]
        da = (X @ dW1.T + db1) * self._act_grad(h, a)
        return da @ W2.T + a @ dW2.T + db2


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    milestones: tuple = ()
    lr_decay: float = 0.1
    seed: int = 0
    hidden: int | None = None
    activation: str = "relu"
    context_refresh: str = "epoch"
    diagonal_cov: bool = False

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        self.milestones = tuple(int(m) for m in self.milestones)
        if list(self.milestones) != sorted(self.milestones):
            raise ValueError("milestones must be sorted")
        if self.context_refresh not in ("epoch", "batch"):
            raise ValueError("context_refresh must be 'epoch' or 'batch'")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** sum(epoch >= m for m in self.milestones)


@dataclass
class TrainReport:
    class_errors: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    loss_variation: list = field(default_factory=list)
    delta_terms: list = field(default_factory=list)
    eval_errors: list = field(default_factory=list)

    @property
    def final_errors(self) -> np.ndarray:
        src = self.eval_errors if self.eval_errors else self.class_errors
        return np.asarray(src[-1])

    @property
    def gap(self) -> float:
        """Performance gap |E0 - E1| for two classes, max-minus-min otherwise."""
        e = self.final_errors
        return float(e.max() - e.min())

    def to_summary(self) -> dict:
        return {"epochs": len(self.class_errors),
                "final_class_errors": [float(v) for v in self.final_errors],
                "gap": self.gap,
                "final_train_loss": float(self.train_loss[-1]) if self.train_loss else None}


def sgd_step(params, grad, velocity, lr, momentum=0.9, weight_decay=0.0):
    """Heavy-ball SGD with L2 weight decay; returns the new (params, velocity)."""
    g = grad + weight_decay * params
    velocity = momentum * velocity + g
    return params - lr * velocity, velocity


def evaluate(model: Model, data: Dataset) -> np.ndarray:
    """Per-class error rate of the argmax decision (ties go to the lower index)."""
    logits, _ = model.forward(data.features)
    pred = np.argmax(logits, axis=1)
    wrong = np.bincount(data.labels, weights=(pred != data.labels).astype(np.float64),
                        minlength=data.n_classes)
    counts = data.class_counts()
    return np.divide(wrong, counts, out=np.zeros(data.n_classes), where=counts > 0)


class BatchSampler:
    """Fixed-size batches drawn from per-epoch permutations of one seeded stream."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n, self.batch_size, self.rng = n, min(batch_size, n), rng
        self.per_epoch = math.ceil(n / self.batch_size)
        self._perm, self._pos = None, 0

    def next(self) -> np.ndarray:
        if self._perm is None or self._pos >= self._perm.size:
            self._perm = self.rng.permutation(self.n)
            self._pos = 0
        idx = self._perm[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return idx


def sample_weights(labels, priors, enabled: bool):
    if not enabled:
        return None
    C = len(priors)
    return 1.0 / (C * np.asarray(priors)[labels])


def build_context(model: Model, data: Dataset, cfg: TrainConfig, version=0):
    return PerturbationContext.build(model.features(data.features), data.labels,
                                     model.classifier_weights, data.n_classes,
                                     diagonal=cfg.diagonal_cov, version=version)


def batch_loss_grad(model: Model, X, y, delta, weights=None, params=None):
    """Mean perturbed CE over a batch and its flat parameter gradient."""
    logits, cache = model.forward(X, params)
    loss, dZ, prob = perturbed_ce_batch(logits, y, delta)
    if weights is None:
        mean = float(loss.mean())
        dZ = dZ / y.size
    else:
        mean = float((weights * loss).mean())
        dZ = dZ * (weights / y.size)[:, None]
    if not math.isfinite(mean):
        raise TrainingDivergence(f"non-finite batch loss {mean}")
    return mean, model.backward(cache, dZ, params), cache, prob


def epoch_diagnostics(model: Model, data: Dataset, delta: np.ndarray,
                      ctx: PerturbationContext | None) -> tuple[list, dict]:
    """Relative loss change (l' - l)/l per class and per-class perturbation terms."""
    logits, _ = model.forward(data.features)
    C = data.n_classes
    base, _, _ = perturbed_ce_batch(logits, data.labels, np.zeros((C, C)))
    pert, _, _ = perturbed_ce_batch(logits, data.labels, delta)
    variation = []
    for c in range(C):
        m = data.labels == c
        l0 = base[m].mean()
        variation.append(float((pert[m].mean() - l0) / l0) if l0 > 0 else 0.0)
    terms = {}
    if ctx is not None:
        M = ctx.multipliers()
        off = ~np.eye(C, dtype=bool)
        for k, name in enumerate(("variance", "distance")):
            terms[name] = [float(M[c, off[c], k + 1].mean()) for c in range(C)]
    return variation, terms


def record_epoch(report: TrainReport, model, data, eval_data, delta, ctx, losses):
    report.class_errors.append(evaluate(model, data).tolist())
    if eval_data is not None:
        report.eval_errors.append(evaluate(model, eval_data).tolist())
    report.train_loss.append(float(np.mean(losses)) if losses else float("nan"))
    variation, terms = epoch_diagnostics(model, data, delta, ctx)
    report.loss_variation.append(variation)
    report.delta_terms.append(terms)


def train(data: Dataset, loss: LossSpec, cfg: TrainConfig, model: Model | None = None,
          eval_data: Dataset | None = None) -> tuple[Model, TrainReport]:
    """Minibatch training with a fixed perturbation recipe.

    The perturbation context is rebuilt from the current model at the start
    of every epoch (or every batch with ``context_refresh='batch'``).
    """
    if model is None:
        model = Model.init(data.d, data.n_classes, cfg.hidden, cfg.activation, seed=cfg.seed)
    model = model.copy()
    C = data.n_classes
    priors = data.class_counts() / data.n
    sampler = BatchSampler(data.n, cfg.batch_size, rng_stream(cfg.seed, "trainer", "batches"))
    velocity = np.zeros(model.size)
    report = TrainReport()
    version = 0
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        ctx = None
        if loss.needs_context:
            ctx = build_context(model, data, cfg, version)
            version += 1
        delta = loss.delta(ctx, priors, C)
        losses = []
        for _ in range(sampler.per_epoch):
            idx = sampler.next()
            if loss.needs_context and cfg.context_refresh == "batch":
                ctx = build_context(model, data, cfg, version)
                version += 1
                delta = loss.delta(ctx, priors, C)
            y = data.labels[idx]
            value, grad, _, _ = batch_loss_grad(model, data.features[idx], y, delta,
                                                sample_weights(y, priors, loss.reweight))
            losses.append(value)
            model.params, velocity = sgd_step(model.params, grad, velocity, lr,
                                              cfg.momentum, cfg.weight_decay)
        record_epoch(report, model, data, eval_data, delta, ctx, losses)
    return model, report
