"""Bilevel MetaLAD training: warm-up, then temporary update / lambda update / real update."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .losses import (PerturbationParams, metalad_delta, omega_pair_grad, perturbed_ce_batch)
from .numerics import rng_stream
from .taskgen import Dataset
from .trainer import (BatchSampler, Model, TrainConfig, TrainingDivergence, TrainReport,
                      batch_loss_grad, build_context, record_epoch, sgd_step)

log = logging.getLogger(__name__)

HYPERGRAD_METHODS = ("unrolled", "fd")
META_LOSSES = ("perturbed", "ce")


@dataclass
class MetaConfig:
    """Outer-loop settings. ``T1``/``T2`` count optimisation steps (batches)."""
    lr_meta: float = 100.0
    meta_batch: int | None = None   # None: the whole meta set
    T1: int = 200
    T2: int = 600
    omega_init: tuple = (1.0, 1.0, 1.0)
    per_pair: bool = True
    hypergrad: str = "unrolled"
    meta_loss: str = "ce"
    fd_step: float = 1e-5
    k_per_class: int = 10
    frozen_terms: tuple = ()
    allow_imbalanced_meta: bool = False

    def __post_init__(self):
        if not 0 <= self.T1 <= self.T2:
            raise ValueError("need 0 <= T1 <= T2")
        if self.meta_batch is not None and self.meta_batch < 1:
            raise ValueError("meta_batch must be >= 1")
        if self.lr_meta < 0:
            raise ValueError("lr_meta must be >= 0")
        if self.hypergrad not in HYPERGRAD_METHODS:
            raise ValueError(f"hypergrad must be one of {HYPERGRAD_METHODS}")
        if self.meta_loss not in META_LOSSES:
            raise ValueError(f"meta_loss must be one of {META_LOSSES}")
        self.omega_init = tuple(float(v) for v in self.omega_init)
        self.frozen_terms = tuple(int(k) for k in self.frozen_terms)
        if any(k not in (0, 1, 2) for k in self.frozen_terms):
            raise ValueError("frozen_terms holds term indices 0, 1, 2")

    def initial_omega(self, C: int) -> PerturbationParams:
        init = np.array(self.omega_init)
        init[list(self.frozen_terms)] = 0.0
        if self.per_pair:
            return PerturbationParams.pairwise(C, init)
        return PerturbationParams(init, per_pair=False)

    def update_mask(self, omega: PerturbationParams) -> np.ndarray:
        mask = omega.free_mask().copy()
        for k in self.frozen_terms:
            mask[..., k] = False
        return mask


@dataclass
class MetaState:
    model: Model
    omega: PerturbationParams
    velocity: np.ndarray
    step: int = 0
    trajectory: list = field(default_factory=list)


def make_meta_set(data: Dataset, k_per_class: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``k_per_class`` samples per class drawn without replacement."""
    idx = []
    for c in range(data.n_classes):
        members = np.flatnonzero(data.labels == c)
        if members.size < k_per_class:
            raise ValueError(f"class {c} has {members.size} samples, need {k_per_class}")
        idx.append(rng.choice(members, size=k_per_class, replace=False))
    return np.sort(np.concatenate(idx))


def unrolled_hypergradient(theta, omega, eta1, inner_grad, cross, outer_grad):
    """Exact one-step unrolled gradient of an outer loss through theta_hat(omega).

    ``theta_hat = theta - eta1 * inner_grad(theta, omega)``;
    ``outer_grad(theta_hat, omega)`` returns the outer gradients w.r.t. theta
    and (directly) omega; ``cross(theta, omega, v)`` returns
    ``v^T d inner_grad / d omega``.
    """
    theta_hat = theta - eta1 * inner_grad(theta, omega)
    g_theta, g_omega = outer_grad(theta_hat, omega)
    return g_omega - eta1 * cross(theta, omega, g_theta)


class _Problem:
    """Closures for one meta step on a fixed train batch and meta batch."""

    def __init__(self, model: Model, M, Xb, yb, Xm, ym, omega: PerturbationParams,
                 meta_loss: str):
        self.model, self.M = model, M
        self.Xb, self.yb, self.Xm, self.ym = Xb, yb, Xm, ym
        self.template = omega
        self.meta_loss = meta_loss
        self.C = M.shape[0]

    def _omega(self, values):
        return self.template.with_values(values)

    def delta(self, values):
        return (self._omega(values).expand(self.C) * self.M).sum(axis=-1)

    def inner_grad(self, theta, values):
        _, g, _, _ = batch_loss_grad(self.model, self.Xb, self.yb, self.delta(values), params=theta)
        return g

    def cross(self, theta, values, v):
        logits, cache = self.model.forward(self.Xb, theta)
        _, _, p = perturbed_ce_batch(logits, self.yb, self.delta(values))
        u = self.model.jvp(cache, v, theta)
        s = p * u - p * (p * u).sum(axis=1, keepdims=True)
        return self.template.reduce(omega_pair_grad(s, self.yb, self.M))

    def outer_grad(self, theta_hat, values):
        delta = self.delta(values) if self.meta_loss == "perturbed" else np.zeros((self.C, self.C))
        logits, cache = self.model.forward(self.Xm, theta_hat)
        _, dZ, p = perturbed_ce_batch(logits, self.ym, delta)
        g_theta = self.model.backward(cache, dZ / self.ym.size, theta_hat)
        if self.meta_loss == "perturbed":
            g_omega = self.template.reduce(omega_pair_grad(p, self.ym, self.M))
        else:
            g_omega = np.zeros_like(values)
        return g_theta, g_omega

    def meta_objective(self, theta, values, eta1):
        theta_hat = temp_update(self.model, theta, self.Xb, self.yb, self.delta(values), eta1)
        delta = self.delta(values) if self.meta_loss == "perturbed" else np.zeros((self.C, self.C))
        logits, _ = self.model.forward(self.Xm, theta_hat)
        loss, _, _ = perturbed_ce_batch(logits, self.ym, delta)
        return float(loss.mean())


def temp_update(model: Model, theta, X, y, delta, eta1) -> np.ndarray:
    """theta_hat = theta - eta1 * mean batch gradient; ``theta`` is left untouched."""
    if eta1 == 0:
        return np.array(theta, copy=True)
    _, g, _, _ = batch_loss_grad(model, X, y, delta, params=theta)
    return theta - eta1 * g


def hypergradient(model: Model, theta, omega: PerturbationParams, M, train_batch, meta_batch,
                  eta1: float, method: str = "unrolled", meta_loss: str = "ce",
                  fd_step: float = 1e-5) -> np.ndarray:
    """Gradient of the meta-batch loss at theta_hat(omega) w.r.t. omega's values."""
    (Xb, yb), (Xm, ym) = train_batch, meta_batch
    prob = _Problem(model, M, Xb, yb, Xm, ym, omega, meta_loss)
    vals = omega.values
    if method == "unrolled":
        g = unrolled_hypergradient(theta, vals, eta1, prob.inner_grad, prob.cross,
                                   prob.outer_grad)
    elif method == "fd":
        g = np.zeros_like(vals)
        mask = omega.free_mask()
        for pos in zip(*np.nonzero(mask)):
            up, dn = vals.copy(), vals.copy()
            up[pos] += fd_step
            dn[pos] -= fd_step
            g[pos] = (prob.meta_objective(theta, up, eta1)
                      - prob.meta_objective(theta, dn, eta1)) / (2 * fd_step)
    else:
        raise ValueError(f"unknown hypergradient method {method!r}")
    if not np.all(np.isfinite(g)):
        raise TrainingDivergence("non-finite hypergradient")
    return g


def meta_objective(model: Model, theta, omega: PerturbationParams, M, train_batch, meta_batch,
                   eta1: float, meta_loss: str = "ce") -> float:
    (Xb, yb), (Xm, ym) = train_batch, meta_batch
    return _Problem(model, M, Xb, yb, Xm, ym, omega, meta_loss).meta_objective(theta, omega.values,
                                                                               eta1)


def run_metalad(data: Dataset, meta_idx, cfg: TrainConfig, mcfg: MetaConfig,
                model: Model | None = None, eval_data: Dataset | None = None):
    """Train with meta-learned perturbation hyper-parameters.

    Steps ``0..T1-1`` are plain CE; steps ``T1..T2-1`` run the temporary
    update, the lambda update on a meta batch, and the real momentum update
    with the refreshed lambdas. Returns ``(model, report, trajectory)``
    where the trajectory holds ``(step, omega values)`` after every step.
    """
    meta_idx = np.asarray(meta_idx, dtype=np.int64)
    meta = data.subset(meta_idx)
    counts = meta.class_counts()
    if counts.min() != counts.max():
        msg = f"meta set is not class-balanced: {counts.tolist()}"
        if not mcfg.allow_imbalanced_meta:
            raise ValueError(msg)
        log.warning(msg)
    m_batch = meta.n if mcfg.meta_batch is None else mcfg.meta_batch
    if m_batch > meta.n:
        raise ValueError(f"meta batch {m_batch} exceeds the meta set size {meta.n}")
    C = data.n_classes
    if model is None:
        model = Model.init(data.d, C, cfg.hidden, cfg.activation, seed=cfg.seed)
    state = MetaState(model.copy(), mcfg.initial_omega(C), np.zeros(model.size))
    sampler = BatchSampler(data.n, cfg.batch_size, rng_stream(cfg.seed, "trainer", "batches"))
    meta_sampler = BatchSampler(meta.n, m_batch, rng_stream(cfg.seed, "meta", "batches"))
    mask = mcfg.update_mask(state.omega)
    report = TrainReport()
    m = state.model
    ctx, M = None, None
    delta = np.zeros((C, C))
    losses = []
    version = 0
    for t in range(mcfg.T2):
        epoch = t // sampler.per_epoch
        lr = cfg.lr_at(epoch)
        idx = sampler.next()
        Xb, yb = data.features[idx], data.labels[idx]
        if t < mcfg.T1:
            delta = np.zeros((C, C))
        else:
            if ctx is None or cfg.context_refresh == "batch" or t % sampler.per_epoch == 0:
                ctx = build_context(m, data, cfg, version)
                M = ctx.multipliers()
                version += 1
            jdx = meta_sampler.next()
            g = hypergradient(m, m.params, state.omega, M, (Xb, yb),
                              (meta.features[jdx], meta.labels[jdx]), lr, mcfg.hypergrad,
                              mcfg.meta_loss, mcfg.fd_step)
            vals = state.omega.values - mcfg.lr_meta * np.where(mask, g, 0.0)
            state.omega = state.omega.with_values(vals)
            delta = metalad_delta(ctx, state.omega, M)
        value, grad, _, _ = batch_loss_grad(m, Xb, yb, delta)
        losses.append(value)
        m.params, state.velocity = sgd_step(m.params, grad, state.velocity, lr, cfg.momentum,
                                            cfg.weight_decay)
        state.step = t + 1
        state.trajectory.append((t, state.omega.values.copy()))
        if (t + 1) % sampler.per_epoch == 0 or t + 1 == mcfg.T2:
            record_epoch(report, m, data, eval_data, delta, ctx, losses)
            losses = []
    return m, report, state.trajectory
