"""Class-wise logit perturbation losses.

A perturbation is a C x C matrix ``delta``: a sample of class y has its
logit vector shifted by ``delta[y]`` before the softmax cross-entropy.
Every loss in the family (LA, ISDA, NISDA, distance-only, MetaLAD) is a
recipe for that matrix.

The perturbation context (class statistics, classifier rows, centre
distances) is treated as a constant inside a step; gradients with respect
to the model do not flow through it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .numerics import ClassStats, estimate_class_stats

DIST_LOG_CLIP = 20.0
TERM_NAMES = ("proportion", "variance", "distance")


@dataclass
class PerturbationParams:
    """MetaLAD hyper-parameters, either three shared scalars or per ordered pair.

    ``values`` has shape (3,) in global mode and (C, C, 3) in per-pair mode;
    diagonal entries of the per-pair array are unused and kept at zero.
    """
    values: np.ndarray
    per_pair: bool = False

    def __post_init__(self):
        self.values = np.array(self.values, dtype=np.float64)
        if self.per_pair:
            if self.values.ndim != 3 or self.values.shape[0] != self.values.shape[1] \
                    or self.values.shape[2] != 3:
                raise ValueError("per-pair values must have shape (C, C, 3)")
            idx = np.arange(self.values.shape[0])
            self.values[idx, idx, :] = 0.0
        elif self.values.shape != (3,):
            raise ValueError("global values must have shape (3,)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("perturbation parameters must be finite")

    @classmethod
    def global_lambda(cls, lam0=0.0, lam1=0.0, lam2=0.0):
        return cls(np.array([lam0, lam1, lam2]), per_pair=False)

    @classmethod
    def pairwise(cls, C: int, init=(1.0, 1.0, 1.0)):
        vals = np.broadcast_to(np.asarray(init, dtype=np.float64), (C, C, 3)).copy()
        return cls(vals, per_pair=True)

    @property
    def n_classes(self) -> int | None:
        return self.values.shape[0] if self.per_pair else None

    def expand(self, C: int) -> np.ndarray:
        """Per-pair (C, C, 3) view with zero diagonal."""
        if self.per_pair:
            if self.values.shape[0] != C:
                raise ValueError(f"parameters hold {self.values.shape[0]} classes, context has {C}")
            return self.values
        out = np.broadcast_to(self.values, (C, C, 3)).copy()
        idx = np.arange(C)
        out[idx, idx, :] = 0.0
        return out

    def reduce(self, pair_grad: np.ndarray) -> np.ndarray:
        """Fold a (C, C, 3) per-pair gradient into the shape of ``values``."""
        if self.per_pair:
            g = pair_grad.copy()
            idx = np.arange(g.shape[0])
            g[idx, idx, :] = 0.0
            return g
        return pair_grad.sum(axis=(0, 1))

    def free_mask(self) -> np.ndarray:
        if not self.per_pair:
            return np.ones(3, dtype=bool)
        C = self.values.shape[0]
        mask = np.ones((C, C, 3), dtype=bool)
        mask[np.arange(C), np.arange(C), :] = False
        return mask

    def n_free(self) -> int:
        return int(self.free_mask().sum())

    def copy(self) -> "PerturbationParams":
        return PerturbationParams(self.values.copy(), self.per_pair)

    def with_values(self, values) -> "PerturbationParams":
        return PerturbationParams(values, self.per_pair)


@dataclass
class PerturbationContext:
    """Class statistics in feature space plus the current classifier rows."""
    stats: list[ClassStats]
    weights: np.ndarray
    version: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, features, labels, weights, n_classes=None, diagonal=False, version=0):
        W = np.asarray(weights, dtype=np.float64)
        C = W.shape[0] if n_classes is None else n_classes
        return cls(estimate_class_stats(features, labels, C, diagonal=diagonal), W, version)

    @classmethod
    def from_stats(cls, stats, weights, version=0):
        return cls(list(stats), np.asarray(weights, dtype=np.float64), version)

    @property
    def C(self) -> int:
        return len(self.stats)

    @property
    def priors(self) -> np.ndarray:
        return np.array([s.prior for s in self.stats])

    @property
    def centers(self) -> np.ndarray:
        return np.stack([s.mean for s in self.stats])

    def weight_diffs(self) -> np.ndarray:
        """``dW[y, c] = w_y - w_c``."""
        W = self.weights
        return W[:, None, :] - W[None, :, :]

    def mapped_variance(self) -> np.ndarray:
        """``dW_yc^T Sigma_y dW_yc`` for every ordered pair."""
        if "mapped" not in self._cache:
            dW = self.weight_diffs()
            covs = np.stack([s.cov for s in self.stats])
            self._cache["mapped"] = np.einsum("yck,ykl,ycl->yc", dW, covs, dW)
        return self._cache["mapped"]

    def projected_variance(self) -> np.ndarray:
        """Mapped variance over ``||dW_yc||^2``; zero where the rows coincide."""
        dW = self.weight_diffs()
        nrm = np.einsum("yck,yck->yc", dW, dW)
        out = np.zeros_like(nrm)
        ok = nrm > 0
        out[ok] = self.mapped_variance()[ok] / nrm[ok]
        return out

    def distances(self) -> tuple[np.ndarray, float]:
        """Centre distance matrix and its mean over unordered pairs."""
        mu = self.centers
        D = np.sqrt(np.maximum(((mu[:, None, :] - mu[None, :, :]) ** 2).sum(-1), 0.0))
        iu = np.triu_indices(self.C, k=1)
        return D, float(D[iu].mean())

    def multipliers(self) -> np.ndarray:
        """(C, C, 3) array of the proportion, variance and distance terms."""
        C = self.C
        pi = self.priors
        if np.any(pi <= 0):
            raise ValueError("class proportions must be positive")
        logpi = np.log(pi)
        m1 = logpi[:, None] - logpi[None, :]
        m2 = self.projected_variance()
        D, dbar = self.distances()
        with np.errstate(divide="ignore"):
            m3 = np.where(D > 0, np.log(dbar / np.where(D > 0, D, 1.0)), DIST_LOG_CLIP)
        m3 = np.clip(m3, -DIST_LOG_CLIP, DIST_LOG_CLIP)
        M = np.stack([m1, m2, m3], axis=-1)
        idx = np.arange(C)
        M[idx, idx, :] = 0.0
        return M


def _zero_diag(mat: np.ndarray) -> np.ndarray:
    idx = np.arange(mat.shape[0])
    mat = mat.copy()
    mat[idx, idx] = 0.0
    return mat


def perturbed_ce(logits, y: int, delta_row):
    """Loss and logit-gradient for one sample perturbed by ``delta_row``."""
    z = np.asarray(logits, dtype=np.float64) + np.asarray(delta_row, dtype=np.float64)
    z = z - z.max()
    p = np.exp(z)
    s = p.sum()
    p /= s
    grad = p.copy()
    grad[y] -= 1.0
    return float(np.log(s) - z[y]), grad


def perturbed_ce_batch(logits, labels, delta):
    """Vector of per-sample losses, logit gradients and perturbed softmax."""
    return _kernels.perturbed_ce_batch(logits, labels, delta)


def la_delta(priors, lam: float) -> np.ndarray:
    """Logit adjustment: every logit c is shifted by ``lam * log pi_c``."""
    pi = np.asarray(priors, dtype=np.float64)
    if np.any(pi <= 0):
        raise ValueError("logit adjustment needs strictly positive proportions")
    return np.broadcast_to(lam * np.log(pi), (pi.size, pi.size)).copy()


def isda_delta(ctx: PerturbationContext, lam: float) -> np.ndarray:
    return _zero_diag(lam * ctx.mapped_variance())


def nisda_delta(ctx: PerturbationContext, lam: float) -> np.ndarray:
    return _zero_diag(lam * ctx.projected_variance())


def distance_delta(ctx: PerturbationContext, lam: float) -> np.ndarray:
    return _zero_diag(lam * ctx.multipliers()[..., 2])


def metalad_delta(ctx: PerturbationContext, omega: PerturbationParams,
                  multipliers: np.ndarray | None = None) -> np.ndarray:
    M = ctx.multipliers() if multipliers is None else multipliers
    return (omega.expand(ctx.C) * M).sum(axis=-1)


def omega_pair_grad(prob, labels, M, sample_weight=None) -> np.ndarray:
    """Per-pair gradient of the mean loss w.r.t. the MetaLAD lambdas.

    For a sample of class y, d loss / d lambda_{y c k} = p_c * M[y, c, k].
    """
    prob = np.asarray(prob)
    n, C = prob.shape
    w = np.full(n, 1.0 / n) if sample_weight is None else np.asarray(sample_weight) / n
    P = np.zeros((C, C))
    np.add.at(P, labels, prob * w[:, None])
    P[np.arange(C), np.arange(C)] = 0.0
    return P[..., None] * M


def loss_gradients_wrt_omega(logits, labels, ctx: PerturbationContext,
                             omega: PerturbationParams, multipliers=None) -> np.ndarray:
    """Analytic gradient of the mean MetaLAD batch loss, shaped like ``omega.values``."""
    M = ctx.multipliers() if multipliers is None else multipliers
    delta = metalad_delta(ctx, omega, M)
    _, _, prob = perturbed_ce_batch(logits, labels, delta)
    return omega.reduce(omega_pair_grad(prob, labels, M))


LOSS_KINDS = ("ce", "la", "isda", "nisda", "distance", "metalad")


@dataclass
class LossSpec:
    """Which perturbation to train with.

    ``lam`` drives the single-parameter losses; ``omega`` fixes the MetaLAD
    hyper-parameters when the loss is not meta-learned. ``reweight`` scales
    each sample by ``1 / (C * pi_y)``.
    """
    kind: str = "ce"
    lam: float = 1.0
    omega: PerturbationParams | None = None
    reweight: bool = False

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")

    @property
    def needs_context(self) -> bool:
        return self.kind not in ("ce", "la")

    def delta(self, ctx: PerturbationContext | None, priors, C: int) -> np.ndarray:
        if self.kind == "ce":
            return np.zeros((C, C))
        if self.kind == "la":
            return la_delta(priors, self.lam)
        if ctx is None:
            raise ValueError(f"loss {self.kind!r} needs a perturbation context")
        if self.kind == "isda":
            return isda_delta(ctx, self.lam)
        if self.kind == "nisda":
            return nisda_delta(ctx, self.lam)
        if self.kind == "distance":
            return distance_delta(ctx, self.lam)
        omega = self.omega if self.omega is not None else PerturbationParams.pairwise(C)
        return metalad_delta(ctx, omega)
