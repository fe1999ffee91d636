"""Synthetic imbalance tasks with known generative parameters.

Label convention for the binary tasks: class ``+1`` is index 0
and class ``-1`` is index 1. For the three-class distance task the labels
0, 1, 2 keep their meaning (centers theta, 0, -theta).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import ClassVar

import numpy as np

from .numerics import ClassStats, sample_mvn


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    edges: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("features must be a 2-D array")
        y = np.asarray(self.labels, dtype=np.int64)
        if y.shape != (X.shape[0],):
            raise ValueError("labels length must equal the number of feature rows")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError(f"labels must lie in 0..{self.n_classes - 1}")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        if self.edges is not None:
            E = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
            if E.size and (E.min() < 0 or E.max() >= X.shape[0]):
                raise ValueError("edge references a node index out of range")
            object.__setattr__(self, "edges", E)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.n_classes)


class TaskSpec:
    variant: ClassVar[str]
    per_class: ClassVar[bool] = True

    def to_dict(self) -> dict:
        out = {"variant": self.variant}
        for k, v in asdict(self).items():
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    def _check_common(self):
        if getattr(self, "d", 1) < 1:
            raise ValueError("d must be >= 1")
        if getattr(self, "eta", 1.0) <= 0:
            raise ValueError("eta must be > 0")
        if getattr(self, "sigma", 1.0) <= 0:
            raise ValueError("sigma must be > 0")


@dataclass(frozen=True)
class BinaryVariance(TaskSpec):
    """Two classes at +-theta; class +1 has std K*sigma, class -1 std sigma."""
    variant: ClassVar[str] = "BinaryVariance"
    d: int = 2
    eta: float = 1.0
    sigma: float = 1.0
    K: float = 2.0

    def __post_init__(self):
        self._check_common()
        if self.K < 1:
            raise ValueError("K must be >= 1")


@dataclass(frozen=True)
class ThreeClassDistance(TaskSpec):
    variant: ClassVar[str] = "ThreeClassDistance"
    d: int = 2
    eta: float = 4.0
    sigma: float = 1.0

    def __post_init__(self):
        self._check_common()


@dataclass(frozen=True)
class FeatureNoise(TaskSpec):
    variant: ClassVar[str] = "FeatureNoise"
    d: int = 2
    eta: float = 1.0
    sigma: float = 1.0
    eps1: float = 0.0
    eps2: float = 0.0

    def __post_init__(self):
        self._check_common()


@dataclass(frozen=True)
class MixedPropVar(TaskSpec):
    """Proportion 1:V and std ratio 1:K between class +1 and class -1.

    ``K`` is a ratio of standard deviations: class -1 has std ``K*sigma``.
    Sizes are drawn, class -1 with probability V/(1+V).
    """
    variant: ClassVar[str] = "MixedPropVar"
    per_class: ClassVar[bool] = False
    d: int = 2
    eta: float = 1.0
    sigma: float = 1.0
    K: float = 2.0
    V: float = 2.0

    def __post_init__(self):
        self._check_common()
        if self.K < 1 or self.V < 1:
            raise ValueError("K and V must be >= 1")


@dataclass(frozen=True)
class LocalTwoCluster(TaskSpec):
    """Class +1 at -4*1; class -1 splits into sub-clusters at 1*1 (weight alpha) and 3*1."""
    variant: ClassVar[str] = "LocalTwoCluster"
    d: int = 2
    sigma: float = 1.0
    alpha: float = 0.5
    plus_center: float = -4.0
    near_center: float = 1.0
    far_center: float = 3.0

    def __post_init__(self):
        self._check_common()
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")

    def subcluster_means(self) -> tuple[np.ndarray, np.ndarray]:
        one = np.ones(self.d)
        return self.near_center * one, self.far_center * one


@dataclass(frozen=True)
class LongTailMulticlass(TaskSpec):
    """C Gaussian classes at eta*e_c with geometric class proportions.

    ``class_sigma`` optionally multiplies sigma per class to add variance
    imbalance. Requires d >= C.
    """
    variant: ClassVar[str] = "LongTailMulticlass"
    per_class: ClassVar[bool] = False
    C: int = 10
    d: int = 10
    eta: float = 1.0
    sigma: float = 1.0
    imbalance_ratio: float = 100.0
    class_sigma: tuple | None = None

    def __post_init__(self):
        self._check_common()
        if self.C < 2:
            raise ValueError("C must be >= 2")
        if self.d < self.C:
            raise ValueError("LongTailMulticlass needs d >= C")
        if self.imbalance_ratio < 1:
            raise ValueError("imbalance_ratio must be >= 1")
        if self.class_sigma is not None:
            object.__setattr__(self, "class_sigma", tuple(float(s) for s in self.class_sigma))
            if len(self.class_sigma) != self.C or min(self.class_sigma) <= 0:
                raise ValueError("class_sigma needs C positive entries")

    def proportions(self) -> np.ndarray:
        k = np.arange(self.C)
        w = self.imbalance_ratio ** (-k / (self.C - 1))
        return w / w.sum()

    def counts(self, n_total: int) -> np.ndarray:
        return np.maximum(1, np.rint(n_total * self.proportions())).astype(np.int64)

    def stds(self) -> np.ndarray:
        scale = np.ones(self.C) if self.class_sigma is None else np.asarray(self.class_sigma)
        return self.sigma * scale


VARIANTS = {cls.variant: cls for cls in
            (BinaryVariance, ThreeClassDistance, FeatureNoise, MixedPropVar, LocalTwoCluster,
             LongTailMulticlass)}


def spec_from_dict(cfg: dict) -> TaskSpec:
    cfg = dict(cfg)
    name = cfg.pop("variant", None)
    if name not in VARIANTS:
        raise ValueError(f"unknown task variant {name!r}; expected one of {sorted(VARIANTS)}")
    cls = VARIANTS[name]
    allowed = {f.name for f in fields(cls)}
    unknown = set(cfg) - allowed
    if unknown:
        raise ValueError(f"unknown keys for {name}: {sorted(unknown)}")
    return cls(**cfg)


def n_classes(spec: TaskSpec) -> int:
    if isinstance(spec, ThreeClassDistance):
        return 3
    if isinstance(spec, LongTailMulticlass):
        return spec.C
    return 2


def _iso(var: float, d: int) -> np.ndarray:
    return var * np.eye(d)


def true_stats(spec: TaskSpec) -> list[ClassStats]:
    """Population mean, covariance and prior of every class."""
    if isinstance(spec, LongTailMulticlass):
        pi = spec.proportions()
        s = spec.stds()
        out = []
        for c in range(spec.C):
            mu = np.zeros(spec.d)
            mu[c] = spec.eta
            out.append(ClassStats(mu, _iso(s[c] ** 2, spec.d), float(pi[c])))
        return out
    if isinstance(spec, LocalTwoCluster):
        one = np.ones(spec.d)
        m_near, m_far = spec.subcluster_means()
        a = spec.alpha
        mix_mean = a * m_near + (1 - a) * m_far
        diff = m_near - m_far
        mix_cov = _iso(spec.sigma ** 2, spec.d) + a * (1 - a) * np.outer(diff, diff)
        return [ClassStats(spec.plus_center * one, _iso(spec.sigma ** 2, spec.d), 0.5),
                ClassStats(mix_mean, mix_cov, 0.5)]
    theta = spec.eta * np.ones(spec.d)
    if isinstance(spec, ThreeClassDistance):
        cov = _iso(spec.sigma ** 2, spec.d)
        return [ClassStats(theta, cov, 1 / 3), ClassStats(np.zeros(spec.d), cov.copy(), 1 / 3),
                ClassStats(-theta, cov.copy(), 1 / 3)]
    if isinstance(spec, BinaryVariance):
        return [ClassStats(theta, _iso((spec.K * spec.sigma) ** 2, spec.d), 0.5),
                ClassStats(-theta, _iso(spec.sigma ** 2, spec.d), 0.5)]
    if isinstance(spec, FeatureNoise):
        return [ClassStats(theta, _iso(spec.sigma ** 2 + spec.eps1 ** 2, spec.d), 0.5),
                ClassStats(-theta, _iso(spec.sigma ** 2 + spec.eps2 ** 2, spec.d), 0.5)]
    if isinstance(spec, MixedPropVar):
        p_minus = spec.V / (1 + spec.V)
        return [ClassStats(theta, _iso(spec.sigma ** 2, spec.d), 1 - p_minus),
                ClassStats(-theta, _iso((spec.K * spec.sigma) ** 2, spec.d), p_minus)]
    raise TypeError(f"unsupported spec {type(spec).__name__}")


def _assemble(blocks: list[np.ndarray], rng: np.random.Generator, C: int) -> Dataset:
    X = np.concatenate(blocks, axis=0)
    y = np.concatenate([np.full(b.shape[0], c, dtype=np.int64) for c, b in enumerate(blocks)])
    perm = rng.permutation(X.shape[0])
    return Dataset(X[perm], y[perm], C)


def generate(spec: TaskSpec, n: int, rng: np.random.Generator) -> Dataset:
    """Sample a dataset.

    ``n`` is a per-class count for the equal-prior tasks and a total count
    for ``MixedPropVar`` and ``LongTailMulticlass``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    C = n_classes(spec)
    if isinstance(spec, LocalTwoCluster):
        one = np.ones(spec.d)
        cov = _iso(spec.sigma ** 2, spec.d)
        plus = sample_mvn(spec.plus_center * one, cov, n, rng)
        near = rng.random(n) < spec.alpha
        m_near, m_far = spec.subcluster_means()
        minus = np.where(near[:, None], m_near, m_far) + spec.sigma * rng.standard_normal((n, spec.d))
        return _assemble([plus, minus], rng, C)
    stats = true_stats(spec)
    if isinstance(spec, MixedPropVar):
        counts = np.bincount((rng.random(n) < stats[1].prior).astype(np.int64), minlength=2)
    elif isinstance(spec, LongTailMulticlass):
        counts = spec.counts(n)
    else:
        counts = np.full(C, n, dtype=np.int64)
    blocks = [sample_mvn(s.mean, s.cov, int(k), rng) for s, k in zip(stats, counts)]
    return _assemble(blocks, rng, C)


def toy_graph(n_per_class: int, heterophily, rng: np.random.Generator,
              mean_degree: float = 10.0) -> Dataset:
    """Random labelled graph with controllable expected per-class LDI.

    Every node pair is an independent Bernoulli edge. Cross-class pairs
    between two classes with positive heterophily share one probability q;
    same-class pairs of class c use the probability that makes the expected
    cross-class fraction of a class-c node equal ``heterophily[c]``.
    """
    h = np.asarray(heterophily, dtype=np.float64)
    C = h.shape[0]
    if C < 2:
        raise ValueError("need at least two classes")
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if h.min() < 0 or h.max() > 1:
        raise ValueError("heterophily values must lie in [0, 1]")
    n = n_per_class
    active = h > 0
    n_active = int(active.sum())
    if n_active == 1:
        raise ValueError("a single heterophilous class has no cross-class partner")
    q = min(1.0, mean_degree / (n * max(n_active - 1, 1))) if n_active else 0.0
    cross_deg = n * q * max(n_active - 1, 0)
    p_same = np.empty(C)
    for c in range(C):
        if h[c] == 0:
            p_same[c] = min(1.0, mean_degree / n)
        else:
            p_same[c] = min(1.0, cross_deg * (1 - h[c]) / (h[c] * n))

    labels = np.repeat(np.arange(C), n)
    N = labels.size
    iu, ju = np.triu_indices(N, k=1)
    a, b = labels[iu], labels[ju]
    prob = np.where(a == b, p_same[a], np.where(active[a] & active[b], q, 0.0))
    keep = rng.random(iu.size) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)

    feats = np.eye(C)[labels] + 0.5 * rng.standard_normal((N, C))
    return Dataset(feats, labels, C, edges=edges)
