"""Imbalance measures: proportions, variance ratios, centre distances, neighbourhood LDI."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .numerics import ClassStats, estimate_class_stats
from .taskgen import Dataset


class DegenerateDirectionError(ValueError):
    """The direction has zero length or zero mapped variance."""


def _direction(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64).ravel()
    if not np.any(w):
        raise DegenerateDirectionError("direction w must be non-zero")
    return w


def mapped_variance(w, cov) -> float:
    """``w^T Sigma w``."""
    w = _direction(w)
    return float(w @ np.asarray(cov, dtype=np.float64) @ w)


def projected_variance(w, cov) -> float:
    """``w^T Sigma w / w^T w``; invariant to rescaling ``w``."""
    w = _direction(w)
    u = w / np.linalg.norm(w)
    return float(u @ np.asarray(cov, dtype=np.float64) @ u)


def variance_imbalance_nu(cov_a, cov_b, w) -> float:
    """Ratio of the variances of two classes along ``w``.

    Computed on the unit direction so the value does not drift with ``||w||``.
    """
    num = projected_variance(w, cov_a)
    den = projected_variance(w, cov_b)
    if not den > 0:
        raise DegenerateDirectionError("second covariance has zero variance along w")
    return num / den


def distance_stats(centers) -> tuple[np.ndarray, float, np.ndarray]:
    """Centre distance matrix, its mean over unordered pairs, and per-class row means."""
    mu = np.asarray(centers, dtype=np.float64)
    if mu.ndim != 2 or mu.shape[0] < 2:
        raise ValueError("need at least two class centres")
    C = mu.shape[0]
    diff = mu[:, None, :] - mu[None, :, :]
    D = np.sqrt((diff * diff).sum(-1))
    iu = np.triu_indices(C, k=1)
    per_class = D.sum(axis=1) / (C - 1)
    return D, float(D[iu].mean()), per_class


def equidistance_penalty(centers) -> float:
    """Spread of squared pairwise centre distances around their mean ``u``."""
    mu = np.asarray(centers, dtype=np.float64)
    if mu.ndim != 2 or mu.shape[0] < 2:
        raise ValueError("need at least two class centres")
    iu = np.triu_indices(mu.shape[0], k=1)
    diff = mu[:, None, :] - mu[None, :, :]
    sq = (diff * diff).sum(-1)[iu]
    u = sq.mean()
    return float(((sq - u) ** 2).sum())


def ldi(n_nodes: int, edges, labels, n_classes: int | None = None):
    """Per-node fraction of different-label neighbours and its per-class mean.

    Isolated nodes score 0. A self-loop contributes one same-label neighbour.
    Classes with no nodes get NaN.
    """
    labels = np.asarray(labels, dtype=np.int64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    deg, diff = _kernels.ldi_counts(int(n_nodes), np.ascontiguousarray(edges),
                                    np.ascontiguousarray(labels))
    node = np.where(deg > 0, diff / np.maximum(deg, 1), 0.0)
    C = int(labels.max()) + 1 if n_classes is None else n_classes
    counts = np.bincount(labels, minlength=C)
    sums = np.bincount(labels, weights=node, minlength=C)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return node, per_class


def dataset_ldi(data: Dataset):
    if data.edges is None:
        raise ValueError("dataset has no adjacency")
    return ldi(data.n, data.edges, data.labels, data.n_classes)


@dataclass
class ImbalanceReport:
    proportions: np.ndarray
    variance_nu: np.ndarray          # nu[y, c] along the pair direction, 1 on the diagonal
    mapped_var: np.ndarray           # mapped_var[y, c] = w_yc^T Sigma_y w_yc
    projected_var: np.ndarray
    distances: np.ndarray
    mean_distance: float
    per_class_distance: np.ndarray
    equidistance: float
    ldi_per_class: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def C(self) -> int:
        return len(self.proportions)

    def to_dict(self) -> dict:
        out = {
            "proportions": self.proportions.tolist(),
            "variance_nu": self.variance_nu.tolist(),
            "mapped_var": self.mapped_var.tolist(),
            "projected_var": self.projected_var.tolist(),
            "distances": self.distances.tolist(),
            "mean_distance": self.mean_distance,
            "per_class_distance": self.per_class_distance.tolist(),
            "equidistance_penalty": self.equidistance,
        }
        if self.ldi_per_class is not None:
            out["ldi_per_class"] = [None if np.isnan(v) else float(v) for v in self.ldi_per_class]
        out.update(self.extras)
        return out

    CSV_FIELDS = ("y", "c", "pi_y", "pi_c", "nu", "mapped_var_y", "projected_var_y",
                  "distance", "log_mean_over_distance", "ldi_y")

    def csv_rows(self) -> list[list]:
        rows = []
        for y in range(self.C):
            for c in range(self.C):
                if y == c:
                    continue
                dist = self.distances[y, c]
                ratio = float(np.log(self.mean_distance / dist)) if dist > 0 else float("inf")
                ldi_y = "" if self.ldi_per_class is None else repr(float(self.ldi_per_class[y]))
                rows.append([y, c, repr(float(self.proportions[y])),
                             repr(float(self.proportions[c])), repr(float(self.variance_nu[y, c])),
                             repr(float(self.mapped_var[y, c])),
                             repr(float(self.projected_var[y, c])), repr(float(dist)),
                             repr(ratio), ldi_y])
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_FIELDS)
        writer.writerows(self.csv_rows())
        return buf.getvalue()


def report(source, directions=None, diagonal: bool = False) -> ImbalanceReport:
    """Aggregate all measures for a ``Dataset`` or a list of ``ClassStats``.

    ``directions[y, c]`` overrides the per-pair direction, which otherwise is
    ``mu_y - mu_c``.
    """
    ldi_pc = None
    if isinstance(source, Dataset):
        counts = source.class_counts()
        if np.count_nonzero(counts) < 2:
            raise ValueError("dataset must contain at least two classes")
        stats = estimate_class_stats(source.features, source.labels, source.n_classes,
                                     diagonal=diagonal)
        if source.edges is not None:
            _, ldi_pc = dataset_ldi(source)
    else:
        stats = list(source)
        if not all(isinstance(s, ClassStats) for s in stats):
            raise TypeError("expected a Dataset or a list of ClassStats")
        if len(stats) < 2:
            raise ValueError("need at least two classes")
    C = len(stats)
    mu = np.stack([s.mean for s in stats])
    nu = np.ones((C, C))
    mapped = np.zeros((C, C))
    proj = np.zeros((C, C))
    for y in range(C):
        for c in range(C):
            if y == c:
                continue
            w = mu[y] - mu[c] if directions is None else np.asarray(directions)[y, c]
            mapped[y, c] = mapped_variance(w, stats[y].cov)
            proj[y, c] = projected_variance(w, stats[y].cov)
            nu[y, c] = variance_imbalance_nu(stats[y].cov, stats[c].cov, w)
    D, dbar, per_class = distance_stats(mu)
    return ImbalanceReport(np.array([s.prior for s in stats]), nu, mapped, proj, D, dbar,
                           per_class, equidistance_penalty(mu), ldi_pc)
