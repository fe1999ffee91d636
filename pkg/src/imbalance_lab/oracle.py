"""Reference classifiers and exact per-class errors for the synthetic tasks.

All binary rules predict class 0 (label ``+1``) when
``w^T x + b > 0``. The statistic ``1^T x`` of a class centred at
``+-d*eta`` with per-axis std ``s`` is ``N(+-d*eta, d*s^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .numerics import log_std_normal_cdf, rng_stream, sample_mvn, std_normal_cdf
from .taskgen import (BinaryVariance, LocalTwoCluster, MixedPropVar, TaskSpec, ThreeClassDistance,
                      n_classes, true_stats)

GOLDEN = (math.sqrt(5) - 1) / 2


class DegenerateTaskError(ValueError):
    """No interior stationary threshold exists for the requested task."""


@dataclass
class LinearClassifier:
    """``w^T x + b`` rule; with ``thresholds=(hi, lo)`` it is the three-band rule.

    Three-band: class 0 if ``w^T x > hi``, class 2 if ``w^T x < lo``,
    class 1 otherwise.
    """
    w: np.ndarray
    b: float = 0.0
    thresholds: tuple | None = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if not np.linalg.norm(self.w) > 0:
            raise ValueError("classifier direction must be non-zero")

    def predict(self, X) -> np.ndarray:
        s = np.asarray(X) @ self.w
        if self.thresholds is None:
            return np.where(s + self.b > 0, 0, 1)
        hi, lo = self.thresholds
        return np.where(s > hi, 0, np.where(s < lo, 2, 1))

    def to_dict(self) -> dict:
        out = {"w": self.w.tolist(), "b": float(self.b)}
        if self.thresholds is not None:
            out["thresholds"] = [float(t) for t in self.thresholds]
        return out


@dataclass
class OracleResult:
    classifier: LinearClassifier
    per_class_error: np.ndarray
    gap: float
    intermediates: dict = field(default_factory=dict)

    def to_dict(self, spec: TaskSpec | None = None) -> dict:
        out = {"classifier": self.classifier.to_dict(),
               "errors": [float(e) for e in self.per_class_error],
               "gap": float(self.gap),
               "intermediates": {k: (v if isinstance(v, bool) else float(v)
                                     if isinstance(v, (int, float, np.floating)) else v)
                                 for k, v in self.intermediates.items()}}
        if spec is not None:
            out = {"spec": spec.to_dict(), **out}
        return out


def golden_section(f, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 500):
    """Minimise a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def minimize_1d(f, lo: float, hi: float, grid: int = 4001, tol: float = 1e-12, fprime=None):
    """Global 1-D minimisation: grid scan, golden-section refinement, optional root polish.

    ``fprime`` (any function sharing the sign of f') lets the final step
    locate the stationary point by bracketed root finding.
    """
    xs = np.linspace(lo, hi, grid)
    vals = np.array([f(x) for x in xs])
    k = int(np.argmin(vals))
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, grid - 1)]
    x, fx = golden_section(f, a, b, tol=tol)
    if fprime is not None:
        step = (hi - lo) / (grid - 1)
        left, right = x - step, x + step
        if fprime(left) < 0 < fprime(right):
            x = optimize.brentq(fprime, left, right, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                                maxiter=500)
            fx = f(x)
    return x, fx


def _logsumexp2(a, b):
    m = max(a, b)
    if m == -math.inf:
        return -math.inf
    return m + math.log(math.exp(a - m) + math.exp(b - m))


# ---------------------------------------------------------------------------
# Variance task: equal priors, class +1 std K*sigma, class -1 std sigma


def binary_variance_errors(spec: BinaryVariance, b: float) -> np.ndarray:
    d, eta, s = spec.d, spec.eta, spec.sigma
    tau = math.sqrt(d) * s
    e_plus = std_normal_cdf(-(d * eta + b) / (spec.K * tau))
    e_minus = std_normal_cdf((b - d * eta) / tau)
    return np.array([e_plus, e_minus])


def optimal_binary_variance(spec: BinaryVariance) -> OracleResult:
    """Best threshold on ``1^T x`` for equal priors, found numerically."""
    d, eta, s, K = spec.d, spec.eta, spec.sigma, spec.K
    tau = math.sqrt(d) * s

    def log_err(b):
        return _logsumexp2(log_std_normal_cdf(-(d * eta + b) / (K * tau)),
                           log_std_normal_cdf((b - d * eta) / tau))

    def slope(b):
        # sign of d/db of the mean error
        z1 = (d * eta + b) / (K * tau)
        z2 = (b - d * eta) / tau
        return (-0.5 * z2 * z2 - math.log(tau)) - (-0.5 * z1 * z1 - math.log(K * tau))

    if K == 1:
        b = 0.0
    else:
        b, _ = minimize_1d(log_err, -10 * d * eta, 10 * d * eta, fprime=slope)
    err = binary_variance_errors(spec, b)
    return OracleResult(LinearClassifier(np.ones(d), b), err, float(abs(err[0] - err[1])),
                        {"b": b})


# ---------------------------------------------------------------------------
# Distance task: three classes at theta, 0, -theta


def three_class_accuracies(spec: ThreeClassDistance) -> np.ndarray:
    """Exact accuracies of the three-band Bayes rule.

    Each boundary sits half-way between adjacent centres, at distance
    ``sqrt(d)*eta/(2*sigma)`` standard deviations along ``1/sqrt(d)``.
    """
    t = std_normal_cdf(-math.sqrt(spec.d) * spec.eta / (2 * spec.sigma))
    return np.array([1 - t, 1 - 2 * t, 1 - t])


def wide_constant_three_class_accuracies(spec: ThreeClassDistance) -> np.ndarray:
    """Accuracies with a ``3*sqrt(d)*eta/(2*sigma)`` boundary constant.

    Kept for comparison; it does not match the three-band rule (see
    ``three_class_accuracies``).
    """
    t = std_normal_cdf(-3 * math.sqrt(spec.d) * spec.eta / (2 * spec.sigma))
    return np.array([1 - t, 1 - 2 * t, 1 - t])


def bayes_three_class(spec: ThreeClassDistance) -> OracleResult:
    half = spec.d * spec.eta / 2
    clf = LinearClassifier(np.ones(spec.d), 0.0, thresholds=(half, -half))
    acc = three_class_accuracies(spec)
    err = 1 - acc
    wide = wide_constant_three_class_accuracies(spec).tolist()
    return OracleResult(clf, err, float(err.max() - err.min()), {"wide_constant_accuracies": wide})


# ---------------------------------------------------------------------------
# Mixed task: priors 1:V, class -1 std K*sigma


def mixed_intermediates(spec: MixedPropVar) -> tuple[float, float]:
    """``B = -2 d eta / (sqrt(d) sigma (K^2-1))`` and ``q = 2 log(K/V)/(K^2-1)``."""
    K, V = spec.K, spec.V
    B = -2 * spec.d * spec.eta / (math.sqrt(spec.d) * spec.sigma * (K * K - 1))
    q = 2 * math.log(K / V) / (K * K - 1)
    return B, q


def mixed_errors(spec: MixedPropVar, b: float) -> np.ndarray:
    """Per-class errors of ``1^T x + b`` on the mixed task."""
    d, eta, s, K = spec.d, spec.eta, spec.sigma, spec.K
    tau = math.sqrt(d) * s
    return np.array([std_normal_cdf(-(d * eta + b) / tau),
                     std_normal_cdf((b - d * eta) / (K * tau))])


def mixed_weighted_error(spec: MixedPropVar, b: float) -> float:
    """Objective ``V * E(-1) + E(+1)`` (unnormalised priors)."""
    e = mixed_errors(spec, b)
    return float(spec.V * e[1] + e[0])


def mixed_threshold_closed_form(spec: MixedPropVar) -> float:
    """Stationary threshold of the weighted error.

    Setting the derivative to zero gives a quadratic in b whose larger root
    ``(-d eta (K^2+1) + K sqrt(4 d^2 eta^2 + 2 d (K^2-1) sigma^2 log(K/V))) / (K^2-1)``
    is the local minimum; K = 1 reduces to ``-sigma^2 log V / (2 eta)``.
    """
    d, eta, s, K, V = spec.d, spec.eta, spec.sigma, spec.K, spec.V
    if K == 1:
        return -s * s * math.log(V) / (2 * eta)
    disc = 4 * d * d * eta * eta + 2 * d * (K * K - 1) * s * s * math.log(K / V)
    if disc < 0:
        raise DegenerateTaskError(f"no stationary threshold for K={K}, V={V}")
    return (-d * eta * (K * K + 1) + K * math.sqrt(disc)) / (K * K - 1)


def mixed_errors_closed_form(spec: MixedPropVar) -> np.ndarray:
    """Per-class errors at the stationary threshold via ``B`` and ``q``.

    ``E(+1) = Phi(-K sqrt(B^2+q) - B)``, ``E(-1) = Phi(K B + sqrt(B^2+q))``.
    """
    B, q = mixed_intermediates(spec)
    if B * B + q < 0:
        raise DegenerateTaskError(f"B^2 + q < 0 for K={spec.K}, V={spec.V}")
    r = math.sqrt(B * B + q)
    return np.array([std_normal_cdf(-spec.K * r - B), std_normal_cdf(spec.K * B + r)])


def mixed_threshold_numeric(spec: MixedPropVar) -> float:
    """Independent minimiser of the weighted error over ``[-10 d eta, 10 d eta]``.

    Works on the log objective for conditioning; the polish step finds the
    zero of the derivative of the (unlogged) objective by bracketing.
    """
    d, eta, s, K, V = spec.d, spec.eta, spec.sigma, spec.K, spec.V
    tau = math.sqrt(d) * s

    def log_obj(b):
        return _logsumexp2(math.log(V) + log_std_normal_cdf((b - d * eta) / (K * tau)),
                           log_std_normal_cdf(-(d * eta + b) / tau))

    def slope(b):
        # log of the two derivative magnitudes; their difference has the sign of f'
        z_minus = (b - d * eta) / (K * tau)
        z_plus = (d * eta + b) / tau
        return (math.log(V / (K * tau)) - 0.5 * z_minus ** 2) - (-math.log(tau) - 0.5 * z_plus ** 2)

    b, _ = minimize_1d(log_obj, -10 * d * eta, 10 * d * eta, fprime=slope)
    return b


def optimal_mixed(spec: MixedPropVar) -> OracleResult:
    """Stationary-point optimal linear rule on the mixed proportion/variance task.

    ``intermediates['global']`` is False when the all-class-(-1) rule has a
    lower weighted error than the stationary threshold.
    """
    b = mixed_threshold_closed_form(spec)
    if spec.K == 1:
        err = mixed_errors(spec, b)
        inter = {"b": b}
    else:
        err = mixed_errors_closed_form(spec)
        B, q = mixed_intermediates(spec)
        inter = {"b": b, "B": B, "q": q}
    inter["weighted_error"] = float(spec.V * err[1] + err[0])
    inter["global"] = bool(inter["weighted_error"] <= 1.0)
    return OracleResult(LinearClassifier(np.ones(spec.d), b), err, float(abs(err[0] - err[1])),
                        inter)


def corollary_grid(K_values, V_values, base: MixedPropVar) -> np.ndarray:
    """Gap matrix ``gap[i, j]`` for ``K_values[i]``, ``V_values[j]``; NaN where degenerate."""
    out = np.full((len(K_values), len(V_values)), np.nan)
    for i, K in enumerate(K_values):
        for j, V in enumerate(V_values):
            spec = MixedPropVar(d=base.d, eta=base.eta, sigma=base.sigma, K=float(K), V=float(V))
            try:
                out[i, j] = optimal_mixed(spec).gap
            except DegenerateTaskError:
                pass
    return out


def corollary_violations(K_values, V_values, gaps, tol: float = 1e-10) -> list[str]:
    """Check the equality and monotonicity clauses on a gap grid.

    Clause 1: gap(K=V) ~ 0. Clause 2: for fixed K, gap decreases in V while
    V <= K and increases in V while V >= K. Clause 3: for fixed V, gap
    increases in K while K >= V.
    """
    K_values, V_values = list(K_values), list(V_values)
    bad = []
    for i, K in enumerate(K_values):
        for j, V in enumerate(V_values):
            if K == V and not gaps[i, j] <= tol:
                bad.append(f"clause1 K=V={K}: gap {gaps[i, j]:.3e}")
    for i, K in enumerate(K_values):
        for j in range(len(V_values) - 1):
            v0, v1 = V_values[j], V_values[j + 1]
            g0, g1 = gaps[i, j], gaps[i, j + 1]
            if np.isnan(g0) or np.isnan(g1):
                continue
            if v1 <= K and not g1 < g0:
                bad.append(f"clause2 K={K}: gap(V={v1}) >= gap(V={v0})")
            if v0 >= K and not g1 > g0:
                bad.append(f"clause2 K={K}: gap(V={v1}) <= gap(V={v0})")
    for j, V in enumerate(V_values):
        for i in range(len(K_values) - 1):
            k0, k1 = K_values[i], K_values[i + 1]
            g0, g1 = gaps[i, j], gaps[i + 1, j]
            if np.isnan(g0) or np.isnan(g1):
                continue
            if k0 >= V and not g1 > g0:
                bad.append(f"clause3 V={V}: gap(K={k1}) <= gap(K={k0})")
    return bad


# ---------------------------------------------------------------------------
# Local imbalance: class -1 is a two-cluster mixture


def local_errors(spec: LocalTwoCluster, t: float) -> np.ndarray:
    """Errors of the threshold ``u^T x < t => class +1`` with ``u = 1/sqrt(d)``.

    Returns ``[E(+1), E(near cluster), E(far cluster)]``.
    """
    r = math.sqrt(spec.d)
    s = spec.sigma
    return np.array([std_normal_cdf((spec.plus_center * r - t) / s),
                     std_normal_cdf((t - spec.near_center * r) / s),
                     std_normal_cdf((t - spec.far_center * r) / s)])


def local_threshold(spec: LocalTwoCluster) -> float:
    r = math.sqrt(spec.d)
    s, a = spec.sigma, spec.alpha
    lo, hi = spec.plus_center * r, spec.far_center * r

    def log_obj(t):
        e_plus = log_std_normal_cdf((spec.plus_center * r - t) / s)
        e_near = math.log(a) + log_std_normal_cdf((t - spec.near_center * r) / s)
        e_far = math.log(1 - a) + log_std_normal_cdf((t - spec.far_center * r) / s)
        return _logsumexp2(e_plus, _logsumexp2(e_near, e_far))

    def slope(t):
        # f'(t) is the density of class -1's mixture minus that of class +1 at t
        minus = _logsumexp2(math.log(a) - 0.5 * ((t - spec.near_center * r) / s) ** 2,
                            math.log(1 - a) - 0.5 * ((t - spec.far_center * r) / s) ** 2)
        return minus - (-0.5 * ((t - spec.plus_center * r) / s) ** 2)

    t, _ = minimize_1d(log_obj, lo, hi, fprime=slope)
    return t


def local_gap(spec: LocalTwoCluster, alphas) -> np.ndarray:
    """Gap between the two sub-cluster errors under the best threshold, per alpha."""
    out = []
    for a in alphas:
        s = LocalTwoCluster(d=spec.d, sigma=spec.sigma, alpha=float(a),
                            plus_center=spec.plus_center, near_center=spec.near_center,
                            far_center=spec.far_center)
        e = local_errors(s, local_threshold(s))
        out.append(abs(e[1] - e[2]))
    return np.array(out)


# ---------------------------------------------------------------------------
# Monte Carlo


def monte_carlo_error(classifier: LinearClassifier, spec: TaskSpec, n: int,
                      rng: np.random.Generator, chunk: int = 1 << 18) -> np.ndarray:
    """Per-class error estimated from ``n`` fresh samples of every class.

    Samples are drawn from each class-conditional distribution (sub-cluster
    mixture for ``LocalTwoCluster``), in fixed-size chunks from spawned
    substreams so the result does not depend on memory limits.
    """
    C = n_classes(spec)
    stats = true_stats(spec)
    errors = np.zeros(C)
    class_rngs = rng.spawn(C)
    for c in range(C):
        n_chunks = -(-n // chunk)
        wrong = 0
        for k, sub in enumerate(class_rngs[c].spawn(n_chunks)):
            m = min(chunk, n - k * chunk)
            if isinstance(spec, LocalTwoCluster) and c == 1:
                near = sub.random(m) < spec.alpha
                m_near, m_far = spec.subcluster_means()
                X = np.where(near[:, None], m_near, m_far) + spec.sigma * sub.standard_normal(
                    (m, spec.d))
            else:
                X = sample_mvn(stats[c].mean, stats[c].cov, m, sub)
            wrong += int(np.count_nonzero(classifier.predict(X) != c))
        errors[c] = wrong / n
    return errors


def binomial_se(p, n: int) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return np.sqrt(np.maximum(p * (1 - p), 1.0 / n) / n)
