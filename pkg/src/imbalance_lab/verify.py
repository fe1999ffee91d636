"""Fast self-checks of the analytic machinery, run by ``imbalance-lab verify``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fixtures
from .metrics import dataset_ldi, variance_imbalance_nu
from .numerics import rng_stream
from .oracle import (bayes_three_class, binomial_se, corollary_grid, corollary_violations,
                     local_gap, mixed_threshold_closed_form, mixed_threshold_numeric,
                     monte_carlo_error, optimal_mixed)
from .taskgen import LocalTwoCluster, MixedPropVar, ThreeClassDistance

GRID_K = (1.5, 2.0, 3.0, 5.0)
GRID_V = (1.0, 2.0, 5.0, 10.0)
GRID_BASE = dict(eta=1.0, sigma=0.225)
LOCAL_ALPHAS = (0.05, 0.1, 0.2, 0.3, 0.45)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    informational: bool = False   # reported, never affects the exit status


def check_three_class(seed: int, n: int) -> list[Check]:
    out = []
    for sigma in (2.0, 4.0, 8.0):
        spec = ThreeClassDistance(d=2, eta=4.0, sigma=sigma)
        res = bayes_three_class(spec)
        mc = monte_carlo_error(res.classifier, spec, n, rng_stream(seed, "verify", "3c", str(sigma)))
        z = np.abs(mc - res.per_class_error) / binomial_se(res.per_class_error, n)
        out.append(Check(f"three_class sigma={sigma:g}", bool(z.max() < 5),
                         f"max |z| = {z.max():.2f}"))
        wide = 1 - np.asarray(res.intermediates["wide_constant_accuracies"])
        dev = float(np.abs(mc - wide).max())
        out.append(Check(f"three_class 3x constant sigma={sigma:g}", dev <= 0.002,
                         f"max |MC - 3x form| = {dev:.4f}", informational=True))
    return out


def check_mixed_grid() -> list[Check]:
    out = []
    for d in (2, 5):
        worst = 0.0
        for K in GRID_K:
            for V in GRID_V:
                spec = MixedPropVar(d=d, K=K, V=V, **GRID_BASE)
                worst = max(worst, abs(mixed_threshold_closed_form(spec)
                                       - mixed_threshold_numeric(spec)))
        out.append(Check(f"threshold closed form vs numeric d={d}", worst <= 1e-6,
                         f"max |db| = {worst:.2e}"))
        gaps = corollary_grid(GRID_K, GRID_V, MixedPropVar(d=d, K=2.0, V=1.0, **GRID_BASE))
        bad = corollary_violations(GRID_K, GRID_V, gaps)
        out.append(Check(f"gap-grid clauses d={d}", not bad, "; ".join(bad) or "0 violations"))
        i, j = np.unravel_index(int(np.nanargmax(gaps)), gaps.shape)
        ok = GRID_K[i] == max(GRID_K) and GRID_V[j] == min(GRID_V)
        out.append(Check(f"gap-grid maximum d={d}", ok, f"max at K={GRID_K[i]}, V={GRID_V[j]}"))
    b1 = mixed_threshold_closed_form(MixedPropVar(d=3, eta=1.0, sigma=1.0, K=1.0, V=3.0))
    b_lim = mixed_threshold_closed_form(MixedPropVar(d=3, eta=1.0, sigma=1.0, K=1 + 1e-6, V=3.0))
    out.append(Check("K=1 branch vs limit", abs(b1 - b_lim) <= 1e-4, f"|db| = {abs(b1 - b_lim):.2e}"))
    diag = [optimal_mixed(MixedPropVar(d=2, K=k, V=k, **GRID_BASE)).gap for k in (2.0, 5.0)]
    out.append(Check("K=V equal errors", max(diag) <= 1e-10, f"max gap {max(diag):.1e}"))
    return out


def check_measures() -> list[Check]:
    nu1 = variance_imbalance_nu(*fixtures.COV_EQUAL_ALONG_W, fixtures.AXIS_W)
    nu4 = variance_imbalance_nu(*fixtures.COV_FOURFOLD_ALONG_W, fixtures.AXIS_W)
    node, _ = dataset_ldi(fixtures.neighbourhood_graph())
    ldi_ok = all(np.array_equal(node[3 * c:3 * c + 3], np.array(v))
                 for c, v in fixtures.NEIGHBOURHOOD_LDI.items())
    return [Check("nu fixtures", nu1 == 1.0 and nu4 == 4.0, f"nu = {nu1}, {nu4}"),
            Check("LDI fixture", ldi_ok, f"node LDI = {np.round(node, 4).tolist()}")]


def check_local() -> list[Check]:
    g = local_gap(LocalTwoCluster(d=2, sigma=1.0, alpha=0.5), LOCAL_ALPHAS)
    bad = int(np.sum(np.diff(g) > 0))
    return [Check("local gap non-increasing in alpha", bad == 0, f"{bad} violations")]


def run_all(seed: int = 0, n: int = 200_000) -> list[Check]:
    return check_three_class(seed, n) + check_mixed_grid() + check_measures() + check_local()


def exit_ok(checks) -> bool:
    return all(c.passed for c in checks if not c.informational)


def format_checks(checks) -> str:
    lines = []
    for c in checks:
        tag = "PASS" if c.passed else ("NOTE" if c.informational else "FAIL")
        lines.append(f"{tag:4s}  {c.name}: {c.detail}")
    return "\n".join(lines)


__all__ = ["Check", "run_all", "exit_ok", "format_checks"]
