"""Command-line entry point: ``imbalance-lab <verb> --config run.yaml``.

Every verb reads one YAML file (see ``configs/`` for examples). Unknown keys
are rejected before any work starts. ``IMBALANCE_LAB_SEED`` and
``IMBALANCE_LAB_OUT`` override the seed list and output directory; explicit
``--seed``/``--out`` flags win over both.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np
import yaml

from . import io as lab_io
from . import verify as lab_verify
from .losses import LOSS_KINDS, TERM_NAMES, LossSpec, PerturbationParams
from .meta import MetaConfig, make_meta_set, run_metalad
from .metrics import report as imbalance_report
from .numerics import rng_stream
from .oracle import (DegenerateTaskError, LinearClassifier, OracleResult, bayes_three_class,
                     binomial_se, corollary_violations, local_errors, local_threshold,
                     monte_carlo_error, optimal_binary_variance, optimal_mixed)
from .taskgen import (BinaryVariance, LocalTwoCluster, MixedPropVar, ThreeClassDistance,
                      generate, spec_from_dict, toy_graph)
from .trainer import TrainConfig, TrainingDivergence, train

log = logging.getLogger("imbalance_lab")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_VALIDATION = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class ValidationFailure(RuntimeError):
    pass


# --- config handling -----------------------------------------------------------


def _check_keys(cfg, allowed, where):
    if not isinstance(cfg, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(cfg).__name__}")
    unknown = set(cfg) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _require(cfg, key, where):
    if key not in cfg:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return cfg[key]


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return cfg


def _task(cfg, where="task"):
    try:
        return spec_from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _dataclass_from(cls, cfg, where):
    cfg = dict(cfg or {})
    allowed = {f.name for f in fields(cls)}
    _check_keys(cfg, allowed, where)
    for k, v in list(cfg.items()):
        if isinstance(v, list):
            cfg[k] = tuple(v)
    try:
        return cls(**cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def resolve_seeds(args, cfg) -> list[int]:
    if args.seed is not None:
        return [args.seed]
    env = os.environ.get("IMBALANCE_LAB_SEED")
    if env is not None:
        try:
            return [int(env)]
        except ValueError as exc:
            raise ConfigError(f"IMBALANCE_LAB_SEED must be an integer, got {env!r}") from exc
    seeds = cfg.get("seeds", [cfg.get("seed", 0)])
    if isinstance(seeds, int):
        seeds = [seeds]
    if not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds must be a non-empty list of integers")
    return list(seeds)


def resolve_out(args) -> Path:
    out = args.out or os.environ.get("IMBALANCE_LAB_OUT") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


class Outputs:
    """Guards against clobbering files unless ``--force`` is given."""

    def __init__(self, root: Path, force: bool, deterministic: bool):
        self.root, self.force, self.deterministic = root, force, deterministic
        self.written: list[Path] = []

    def path(self, name) -> Path:
        p = self.root / name
        if p.exists() and not self.force:
            raise ConfigError(f"{p} exists; pass --force to overwrite")
        self.written.append(p)
        return p

    def csv(self, name, schema, header, rows):
        lab_io.write_csv(self.path(name), schema, header, rows, self.deterministic)

    def json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")


def run_seeds(fn, seeds, threads: int):
    """Run ``fn(seed)`` for each seed; results come back in seed-list order."""
    if threads <= 1 or len(seeds) == 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, seeds))


# --- gen -----------------------------------------------------------------------

GEN_KEYS = {"task", "graph", "n", "format", "file", "seed", "seeds"}
GRAPH_KEYS = {"n_per_class", "heterophily", "mean_degree"}


def cmd_gen(args, cfg, out: Outputs) -> int:
    _check_keys(cfg, GEN_KEYS, "gen")
    fmt = cfg.get("format", "csv")
    if fmt not in ("csv", "bin"):
        raise ConfigError("gen: format must be 'csv' or 'bin'")
    if ("task" in cfg) == ("graph" in cfg):
        raise ConfigError("gen: give exactly one of 'task' or 'graph'")
    seed = resolve_seeds(args, cfg)[0]
    if "task" in cfg:
        spec = _task(cfg["task"])
        n = _require(cfg, "n", "gen")
        if not isinstance(n, int) or n < 1:
            raise ConfigError("gen: n must be a positive integer")
        data = generate(spec, n, rng_stream(seed, "data", "gen"))
    else:
        g = cfg["graph"]
        _check_keys(g, GRAPH_KEYS, "gen.graph")
        try:
            data = toy_graph(int(_require(g, "n_per_class", "gen.graph")),
                             _require(g, "heterophily", "gen.graph"),
                             rng_stream(seed, "data", "graph"), float(g.get("mean_degree", 10.0)))
        except ValueError as exc:
            raise ConfigError(f"gen.graph: {exc}") from exc
    name = cfg.get("file", f"dataset.{fmt}")
    target = out.path(name)
    if data.edges is not None and fmt == "csv":
        out.path(Path(name).stem + ".edges.csv")
    lab_io.write_dataset(data, target, fmt)
    print(f"wrote {data.n} samples ({data.n_classes} classes) to {target}")
    return EXIT_OK


# --- oracle --------------------------------------------------------------------

ORACLE_KEYS = {"task", "sweep", "mc_samples", "seed", "seeds"}
SWEEP_KEYS = {"base", "K", "V"}
ORACLE_HEADER = ["variant", "K", "V", "alpha", "sigma", "class", "analytic_error", "mc_error",
                 "mc_se", "z", "gap", "b"]


def _solve(spec):
    if isinstance(spec, BinaryVariance):
        return optimal_binary_variance(spec)
    if isinstance(spec, ThreeClassDistance):
        return bayes_three_class(spec)
    if isinstance(spec, MixedPropVar):
        return optimal_mixed(spec)
    if isinstance(spec, LocalTwoCluster):
        t = local_threshold(spec)
        e = local_errors(spec, t)
        mix = np.array([e[0], spec.alpha * e[1] + (1 - spec.alpha) * e[2]])
        w = -np.ones(spec.d) / np.sqrt(spec.d)
        return OracleResult(LinearClassifier(w, t), mix, float(abs(e[1] - e[2])),
                            {"t": t, "near_error": float(e[1]), "far_error": float(e[2])})
    raise ConfigError(f"oracle: no closed form for {spec.variant}")


def _sweep_specs(sweep) -> list:
    _check_keys(sweep, SWEEP_KEYS, "sweep")
    base = dict(_require(sweep, "base", "sweep"))
    Ks = sweep.get("K", [base.get("K", 1.0)])
    Vs = sweep.get("V", [base.get("V", 1.0)]) if base.get("variant") == "MixedPropVar" else [None]
    specs = []
    for K in Ks:
        for V in Vs:
            cfg = dict(base, K=float(K))
            if V is not None:
                cfg["V"] = float(V)
            specs.append(_task(cfg, "sweep.base"))
    return specs


def _oracle_rows(spec, res, mc, n):
    rows = []
    params = [getattr(spec, "K", ""), getattr(spec, "V", ""), getattr(spec, "alpha", ""),
              spec.sigma]
    for c, e in enumerate(res.per_class_error):
        if mc is None:
            extra = ["", "", ""]
        else:
            se = float(binomial_se(e, n))
            extra = [float(mc[c]), se, float((mc[c] - e) / se)]
        rows.append([spec.variant, *params, c, float(e), *extra, float(res.gap),
                     float(res.intermediates.get("b", res.intermediates.get("t", 0.0)))])
    return rows


def cmd_oracle(args, cfg, out: Outputs) -> int:
    _check_keys(cfg, ORACLE_KEYS, "oracle")
    if ("task" in cfg) == ("sweep" in cfg):
        raise ConfigError("oracle: give exactly one of 'task' or 'sweep'")
    specs = [_task(cfg["task"])] if "task" in cfg else _sweep_specs(cfg["sweep"])
    n = int(cfg.get("mc_samples", 100_000))
    if n and n < 10_000:
        raise ConfigError("oracle: mc_samples must be 0 or >= 10000")
    seed = resolve_seeds(args, cfg)[0]
    rows, records = [], []
    for k, spec in enumerate(specs):
        try:
            res = _solve(spec)
        except DegenerateTaskError as exc:
            log.warning("skipping degenerate cell: %s", exc)
            continue
        mc = None
        if n:
            mc = monte_carlo_error(res.classifier, spec, n, rng_stream(seed, "oracle", str(k)))
        rows.extend(_oracle_rows(spec, res, mc, n))
        rec = res.to_dict(spec)
        if mc is not None:
            rec["mc_errors"] = mc.tolist()
        records.append(rec)
    out.csv("oracle.csv", "oracle", ORACLE_HEADER, rows)
    out.json("oracle.json", records)
    print(f"{len(records)} oracle results written to {out.root}")
    return EXIT_OK


# --- measure -------------------------------------------------------------------

MEASURE_KEYS = {"dataset", "diagonal", "seed", "seeds"}


def cmd_measure(args, cfg, out: Outputs) -> int:
    _check_keys(cfg, MEASURE_KEYS, "measure")
    path = args.dataset or cfg.get("dataset")
    if path is None:
        raise ConfigError("measure: no dataset given")
    try:
        data = lab_io.read_dataset(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"measure: cannot load {path}: {exc}") from exc
    try:
        rep = imbalance_report(data, diagonal=bool(cfg.get("diagonal", False)))
    except ValueError as exc:
        raise ConfigError(f"measure: {exc}") from exc
    out.csv("imbalance.csv", "imbalance", list(rep.CSV_FIELDS), rep.csv_rows())
    out.json("imbalance.json", rep.to_dict())
    print(json.dumps(rep.to_dict()["proportions"]))
    return EXIT_OK


# --- train / metalad -------------------------------------------------------------

RUN_KEYS = {"task", "n_train", "n_test", "test_task", "train_data", "test_data", "trainer",
            "loss", "meta", "meta_per_class", "compare_ce", "ablation", "omega_every", "seed",
            "seeds"}
LOSS_KEYS = {"kind", "lam", "omega", "reweight"}


def _load_split(cfg, seed):
    try:
        return _load_split_inner(cfg, seed)
    except (OSError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"data: {exc}") from exc


def _load_split_inner(cfg, seed):
    if "train_data" in cfg:
        train_data = lab_io.read_dataset(cfg["train_data"])
        test_data = lab_io.read_dataset(cfg["test_data"]) if "test_data" in cfg else None
        return train_data, test_data
    spec = _task(_require(cfg, "task", "run"))
    n_train = int(_require(cfg, "n_train", "run"))
    train_data = generate(spec, n_train, rng_stream(seed, "data", "train"))
    test_data = None
    if cfg.get("n_test"):
        tcfg = dict(spec.to_dict(), **(cfg.get("test_task") or {}))
        test_data = generate(_task(tcfg, "test_task"), int(cfg["n_test"]),
                             rng_stream(seed, "data", "test"))
    return train_data, test_data


def _loss_spec(cfg) -> LossSpec:
    cfg = dict(cfg or {})
    _check_keys(cfg, LOSS_KEYS, "loss")
    if cfg.get("kind", "ce") not in LOSS_KINDS:
        raise ConfigError(f"loss: kind must be one of {LOSS_KINDS}")
    if "omega" in cfg:
        om = np.asarray(cfg["omega"], dtype=np.float64)
        cfg["omega"] = PerturbationParams(om, per_pair=om.ndim == 3)
    try:
        return LossSpec(**cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"loss: {exc}") from exc


def _trainer_cfg(cfg, seed) -> TrainConfig:
    tcfg = dict(cfg.get("trainer") or {})
    tcfg["seed"] = seed
    return _dataclass_from(TrainConfig, tcfg, "trainer")


def _error_rows(seed, method, report):
    rows = []
    src = report.eval_errors or report.class_errors
    for epoch, errs in enumerate(src):
        for c, e in enumerate(errs):
            rows.append([seed, method, epoch, c, float(e)])
    return rows


def _trace_rows(seed, method, report):
    """Per-epoch, per-class relative loss variation and perturbation-term means."""
    rows = []
    for epoch, (var, terms) in enumerate(zip(report.loss_variation, report.delta_terms)):
        for c, v in enumerate(var):
            rows.append([seed, method, epoch, c, float(v),
                         float(terms["variance"][c]) if "variance" in terms else "",
                         float(terms["distance"][c]) if "distance" in terms else ""])
    return rows


def _omega_rows(seed, method, traj, every):
    """Long-format lambda log: one row per logged step and ordered class pair."""
    rows = []
    picked = traj[::every]
    if traj and picked[-1] is not traj[-1]:
        picked = picked + [traj[-1]]
    for step, values in picked:
        if values.ndim == 1:
            rows.append([seed, method, step, "", "", *map(float, values)])
            continue
        C = values.shape[0]
        for y in range(C):
            for c in range(C):
                if y != c:
                    rows.append([seed, method, step, y, c, *map(float, values[y, c])])
    return rows


def _summary_row(seed, method, report, C):
    e = report.final_errors
    return [seed, method, report.gap] + [float(v) for v in e] + [""] * (C - len(e))


def _write_runs(out: Outputs, runs, C, omega_every=None):
    """Shared report files for train and metalad; ``runs`` = (seed, method, model, report, traj)."""
    errs, traces, summary, omega, records = [], [], [], [], []
    for seed, method, model, rep, traj in runs:
        errs += _error_rows(seed, method, rep)
        traces += _trace_rows(seed, method, rep)
        summary.append(_summary_row(seed, method, rep, C))
        records.append({"seed": seed, "method": method, **rep.to_summary()})
        if traj is not None:
            omega += _omega_rows(seed, method, traj, omega_every or 1)
    out.csv("errors.csv", "class_errors", ["seed", "method", "epoch", "class", "error"], errs)
    out.csv("traces.csv", "traces", ["seed", "method", "epoch", "class", "loss_variation",
                                     "variance_term", "distance_term"], traces)
    out.csv("summary.csv", "summary", ["seed", "method", "gap"] + [f"err_{c}" for c in range(C)],
            summary)
    out.json("summary.json", records)
    if omega_every is not None:
        out.csv("omega.csv", "omega_trajectory",
                ["seed", "method", "step", "y", "c", "lambda_1", "lambda_2", "lambda_3"], omega)
    medians = _median_rows(summary)
    out.csv("comparison.csv", "comparison", ["method", "median_gap", "n_seeds"], medians)
    _print_summary(summary)
    for row in medians:
        print(f"median gap {row[0]}: {row[1]:.4f} over {row[2]} seeds")


def cmd_train(args, cfg, out: Outputs) -> int:
    _check_keys(cfg, RUN_KEYS - {"meta", "meta_per_class", "compare_ce", "ablation",
                                 "omega_every"}, "train")
    loss = _loss_spec(cfg.get("loss"))
    seeds = resolve_seeds(args, cfg)

    def one(seed):
        tr, te = _load_split(cfg, seed)
        model, rep = train(tr, loss, _trainer_cfg(cfg, seed), eval_data=te)
        return seed, tr.n_classes, model, rep

    results = run_seeds(one, seeds, args.threads)
    runs = []
    for seed, _, model, rep in results:
        lab_io.save_checkpoint(model, out.path(f"model_seed{seed}.ckpt"),
                               {"seed": seed, "loss": loss.kind})
        runs.append((seed, loss.kind, model, rep, None))
    _write_runs(out, runs, results[0][1])
    return EXIT_OK


def _meta_cfg(cfg, spe, epochs, frozen=()) -> MetaConfig:
    mcfg = dict(cfg.get("meta") or {})
    mcfg.setdefault("T2", epochs * spe)
    mcfg.setdefault("T1", (epochs // 3) * spe)
    if frozen:
        mcfg["frozen_terms"] = tuple(sorted(set(mcfg.get("frozen_terms", ())) | set(frozen)))
    return _dataclass_from(MetaConfig, mcfg, "meta")


def ablation_variants(ablation: bool) -> list[tuple[str, tuple]]:
    """Full model plus one run per zeroed term family when ``ablation`` is set."""
    out = [("metalad", ())]
    if ablation:
        out += [(f"metalad_no_{name}", (k,)) for k, name in enumerate(TERM_NAMES)]
    return out


def cmd_metalad(args, cfg, out: Outputs) -> int:
    _check_keys(cfg, RUN_KEYS - {"loss"}, "metalad")
    seeds = resolve_seeds(args, cfg)
    variants = ablation_variants(bool(cfg.get("ablation", False)))
    compare = bool(cfg.get("compare_ce", True))
    per_class = int(cfg.get("meta_per_class", (cfg.get("meta") or {}).get("k_per_class", 10)))
    _meta_cfg(cfg, 1, 1)   # validate before any work

    def one(seed):
        tr, te = _load_split(cfg, seed)
        tcfg = _trainer_cfg(cfg, seed)
        spe = -(-tr.n // min(tcfg.batch_size, tr.n))
        try:
            meta_idx = make_meta_set(tr, per_class, rng_stream(seed, "data", "meta"))
        except ValueError as exc:
            raise ConfigError(f"meta set: {exc}") from exc
        runs = []
        if compare:
            _, rep = train(tr, LossSpec("ce"), tcfg, eval_data=te)
            runs.append((seed, "ce", None, rep, None))
        for name, frozen in variants:
            mcfg = _meta_cfg(cfg, spe, tcfg.epochs, frozen)
            try:
                model, rep, traj = run_metalad(tr, meta_idx, tcfg, mcfg, eval_data=te)
            except ValueError as exc:
                raise ConfigError(f"metalad: {exc}") from exc
            runs.append((seed, name, model, rep, traj))
        return tr.n_classes, spe, runs

    results = run_seeds(one, seeds, args.threads)
    C, spe = results[0][0], results[0][1]
    runs = [r for _, _, rs in results for r in rs]
    for seed, name, model, _, traj in runs:
        if name == "metalad":
            lab_io.save_checkpoint(model, out.path(f"model_seed{seed}.ckpt"),
                                   {"seed": seed, "omega": traj[-1][1].tolist()})
    _write_runs(out, runs, C, omega_every=int(cfg.get("omega_every", spe)))
    return EXIT_OK


def _median_rows(summary):
    order, groups = [], {}
    for row in summary:
        if row[1] not in groups:
            order.append(row[1])
            groups[row[1]] = []
        groups[row[1]].append(row[2])
    return [[m, float(np.median(groups[m])), len(groups[m])] for m in order]


def _print_summary(rows):
    for row in rows:
        print(f"seed {row[0]} {row[1]}: gap {row[2]:.4f}")


# --- sweep ---------------------------------------------------------------------

SWEEP_CMD_KEYS = {"base", "K", "V"}
SWEEP_HEADER = ["K", "V", "b", "err_0", "err_1", "gap", "global"]


def cmd_sweep(args, cfg, out: Outputs) -> int:
    _check_keys(cfg, SWEEP_CMD_KEYS, "sweep")
    base = dict(_require(cfg, "base", "sweep"))
    if base.get("variant") not in ("MixedPropVar", "BinaryVariance"):
        raise ConfigError("sweep: base must be a MixedPropVar or BinaryVariance task")
    specs = _sweep_specs(cfg)
    rows = []
    for spec in specs:
        try:
            res = _solve(spec)
            rows.append([spec.K, getattr(spec, "V", 1.0), float(res.intermediates["b"]),
                         float(res.per_class_error[0]), float(res.per_class_error[1]),
                         float(res.gap), bool(res.intermediates.get("global", True))])
        except DegenerateTaskError:
            rows.append([spec.K, getattr(spec, "V", 1.0), "", "", "", "", False])
    out.csv("gap_grid.csv", "gap_grid", SWEEP_HEADER, rows)
    print(f"{len(rows)} grid cells written to {out.root / 'gap_grid.csv'}")
    if args.verify:
        Ks = sorted({float(r[0]) for r in rows})
        Vs = sorted({float(r[1]) for r in rows})
        gaps = np.full((len(Ks), len(Vs)), np.nan)
        for r in rows:
            if r[5] != "":
                gaps[Ks.index(float(r[0])), Vs.index(float(r[1]))] = r[5]
        bad = corollary_violations(Ks, Vs, gaps)
        for b in bad:
            print(f"violation: {b}")
        if bad:
            raise ValidationFailure(f"{len(bad)} monotonicity violations")
        print("gap grid satisfies the equality and monotonicity clauses")
    return EXIT_OK


# --- verify --------------------------------------------------------------------

VERIFY_KEYS = {"mc_samples", "seed", "seeds"}


def cmd_verify(args, cfg, out: Outputs) -> int:
    _check_keys(cfg, VERIFY_KEYS, "verify")
    seed = resolve_seeds(args, cfg)[0]
    checks = lab_verify.run_all(seed, int(cfg.get("mc_samples", 200_000)))
    print(lab_verify.format_checks(checks))
    out.csv("verify.csv", "verify", ["check", "status", "detail"],
            [[c.name, "pass" if c.passed else ("note" if c.informational else "fail"), c.detail]
             for c in checks])
    if not lab_verify.exit_ok(checks):
        raise ValidationFailure("one or more checks failed")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "oracle": cmd_oracle, "measure": cmd_measure, "train": cmd_train,
            "metalad": cmd_metalad, "sweep": cmd_sweep, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment file")
    common.add_argument("--seed", type=int, help="single seed, overrides the config seed list")
    common.add_argument("--out", help="output directory (default: ./out)")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--deterministic", action="store_true",
                        help="omit the timestamp line from CSV outputs")
    common.add_argument("--threads", type=int, default=1, help="run seeds in parallel")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="imbalance-lab",
                                     description="Class-imbalance numerical laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="sample a synthetic dataset")
    sub.add_parser("oracle", parents=[common], help="optimal classifiers and exact errors")
    p = sub.add_parser("measure", parents=[common], help="imbalance measures of a dataset")
    p.add_argument("dataset", nargs="?", help="dataset file (overrides the config)")
    sub.add_parser("train", parents=[common], help="train with a fixed perturbation loss")
    sub.add_parser("metalad", parents=[common], help="train with meta-learned perturbations")
    p = sub.add_parser("sweep", parents=[common], help="gap grid over K and V")
    p.add_argument("--verify", action="store_true", help="check the monotonicity clauses")
    sub.add_parser("verify", parents=[common], help="run the built-in self-checks")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        out = Outputs(resolve_out(args), args.force, args.deterministic)
        return COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergence as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValidationFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
