"""Command-line interface: registration, means, simulation, classification, preprocessing.

One executable with subcommands; a JSON config file can stand in for flags
(flags win).  All numeric outputs are deterministic for a fixed seed, which
falls back to the ELASTICA_SEED environment variable.  Failures print a
machine-readable JSON error naming the offending module and exit 2 (invalid
input) or 3 (numeric failure).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bayes, dp, ingest, procrustes, simulation, tempering
from .geometry import Srvf, srvf_transform, warp_action, warp_inverse

EXIT_INVALID_INPUT = 2
EXIT_NUMERIC_FAILURE = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elastica",
        description="Elastic registration of functions and planar curves",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("--input", nargs="+", required=True,
                           help="dataset file(s) or directory")
        p.add_argument("--output", required=True, help="output directory")
        p.add_argument("--config", help="JSON config file; flags override its entries")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--desk", action="store_true", help="desk-scale iteration defaults")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)

    def mcmc_flags(p):
        p.add_argument("--prior-a", type=float, default=1.0, help="Dirichlet concentration")
        p.add_argument("--alpha", type=float, default=1.0)
        p.add_argument("--beta", type=float, default=1000.0)
        p.add_argument("--knots", type=int, default=20, metavar="M")
        p.add_argument("--iters", type=int, default=None)
        p.add_argument("--burn-in", type=int, default=None)
        p.add_argument("--thin", type=int, default=10)
        p.add_argument("--temper", type=int, nargs="?", const=10, default=0, metavar="T",
                       help="tempering levels (bare flag: 10, the usual ladder size; 0: off)")
        p.add_argument("--delta", type=float, default=0.1, help="initial ladder spacing")
        p.add_argument("--pre-iters", type=int, default=None, help="tempering tuning pre-run length")
        p.add_argument("--rotation", choices=("on", "off"), default="on")
        p.add_argument("--unit-norm", action="store_true", help="normalize SRVFs to unit norm")
        p.add_argument("--resample", type=int, default=None, metavar="K", help="common grid size")

    p = sub.add_parser("register-pair", help="Bayesian pairwise registration")
    common(p)
    mcmc_flags(p)
    p.add_argument("--items", nargs=2, help="ids of the two functions (default: first two)")

    p = sub.add_parser("register-multi", help="Bayesian multi-function registration")
    common(p)
    mcmc_flags(p)
    p.add_argument("--spikes", help="answer-key CSV of spike positions per scan (original time units)")

    p = sub.add_parser("karcher-mean", help="quotient-space Karcher mean via DP")
    common(p)
    p.add_argument("--knots", type=int, default=None, metavar="M")
    p.add_argument("--rotation", choices=("on", "off"), default="on")
    p.add_argument("--unit-norm", action="store_true")
    p.add_argument("--resample", type=int, default=None, metavar="K")

    p = sub.add_parser("simulate", help="Monte Carlo estimator comparison")
    common(p, needs_input=False)
    p.add_argument("--example", choices=("I", "II", "III", "IV"), default="I")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--n-values", type=int, nargs="+", default=None)
    p.add_argument("--sigma-values", type=float, nargs="+", default=None)
    p.add_argument("--prior-a", type=float, default=1.0)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--burn-in", type=int, default=None)

    p = sub.add_parser("classify", help="nearest-mean classification")
    common(p)
    p.add_argument("--test", required=True, help="test manifest (landmark CSV dataset)")
    p.add_argument("--metric", choices=("procrustes", "elastic"), default="procrustes")
    p.add_argument("--means", choices=("gpa", "karcher", "bayes"), default=None,
                   help="group-mean estimator (default: gpa for procrustes, bayes for elastic)")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--knots", type=int, default=10, metavar="M")

    p = sub.add_parser("preprocess", help="baseline removal, smoothing, regridding")
    common(p)
    p.add_argument("--baseline-lambda", type=float, default=1e5)
    p.add_argument("--smooth-lambda", type=float, default=10.0)
    p.add_argument("--tail-start", type=float, default=0.75)
    p.add_argument("--resample", type=int, default=None, metavar="K")

    return parser


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _apply_config(args: argparse.Namespace, parser_defaults: dict) -> argparse.Namespace:
    """Fill unset flags from the JSON config; explicit flags win."""
    if not getattr(args, "config", None):
        return args
    with open(args.config) as fh:
        cfg = json.load(fh)
    for key, val in cfg.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            continue
        if getattr(args, attr) == parser_defaults.get(attr):
            setattr(args, attr, val)
    return args


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("ELASTICA_SEED")
    return int(env) if env else 0


def _iters(args, desk_default=(10_000, 5_000), full_default=(50_000, 25_000)):
    n_iter = args.iters
    burn = args.burn_in
    base = desk_default if args.desk else full_default
    return (n_iter if n_iter is not None else base[0],
            burn if burn is not None else base[1])


def _load_srvfs(paths, resample_k, unit_norm):
    datasets = [ingest.load_functions(p) for p in paths]
    items = [it for ds in datasets for it in ds.items]
    if not items:
        raise ValueError("no functions found in input")
    if resample_k is None:
        resample_k = max(it.f.n_points - 1 for it in items)
    fs = [ingest.resample(it.f, resample_k) for it in items]
    qs = [srvf_transform(f) for f in fs]
    if unit_norm:
        qs = [q.normalized() for q in qs]
    return items, qs


def _write_function_csv(path, grid, values):
    values = np.atleast_2d(np.asarray(values))
    if values.shape[0] != len(grid):
        values = values.T
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"v{d + 1}" for d in range(values.shape[1])])
        for ti, row in zip(grid, values):
            writer.writerow([repr(float(ti))] + [repr(float(v)) for v in row])


def _write_bands_csv(path, summary, M):
    """Long-format credible band for gamma(t): t, mean, lower, upper."""
    pos = np.linspace(0.0, 1.0, M + 1)
    mean = np.atleast_2d(summary.mean_warp)
    lo = np.atleast_2d(summary.ci_lower)
    hi = np.atleast_2d(summary.ci_upper)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["curve", "t", "mean", "lower", "upper"])
        for j in range(mean.shape[0]):
            for i, t in enumerate(pos):
                writer.writerow(
                    [j, repr(float(t)), repr(float(mean[j, i])),
                     repr(float(lo[j, i])), repr(float(hi[j, i]))]
                )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_register_pair(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    items, qs = _load_srvfs(args.input, args.resample, args.unit_norm)
    if args.items:
        by_id = {it.id: i for i, it in enumerate(items)}
        idx = [by_id[i] for i in args.items]
    else:
        idx = [0, 1]
    if max(idx) >= len(qs):
        raise ValueError("need at least two functions for pairwise registration")
    q1, q2 = qs[idx[0]], qs[idx[1]]
    n_iter, burn = _iters(args)
    cfg = bayes.ModelConfig(
        a=args.prior_a, alpha=args.alpha, beta=args.beta, M=args.knots,
        unit_norm=args.unit_norm, n_iter=n_iter, burn_in=burn, thin=args.thin,
        seed=_seed(args),
    )
    rng = np.random.default_rng(_seed(args) + 1)
    if args.temper and args.temper > 1:
        pre = args.pre_iters if args.pre_iters is not None else (5_000 if args.desk else 50_000)
        ladder = tempering.build_ladder(args.temper, args.delta)
        ladder, report = tempering.tune(
            ladder, tempering.PairwiseTarget(q1, q2, cfg), pre, rng
        )
        tempering.report_to_json(report, out / "tuning.json")
        chain, summary = tempering.tempered_register(q1, q2, cfg=cfg, ladder=ladder)
    else:
        chain, summary = bayes.register_pair(q1, q2, cfg)
    bayes.chain_to_csv(chain, out / "chain.csv")
    bayes.summary_to_json(summary, out / "summary.json")
    _write_bands_csv(out / "bands.csv", summary, cfg.M)
    aligned = warp_action(q2, summary.mean_warp_function())
    _write_function_csv(out / "registered.csv", q1.grid, aligned.values)
    return 0


def cmd_register_multi(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    items, qs = _load_srvfs(args.input, args.resample, args.unit_norm)
    if len(qs) < 2:
        raise ValueError("register-multi needs at least two functions")
    n_iter, burn = _iters(args)
    cfg = bayes.ModelConfig(
        a=args.prior_a, alpha=args.alpha, beta=args.beta, M=args.knots,
        unit_norm=args.unit_norm, n_iter=n_iter, burn_in=burn, thin=args.thin,
        seed=_seed(args),
    )
    rng = np.random.default_rng(_seed(args) + 1)
    if args.temper and args.temper > 1:
        pre = args.pre_iters if args.pre_iters is not None else (5_000 if args.desk else 50_000)
        ladder = tempering.build_ladder(args.temper, args.delta)
        ladder, report = tempering.tune(
            ladder, tempering.PairwiseTarget(qs[0], qs[1], cfg), pre, rng
        )
        tempering.report_to_json(report, out / "tuning.json")
        chain, summary = tempering.tempered_register(qs, cfg=cfg, ladder=ladder)
    else:
        chain, summary = bayes.register_multiple(qs, cfg)
    bayes.chain_to_csv(chain, out / "chain.csv")
    bayes.summary_to_json(summary, out / "summary.json")
    _write_bands_csv(out / "bands.csv", summary, cfg.M)
    _write_function_csv(out / "mean_function.csv", qs[0].grid, summary.mean_function.values)
    for item, q, j in zip(items, qs, range(len(qs))):
        aligned = warp_action(q, summary.mean_warp_function(j))
        _write_function_csv(out / f"registered_{item.id}.csv", q.grid, aligned.values)
    if args.spikes:
        _write_spike_table(args.spikes, items, summary, out / "spikes_aligned.csv")
    return 0


def _write_spike_table(spikes_path, items, summary, out_path):
    """Aligned spike positions: a feature at u in scan i appears at
    inverse-warp(u) after registration; positions reported in original units."""
    with open(spikes_path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    header = rows[0]
    by_id = {it.id: (i, it) for i, (it) in enumerate(items)}
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scan", "kind"] + header[1:])
        for row in rows[1:]:
            scan_id = row[0]
            if scan_id not in by_id:
                raise ValueError(f"spike table references unknown scan {scan_id!r}")
            j, item = by_id[scan_id]
            original = np.array([float(v) for v in row[1:]])
            t01 = item.from_original_time(original)
            inv = warp_inverse(summary.mean_warp_function(j))
            aligned01 = inv(t01)
            aligned = item.to_original_time(aligned01)
            writer.writerow([scan_id, "original"] + [str(int(round(v))) for v in original])
            writer.writerow([scan_id, "aligned"] + [str(int(round(v))) for v in aligned])


def cmd_karcher_mean(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    items, qs = _load_srvfs(args.input, args.resample, args.unit_norm)
    cfg = dp.DpConfig(rotation_enabled=args.rotation == "on", warp_knots=args.knots)
    result = dp.karcher_mean(qs, cfg)
    _write_function_csv(out / "mean.csv", qs[0].grid, result.mean.values)
    with open(out / "warps.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        n_knots = len(result.warps[0].knots)
        writer.writerow(["id"] + [f"knot{i}" for i in range(n_knots)])
        for item, g in zip(items, result.warps):
            writer.writerow([item.id] + [repr(float(v)) for v in g.knots])
    with open(out / "objective.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "objective"])
        for i, v in enumerate(result.objective_trace):
            writer.writerow([i, repr(float(v))])
    return 0


def cmd_simulate(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    if args.desk:
        defaults = dict(reps=20, n_values=(5, 10, 20), sigma_values=(0.1, 0.5),
                        n_iter=10_000, burn_in=5_000)
    else:
        defaults = dict(reps=100, n_values=(5, 10, 20, 30, 50, 100, 200),
                        sigma_values=(0.1, 0.3, 0.5, 1.0),
                        n_iter=50_000, burn_in=25_000)
    cfg = simulation.StudyConfig(
        example_id=args.example,
        n_values=tuple(args.n_values) if args.n_values else defaults["n_values"],
        sigma_values=tuple(args.sigma_values) if args.sigma_values else defaults["sigma_values"],
        reps=args.reps if args.reps is not None else defaults["reps"],
        a=args.prior_a,
        n_iter=args.iters if args.iters is not None else defaults["n_iter"],
        burn_in=args.burn_in if args.burn_in is not None else defaults["burn_in"],
        seed=_seed(args),
    )
    result = simulation.run_study(cfg, workers=max(args.workers, 1))
    result.to_csv(out / "study.csv")
    result.to_long_csv(out / "study_long.csv")
    return 0


def cmd_classify(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    train_configs, train_labels = procrustes.load_landmark_dataset(args.input[0])
    test_configs, test_labels = procrustes.load_landmark_dataset(args.test)
    groups = sorted(set(train_labels))
    n_iter, burn = _iters(args, desk_default=(4_000, 2_000))
    means_kind = args.means or ("gpa" if args.metric == "procrustes" else "bayes")

    if args.metric == "procrustes":
        gpa_results = {
            g: procrustes.gpa_mean([c for c, l in zip(train_configs, train_labels) if l == g])
            for g in groups
        }
        means = [gpa_results[g].mean for g in groups]
        predict = lambda c: groups[procrustes.classify_nearest_mean(c, means, "procrustes")]
        # Registered training data for downstream feature-based learners.
        aligned_dir = out / "aligned_train"
        aligned_dir.mkdir(exist_ok=True)
        pooled = procrustes.gpa_mean(train_configs)
        for i, (coords, label) in enumerate(zip(pooled.aligned, train_labels)):
            procrustes.save_landmarks(coords, aligned_dir / f"train_{i:04d}.csv")
    else:
        from .geometry import SampledFunction

        def to_srvf(coords):
            grid = np.linspace(0.0, 1.0, coords.shape[0])
            q = srvf_transform(SampledFunction(grid, coords))
            return q.normalized()

        train_q = [to_srvf(np.asarray(c)) for c in train_configs]
        test_q = {id(c): to_srvf(np.asarray(c)) for c in test_configs}
        dp_cfg = dp.DpConfig(warp_knots=args.knots)
        means = []
        aligned_dir = out / "aligned_train"
        aligned_dir.mkdir(exist_ok=True)
        for g in groups:
            qs_g = [q for q, l in zip(train_q, train_labels) if l == g]
            if means_kind == "bayes":
                cfg = bayes.ModelConfig(M=args.knots, n_iter=n_iter, burn_in=burn,
                                        thin=10, seed=_seed(args), unit_norm=False)
                _, summary = bayes.register_multiple(qs_g, cfg)
                means.append(Srvf(qs_g[0].grid, summary.mean_function.values))
            else:
                means.append(dp.karcher_mean(qs_g, dp_cfg).mean)
        for i, (q, label) in enumerate(zip(train_q, train_labels)):
            g_idx = groups.index(label)
            warp, _ = dp.optimal_warp(means[g_idx], q, dp_cfg)
            aligned = warp_action(q, warp)
            _write_function_csv(aligned_dir / f"train_{i:04d}.csv", q.grid, aligned.values)
        predict = lambda c: groups[
            procrustes.classify_nearest_mean(test_q[id(c)], means, "elastic", dp_cfg)
        ]

    assignments = [predict(c) for c in test_configs]
    confusion = {g: {h: 0 for h in groups} for g in groups}
    correct = 0
    for truth, pred in zip(test_labels, assignments):
        if truth in confusion:
            confusion[truth][pred] += 1
        correct += truth == pred
    with open(out / "assignments.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label", "assigned"])
        for i, (truth, pred) in enumerate(zip(test_labels, assignments)):
            writer.writerow([i, truth, pred])
    with open(out / "confusion.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["truth\\assigned"] + groups)
        for g in groups:
            writer.writerow([g] + [confusion[g][h] for h in groups])
    with open(out / "rates.json", "w") as fh:
        json.dump({"accuracy": correct / max(len(assignments), 1),
                   "n_test": len(assignments), "means": means_kind}, fh, indent=2)
    return 0


def cmd_preprocess(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    processed = []
    for path in args.input:
        ds = ingest.load_functions(path)
        for item in ds.items:
            f = item.f
            if f.dim == 1:
                f = ingest.baseline_and_smooth(
                    f, args.baseline_lambda, args.smooth_lambda, args.tail_start
                )
            if args.resample:
                f = ingest.resample(f, args.resample)
            processed.append(
                ingest.DatasetItem(id=item.id, f=f, label=item.label, t_range=item.t_range)
            )
            _write_function_csv(out / f"{item.id}_processed.csv", f.grid, f.values)
    ingest.save_functions(
        ingest.Dataset(items=processed, meta={"source": "preprocess"}),
        out / "processed.json",
    )
    return 0


COMMANDS = {
    "register-pair": cmd_register_pair,
    "register-multi": cmd_register_multi,
    "karcher-mean": cmd_karcher_mean,
    "simulate": cmd_simulate,
    "classify": cmd_classify,
    "preprocess": cmd_preprocess,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    defaults = {}
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            chosen = action.choices[args.command]
            defaults = {a.dest: a.default for a in chosen._actions}
    try:
        args = _apply_config(args, defaults)
        return COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        _emit_error(exc, EXIT_INVALID_INPUT)
        return EXIT_INVALID_INPUT
    except (FloatingPointError, np.linalg.LinAlgError, tempering.TemperingError) as exc:
        _emit_error(exc, EXIT_NUMERIC_FAILURE)
        return EXIT_NUMERIC_FAILURE


def _emit_error(exc: Exception, code: int):
    module = getattr(exc, "__module__", None) or type(exc).__module__
    tb = exc.__traceback__
    while tb is not None and tb.tb_next is not None:
        tb = tb.tb_next
    origin = tb.tb_frame.f_globals.get("__name__", module) if tb else module
    payload = {
        "error": str(exc),
        "type": type(exc).__name__,
        "module": origin,
        "invariant": str(exc),
        "exit_code": code,
    }
    print(json.dumps(payload), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
