"""Command-line entry point.

Exit codes: 0 success, 1 invalid configuration or failed validation,
2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import (config_to_dict, load_config, parse_density, parse_hypotheses, parse_vector,
                     randomized_to_dict)
from .engine import (TwoStageConfig, default_first_stage, design_two_stage,
                     run_centralized_reference, run_two_stage)
from .errors import AssumptionViolation, ConfigError
from .maximin import maximin_all
from .montecarlo import (VARIANTS, CentralizedConfig, compare, run_experiment,
                         trial_seeds, write_summary)
from .quantizers import vector_divergences

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _unit_interval(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not in (0, 1)")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"{text} is not positive")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seqfusion",
                                description="Two-stage decentralized sequential multihypothesis tests.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, overrides=True):
        sp.add_argument("--config", required=True,
                        help="configuration file, or a bundled name (ht1, ht2)")
        sp.add_argument("--out", type=Path, help="output file")
        sp.add_argument("--seed", type=int, default=0, help="master seed")
        if overrides:
            sp.add_argument("--cost", type=_positive_float, help="cost per time step c")
            sp.add_argument("--u", type=_unit_interval, help="first-stage threshold u(c)")
            sp.add_argument("--sensors", type=_positive_int, help="replicate sensor 0 this many times")
            sp.add_argument("--rule", choices=("cost", "threshold"), help="second-stage stopping rule")

    sp = sub.add_parser("validate", help="check a configuration")
    common(sp, overrides=False)

    sp = sub.add_parser("maximin", help="solve for the maximin quantizer of every state")
    common(sp)

    sp = sub.add_parser("trial", help="run one traced trial")
    common(sp)
    sp.add_argument("--variant", choices=VARIANTS, default="two_stage")
    sp.add_argument("--truth", type=int, default=0, help="true state")

    sp = sub.add_parser("experiment", help="Monte Carlo estimate of E[N] and error rates")
    common(sp)
    sp.add_argument("--variant", choices=VARIANTS, default="two_stage")
    sp.add_argument("--trials", type=_positive_int, default=10_000, help="trials per state")
    sp.add_argument("--threads", type=_positive_int, default=1, help="worker processes")

    sp = sub.add_parser("compare", help="run several variants and compare them")
    common(sp)
    sp.add_argument("--variant", choices=VARIANTS, nargs="+", default=["centralized", "two_stage"])
    sp.add_argument("--trials", type=_positive_int, default=10_000)
    sp.add_argument("--threads", type=_positive_int, default=1)

    sp = sub.add_parser("table1", help="reproduce the reference table for both Gaussian scenarios")
    sp.add_argument("--out", type=Path, help="CSV output file")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trials", type=_positive_int, default=10_000)
    sp.add_argument("--threads", type=_positive_int, default=1)
    return p


# -- helpers ----------------------------------------------------------------------------

def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "sensors", None):
        cfg = cfg.with_sensors(args.sensors)
    changes = {k: getattr(args, k) for k in ("cost", "u", "rule") if getattr(args, k, None) is not None}
    return replace(cfg, **changes)


def _two_stage(cfg) -> TwoStageConfig:
    first = cfg.first_stage_vector() or default_first_stage(cfg.hs)
    if cfg.second_stage is None:
        return design_two_stage(cfg.hs, cfg.cost, u=cfg.u, rule=cfg.rule, first_stage=first,
                                block=cfg.block)
    tcfg = TwoStageConfig(cfg.cost, first, cfg.second_stage, u=cfg.u, rule=cfg.rule, block=cfg.block)
    tcfg.validate(cfg.hs)
    return tcfg


def _test_for(cfg, variant):
    if variant == "centralized":
        if cfg.thresholds is None:
            raise ConfigError("centralized variant needs centralized.thresholds")
        return CentralizedConfig(cfg.thresholds, cfg.cost)
    return _two_stage(cfg)


# -- subcommands -------------------------------------------------------------------------

def cmd_validate(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text()) if args.config not in ("ht1", "ht2") \
            else config_to_dict(load_config(args.config))
    except OSError as exc:
        print(f"{args.config}: cannot read: {exc.strerror}", file=sys.stderr)
        return EXIT_INVALID
    except json.JSONDecodeError as exc:
        print(f"{args.config}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}", file=sys.stderr)
        return EXIT_INVALID
    if not isinstance(raw, dict):
        print(f"{args.config}: configuration must be a JSON object", file=sys.stderr)
        return EXIT_INVALID

    checks = []

    def check(name, fn):
        try:
            fn()
            checks.append((name, True, ""))
            return True
        except (ConfigError, ValueError, TypeError) as exc:
            checks.append((name, False, str(exc)))
            return False

    M = len(raw.get("densities") or [])

    def priors():
        pri = raw.get("priors")
        if pri is None:
            return
        arr = np.asarray(pri, dtype=float)
        if arr.shape != (M,):
            raise ConfigError(f"need {M} priors", "priors")
        if np.any(arr <= 0):
            raise ConfigError("priors must be strictly positive", "priors")
        if abs(arr.sum() - 1) > 1e-12:
            raise ConfigError(f"priors sum to {arr.sum()!r}", "priors")

    def structure(with_priors):
        obj = dict(raw)
        if not with_priors:
            obj["priors"] = None
        try:
            return parse_hypotheses(obj)
        except AssumptionViolation:
            return None

    def densities():
        dens = raw.get("densities")
        if not isinstance(dens, list) or len(dens) < 2:
            raise ConfigError("need a list of at least two state densities", "densities")
        for m, entry in enumerate(dens):
            for k, d in enumerate(entry if isinstance(entry, list) else [entry]):
                parse_density(d, f"densities[{m}]" + (f"[{k}]" if isinstance(entry, list) else ""))

    if not check("densities parse", densities):
        for name, _, msg in checks:
            print(f"FAIL  {name}: {msg}")
        return EXIT_INVALID
    check("priors", priors)
    check("loss and groups", lambda: structure(False))

    hs = None

    def assumption():
        nonlocal hs
        obj = dict(raw)
        obj["priors"] = None
        hs = parse_hypotheses(obj)

    check("distinguishable states", assumption)
    if hs is not None:
        def first_stage():
            spec = (raw.get("test") or {}).get("first_stage")
            vec = default_first_stage(hs) if spec is None else \
                parse_vector(spec, "test.first_stage", hs.K)
            D = vector_divergences(vec, hs)
            if not np.all(D[~np.eye(hs.M, dtype=bool)] > 0):
                raise ConfigError("first-stage quantizer leaves a pair of states inseparable")
        check("first-stage divergences positive", first_stage)

        def second_stage():
            cfg = load_config(args.config)
            if cfg.second_stage is not None:
                _two_stage(cfg)
        check("second-stage quantizers", second_stage)

    ok = all(passed for _, passed, _ in checks)
    for name, passed, msg in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}" + (f": {msg}" if msg else ""))
    return EXIT_OK if ok else EXIT_INVALID


def cmd_maximin(args) -> int:
    cfg = _load(args)
    scope = "all" if all(len(g) == 1 for g in cfg.hs.groups) else "composite"
    results = maximin_all(cfg.hs, scope=scope, seed=args.seed)
    lines, dump = [], []
    for r in results:
        parts = []
        for w, comp in zip(r.quantizer.weights, r.quantizer.components):
            q = comp[0]
            desc = ("breakpoints=" + ", ".join(f"{b:+.6f}" for b in q.breakpoints)
                    if hasattr(q, "breakpoints") else f"cells={list(q.cells)}")
            parts.append(f"{w:.4f} x [{desc}]")
        lines.append(f"state {r.state}: I = {r.info_number:.6f} via {r.certificate.kind}; "
                     + " + ".join(parts))
        dump.append({"state": r.state, "info_number": r.info_number,
                     "certificate": r.certificate.kind, "divergences": list(r.divergences),
                     "quantizer": randomized_to_dict(r.quantizer)})
    print("\n".join(lines))
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(dump, indent=2) + "\n")
    return EXIT_OK


def cmd_trial(args) -> int:
    cfg = _load(args)
    if not 0 <= args.truth < cfg.hs.M:
        raise ConfigError(f"truth must lie in 0..{cfg.hs.M - 1}", "--truth")
    seed = int(trial_seeds(args.seed, args.variant, args.truth, 1)[0])
    rng = np.random.default_rng(seed)
    test = _test_for(cfg, args.variant)
    if args.variant == "centralized":
        out = run_centralized_reference(cfg.hs, test.thresholds, args.truth, rng, trace=True)
    else:
        out = run_two_stage(test, cfg.hs, args.truth, rng, trace=True)
    print(f"truth={args.truth} seed={seed} N0={out.N0} D0={out.D0} N={out.N} D={out.D}")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        with args.out.open("w") as fh:
            for rec in out.trace:
                fh.write(json.dumps(rec) + "\n")
    return EXIT_OK


def _summary_text(s) -> str:
    lines = [f"{'m':>3} {'R':>7} {'mean_N':>10} {'stderr':>8} {'mean_N0':>9} {'err':>10}"]
    for st in s.states:
        lines.append(f"{st.m:>3} {st.R:>7} {st.mean_N:>10.3f} {st.stderr_N:>8.3f} "
                     f"{st.mean_N0:>9.3f} {st.err_rate:>10.2e}")
    lines.append(f"Bayes risk {s.bayes_risk:.5f} +- {s.bayes_risk_stderr:.5f}")
    return "\n".join(lines)


def cmd_experiment(args) -> int:
    cfg = _load(args)
    res = run_experiment(_test_for(cfg, args.variant), cfg.hs, args.variant, args.trials,
                         args.seed, args.threads)
    print(_summary_text(res.summary))
    overall, se = res.summary.overall_error()
    print(f"overall error {overall:.3e} +- {se:.1e}")
    if args.out:
        write_summary(res.summary, args.out, config_to_dict(cfg), args.seed)
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    sums = [run_experiment(_test_for(cfg, v), cfg.hs, v, args.trials, args.seed, args.threads).summary
            for v in args.variant]
    print(compare(sums).render())
    if args.out:
        write_summary(sums, args.out, config_to_dict(cfg), args.seed)
    return EXIT_OK


def cmd_table1(args) -> int:
    from .reproduce import render, table1

    cells, sums = table1(args.trials, args.seed, args.threads)
    print(render(cells))
    if args.out:
        write_summary([sums[k] for k in sums], args.out,
                      {"table": "gaussian scenarios", "trials": args.trials}, args.seed)
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "maximin": cmd_maximin, "trial": cmd_trial,
            "experiment": cmd_experiment, "compare": cmd_compare, "table1": cmd_table1}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
