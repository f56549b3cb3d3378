"""``dedupchain`` command line.

Subcommands::

    bounds       admissible extra-fee interval and IC/IR verdicts
    scenario     run scenario scripts (or the bundled suite), replay traces
    experiment1  utility surfaces over the (EF, n/N, N) grid
    experiment2  per-provider utilities on a popcon dataset
    dataset      generate a synthetic popcon-shaped dataset
    sweep        uniform-payment check over 1..m uploads

Exit status is 0 when every assertion a command makes holds, 1 when one
fails, and 2 for usage, parse or I/O errors.  The last line on stdout is a
``summary`` line of ``key=value`` pairs.  Output files go to ``--out``, else
``$DEDUPCHAIN_OUT``, else ``./out``.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace
from decimal import Decimal
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .economics import (EconParams, PopulationState, Role, average_user_utility,
                        extra_fee_interval, ic_check, ir_check, utility_csp_dedup)
from .harness.config import ConfigError, RunConfig, bundled_config_text, load_config, parse_config
from .harness.experiments import (compare_to_reference, experiment1, experiment2,
                                  grid_params, interaction_cost_bound, ordering,
                                  simulate_experiment1_point, simulate_experiment2,
                                  uniform_payments_sweep)
from .harness.popcon import (PopconParseError, format_by_inst, format_sizes, parse_popcon,
                             synthetic_dataset)
from .harness.scenarios import (ScenarioError, ScenarioScript, bundled_names, load_bundled,
                                replay, run_suite)
from .money import money, to_decimal_str

OUT_ENV = "DEDUPCHAIN_OUT"
USER_TOLERANCE = Fraction(1, 1000)
CSP_TOLERANCE = Fraction(2, 100)
CROSS_CHECK_POINTS = ((Fraction(1, 10), Fraction(1), 10),
                      (Fraction(3, 10), Fraction(1, 2), 20),
                      (Fraction(1, 2), Fraction(1, 10), 10))
INTEGER_SF = 165 * 10**15  # 0.165 in 18-decimal smallest units


class UsageError(Exception):
    pass


def dec(value: Fraction, places: int = 10) -> str:
    """Decimal text for display: exact when short, else rounded to ``places``."""
    text = format(Decimal(to_decimal_str(money(value), places)), "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return "0" if text == "-0" else text


def _money_arg(text: str) -> Fraction:
    try:
        return money(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _nonneg_money(text: str) -> Fraction:
    v = _money_arg(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0: {text!r}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return v


def _costs(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("costs are I_user,I_csp,I_deploy")
    return tuple(_nonneg_money(p) for p in parts)


def _out_dir(arg: Optional[str], cfg: Optional[RunConfig] = None) -> Path:
    chosen = arg or (cfg.out_dir if cfg else None) or os.environ.get(OUT_ENV) or "out"
    path = Path(chosen)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc.strerror}") from None
    return path


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def _summary(command: str, ok: bool, **fields) -> None:
    parts = [f"command={command}", f"status={'pass' if ok else 'fail'}"]
    parts += [f"{k}={v}" for k, v in fields.items()]
    print("summary " + " ".join(parts))


# -- bounds -------------------------------------------------------------------


def cmd_bounds(args) -> int:
    cost_u = cost_c = cost_d = Fraction(0)
    if args.costs:
        cost_u, cost_c, cost_d = args.costs
    try:
        p = EconParams(profit_P=args.p if args.p is not None else 0, storage_fee_SF=args.sf,
                       storage_cost_SC=args.sc, cost_user_I=cost_u, cost_csp_I=cost_c,
                       cost_deploy_I=cost_d)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cost_aware = args.costs is not None
    interval = extra_fee_interval(p, args.n, cost_aware)
    if interval is None:
        print(f"n={args.n}: no extra fee satisfies both roles")
        _summary("bounds", False, n=args.n, min="none", max="none")
        return 1
    lo, hi = interval
    print(f"n={args.n}: extra fee interval min {dec(lo)} max {dec(hi)}")
    ef = lo if args.ef is None else args.ef
    q = p.with_ef(ef)
    print(f"verdicts at EF={dec(ef)}:")
    verdicts = {}
    for role in Role:
        ic_ok, margin = ic_check(q, args.n, role)
        line = f"  {role.value:<4} IC {'pass' if ic_ok else 'fail'} (U1-U0 = {dec(margin)})"
        verdicts[f"{role.value}_ic"] = "pass" if ic_ok else "fail"
        if role is Role.USER and args.p is None:
            line += ", IR n/a (give --p)"
            verdicts["user_ir"] = "na"
        else:
            ir_ok = ir_check(q, args.n, role)
            line += f", IR {'pass' if ir_ok else 'fail'}"
            verdicts[f"{role.value}_ir"] = "pass" if ir_ok else "fail"
        print(line)
    ok = all(v != "fail" for v in verdicts.values())
    _summary("bounds", ok, n=args.n, min=dec(lo), max=dec(hi), ef=dec(ef), **verdicts)
    return 0 if ok else 1


# -- scenario -------------------------------------------------------------------


def cmd_scenario(args) -> int:
    if args.script is None and args.bundled is None:
        raise UsageError("give --script PATH or --bundled [NAME ...]")
    scripts = []
    for path in args.script or []:
        if not Path(path).is_file():
            raise UsageError(f"no such script: {path}")
        scripts.append(ScenarioScript.load(path))
    if args.bundled is not None:
        names = args.bundled or bundled_names()
        scripts.extend(load_bundled(n) for n in names)

    if args.replay:
        if len(scripts) != 1:
            raise UsageError("--replay needs exactly one script")
        try:
            recorded = Path(args.replay).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read {args.replay}: {exc.strerror}") from None
        res = replay(scripts[0], recorded)
        if res.identical:
            print(f"replay of {scripts[0].name}: identical")
        else:
            print(f"replay of {scripts[0].name}: differs at line {res.first_difference}")
            print(f"  recorded: {res.expected}")
            print(f"  fresh:    {res.actual}")
        _summary("scenario", res.identical, replay="identical" if res.identical else "differs",
                 line=res.first_difference or 0)
        return 0 if res.identical else 1

    out = _out_dir(args.out)
    results = run_suite(scripts, workers=args.workers)
    for res in results:
        print(res.summary())
        _write(out / f"{res.name}.trace.jsonl", res.trace)
    failed = sum(not r.passed for r in results)
    _summary("scenario", failed == 0, scenarios=len(results), passed=len(results) - failed,
             failed=failed, out=out)
    return 0 if failed == 0 else 1


# -- experiment 1 ---------------------------------------------------------------


def _load_run_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return parse_config(bundled_config_text(), "<bundled experiment1.ini>")
    return load_config(path)


def cmd_experiment1(args) -> int:
    cfg = _load_run_config(args.config)
    params = cfg.params
    if args.waiver is not None:
        params = replace(params, waive_first_uploader_ef=args.waiver)
    quantum = cfg.ef_quantum
    if args.ef_quantum is not None:
        quantum = None if args.ef_quantum == 0 else args.ef_quantum
    out = _out_dir(args.out, cfg)

    t0 = time.perf_counter()
    result = experiment1(params, cfg.ef_fractions, cfg.n_fractions, cfg.users, quantum)
    elapsed = time.perf_counter() - t0
    _write(out / "experiment1.csv", result.to_csv())

    print(f"{'EF':>5} {'n/N':>5} {'N':>4} {'U_u0':>8} {'U_u1':>8} {'U_c0':>8} {'U_c1':>8}")
    for r in result.as_dicts():
        if r["users"] in (min(cfg.users), max(cfg.users)):
            print(f"{dec(r['ef_fraction']):>5} {dec(r['n_fraction']):>5} {r['users']:>4} "
                  f"{dec(r['u_user0'], 4):>8} {dec(r['u_user1'], 4):>8} "
                  f"{dec(r['u_csp0'], 4):>8} {dec(r['u_csp1'], 4):>8}")
    print(f"{len(result.rows)} grid points in {elapsed:.3f} s, written to {out / 'experiment1.csv'}")

    ok = True
    fields = {"points": len(result.rows)}
    deltas = compare_to_reference(result)
    for name, tol in (("user_utility", USER_TOLERANCE), ("csp_utility", CSP_TOLERANCE)):
        rows = deltas[name]
        if not rows:
            print(f"{name}: no reference points on this grid")
            continue
        worst = max(rows, key=lambda d: d.delta)
        over = sum(d.delta > tol for d in rows)
        ok &= over == 0
        print(f"{name}: max |delta| {dec(worst.delta)} at EF={dec(worst.ef_fraction)} "
              f"series={worst.series if isinstance(worst.series, str) else dec(worst.series)} "
              f"N={worst.users}; {over} of {len(rows)} points over {dec(tol)}")
        fields[f"{name.split('_')[0]}_max_delta"] = dec(worst.delta)
        fields[f"{name.split('_')[0]}_over"] = over

    if not args.skip_simulation:
        base = replace(params, waive_first_uploader_ef=False)
        mismatches = 0
        for ef_f, n_f, N in CROSS_CHECK_POINTS:
            p = grid_params(base, ef_f, quantum)
            n = int(n_f * N)
            sim = simulate_experiment1_point(p, N, n, seed=cfg.seed)
            want_u = average_user_utility(p, N, n)
            want_c = utility_csp_dedup(p, [PopulationState(N, n)])
            same = sim.avg_user_utility == want_u and sim.csp_utility == want_c
            mismatches += not same
            print(f"ledger cross-check EF={dec(ef_f)} n/N={dec(n_f)} N={N}: "
                  f"user {dec(sim.avg_user_utility)} csp {dec(sim.csp_utility)} "
                  f"({'exact' if same else 'MISMATCH'})")
        ok &= mismatches == 0
        fields["simulation_mismatches"] = mismatches
    _summary("experiment1", ok, **fields)
    return 0 if ok else 1


# -- experiment 2 ---------------------------------------------------------------


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _dataset(args):
    if (args.dataset is None) != (args.sizes is None):
        raise UsageError("--dataset and --sizes go together")
    if args.dataset is None:
        base = resources.files("dedupchain.data.fixtures")
        listing = (base / "by_inst_small.txt").read_text(encoding="utf-8")
        sizes = (base / "sizes_small.txt").read_text(encoding="utf-8")
        source = "bundled fixture"
    else:
        listing, sizes, source = _read(args.dataset), _read(args.sizes), args.dataset
    try:
        return parse_popcon(listing, sizes), source
    except PopconParseError as exc:
        raise UsageError(f"{source}: {exc}") from None
    except (KeyError, ValueError) as exc:
        raise UsageError(f"{source}: {exc.args[0]}") from None


def cmd_experiment2(args) -> int:
    cfg = _load_run_config(args.config)
    dataset, source = _dataset(args)
    csps = args.csps or cfg.csps
    ef_fraction = cfg.exp2_ef_fraction if args.ef_fraction is None else args.ef_fraction
    seed = cfg.seed if args.seed is None else args.seed
    out = _out_dir(args.out, cfg)

    t0 = time.perf_counter()
    result = experiment2(dataset, csps, cfg.params, ef_fraction, args.assignment or cfg.assignment,
                         seed)
    elapsed = time.perf_counter() - t0
    _write(out / "experiment2.csv", result.to_csv())
    requests = sum(r.inst for r in dataset)
    print(f"{len(dataset)} packages, {requests} requests from {source}, {csps} providers "
          f"({elapsed:.3f} s)")
    slack = interaction_cost_bound(dataset, csps, cfg.params, args.assignment or cfg.assignment,
                                   seed)
    checks = ordering(result, slack)
    print(f"{'csp':<4} {'U0':>12} {'U1':>12} {'U2':>12} {'AF_in':>10} {'AF_out':>10}  order")
    for row, chk in zip(result.as_dicts(), checks):
        verdict = ("U2>=U1>=U0" if chk.ok else
                   ("U2<U1" if not chk.u2_ge_u1 else "") + (" U1<U0" if not chk.u1_ge_u0 else ""))
        print(f"{row['csp']:<4} {dec(row['u0'], 4):>12} {dec(row['u1'], 4):>12} "
              f"{dec(row['u2'], 4):>12} {dec(row['af_in'], 4):>10} {dec(row['af_out'], 4):>10}  "
              f"{verdict.strip()}")
    ok = all(c.ok for c in checks)
    fields = {"csps": csps, "requests": requests,
              "u2_ge_u1": sum(c.u2_ge_u1 for c in checks),
              "u1_ge_u0": sum(c.u1_ge_u0 for c in checks)}
    if args.simulate:
        sim = simulate_experiment2(dataset, csps, cfg.params, ef_fraction, seed)
        same = all(a["u2"] == b["u2"] and a["af_in"] == b["af_in"] and a["af_out"] == b["af_out"]
                   for a, b in zip(result.as_dicts(), sim.as_dicts()))
        print(f"ledger simulation: {'matches' if same else 'DIFFERS FROM'} the analytic U2 column")
        ok &= same
        fields["simulation"] = "match" if same else "differs"
    print(f"written to {out / 'experiment2.csv'}")
    _summary("experiment2", ok, **fields)
    return 0 if ok else 1


# -- dataset / sweep ------------------------------------------------------------


def cmd_dataset(args) -> int:
    if args.requests < args.packages:
        raise UsageError("--requests must be at least --packages")
    out = _out_dir(args.out)
    data = synthetic_dataset(args.packages, args.requests, args.seed)
    _write(out / "by_inst.txt", format_by_inst(data))
    _write(out / "sizes.txt", format_sizes(data))
    print(f"wrote {out / 'by_inst.txt'} and {out / 'sizes.txt'}")
    _summary("dataset", True, packages=args.packages, requests=args.requests, seed=args.seed)
    return 0


def cmd_sweep(args) -> int:
    kwargs = {}
    if args.integer:
        kwargs = {"storage_fee": INTEGER_SF, "extra_fee": INTEGER_SF // 10}
    if args.sf is not None:
        kwargs["storage_fee"] = args.sf
    if args.ef is not None:
        kwargs["extra_fee"] = args.ef
    t0 = time.perf_counter()
    report = uniform_payments_sweep(args.m_max, args.integer, **kwargs)
    elapsed = time.perf_counter() - t0
    tol = 1 if args.integer else 0
    residual = max((abs(s.csp_residual) for s in report.steps), default=0)
    ok = report.ok(tol)
    print(f"m=1..{args.m_max}: max per-owner deviation {dec(report.max_deviation)}, "
          f"max provider residual {dec(residual)} ({elapsed:.2f} s)")
    _summary("sweep", ok, m_max=args.m_max, integer=str(args.integer).lower(),
             max_deviation=dec(report.max_deviation))
    return 0 if ok else 1


# -- wiring ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dedupchain", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", help="extra-fee interval and IC/IR verdicts")
    b.add_argument("--sf", type=_nonneg_money, required=True, help="storage fee per unit")
    b.add_argument("--sc", type=_nonneg_money, required=True, help="storage cost per unit")
    b.add_argument("--n", type=_positive_int, required=True, help="dedup rate")
    b.add_argument("--p", type=_nonneg_money, help="user profit (enables the user IR verdict)")
    b.add_argument("--ef", type=_nonneg_money, help="extra fee for the verdicts (default: min)")
    b.add_argument("--costs", type=_costs, help="interaction costs I_user,I_csp,I_deploy")
    b.set_defaults(func=cmd_bounds)

    s = sub.add_parser("scenario", help="run scenario scripts or replay a trace")
    s.add_argument("--script", action="append", help="scenario JSON (repeatable)")
    s.add_argument("--bundled", nargs="*", metavar="NAME",
                   help="bundled scenarios by name (all when no name is given)")
    s.add_argument("--replay", metavar="TRACE", help="verify a recorded trace byte for byte")
    s.add_argument("--workers", type=_positive_int, default=1)
    s.add_argument("--out", help="directory for trace files")
    s.set_defaults(func=cmd_scenario)

    e1 = sub.add_parser("experiment1", help="utility surfaces over the grid")
    e1.add_argument("--config", help="INI run config (default: bundled reference settings)")
    e1.add_argument("--out")
    e1.add_argument("--waiver", action=argparse.BooleanOptionalAction, default=None,
                    help="waive the first dedup uploader's extra fee in the analysis")
    e1.add_argument("--ef-quantum", type=_nonneg_money,
                    help="truncate EF to this quantum (0 disables)")
    e1.add_argument("--skip-simulation", action="store_true",
                    help="skip the ledger cross-check at three grid points")
    e1.set_defaults(func=cmd_experiment1)

    e2 = sub.add_parser("experiment2", help="per-provider utilities on a popcon dataset")
    e2.add_argument("--config")
    e2.add_argument("--dataset", help="popcon by_inst listing (default: bundled fixture)")
    e2.add_argument("--sizes", help="package size table")
    e2.add_argument("--csps", type=_positive_int)
    e2.add_argument("--assignment", choices=("round_robin", "random"))
    e2.add_argument("--ef-fraction", type=_nonneg_money)
    e2.add_argument("--seed", type=int)
    e2.add_argument("--simulate", action="store_true",
                    help="also run the shared-dedup case on the ledger (slow on large data)")
    e2.add_argument("--out")
    e2.set_defaults(func=cmd_experiment2)

    d = sub.add_parser("dataset", help="generate a synthetic popcon dataset")
    d.add_argument("--packages", type=_positive_int, default=403)
    d.add_argument("--requests", type=_positive_int, default=270_738)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out")
    d.set_defaults(func=cmd_dataset)

    w = sub.add_parser("sweep", help="uniform-payment check for 1..m uploads")
    w.add_argument("--m-max", type=_positive_int, default=100)
    w.add_argument("--integer", action="store_true", help="integer smallest-unit money")
    w.add_argument("--sf", type=_nonneg_money)
    w.add_argument("--ef", type=_nonneg_money)
    w.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, ScenarioError) as exc:
        print(f"dedupchain {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
