"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line (visible with ``-s`` or in
the captured output of a failure) before asserting.
"""

import random
import time
from fractions import Fraction as F

import pytest

from dedupchain.actors import Outcome, Policy, fairness_predicate, upload_outcome
from dedupchain.contracts import TRANSITIONS
from dedupchain.crypto import FileObject, pipeline
from dedupchain.economics import (EconParams, PopulationState, average_user_utility,
                                  utility_csp_dedup, utility_user_dedup)
from dedupchain.harness.config import bundled_config_text, parse_config
from dedupchain.harness.driver import World
from dedupchain.harness.experiments import (compare_to_reference, experiment1, experiment2,
                                            interaction_cost_bound, ordering,
                                            uniform_payments_sweep)
from dedupchain.harness.popcon import synthetic_dataset
from dedupchain.harness.scenarios import bundled_scenarios, run_suite

from machine import enumerate_machine
from oracles import grid_min_ef

SF, SC = F("0.165"), F("0.1")


@pytest.fixture
def verdict(capsys):
    def report(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {criterion}: {detail}")
        assert ok, detail
    return report


def _reference_check(series, params, quantum, tolerance):
    t0 = time.perf_counter()
    result = experiment1(params, ef_quantum=quantum)
    elapsed = time.perf_counter() - t0
    rows = compare_to_reference(result)[series]
    over = [d for d in rows if d.delta > tolerance]
    worst = max(rows, key=lambda d: d.delta)
    return result, rows, over, worst, elapsed


def _cell(result, ef, n_frac, users, column):
    for r in result.as_dicts():
        if (r["ef_fraction"], r["n_fraction"], r["users"]) == (ef, n_frac, users):
            return r[column]
    raise KeyError((ef, n_frac, users))


def test_user_utility_figure(verdict):
    params = EconParams.reference(waive_first_uploader_ef=True)
    result, rows, over, worst, elapsed = _reference_check("user_utility", params, None, F(1, 1000))
    anchors = [
        (F(1, 10), F(1), 10, F("2.133")),
        (F(1, 10), F(1), 100, F("2.1474")),
        (F(1, 2), F(1, 10), 10, F("1.992")),
    ]
    bad_anchors = [(float(e), N, float(want), float(_cell(result, e, n, N, "u_user1")))
                   for e, n, N, want in anchors
                   if abs(_cell(result, e, n, N, "u_user1") - want) > F(1, 1000)]
    ok = not over and not bad_anchors and elapsed < 1
    verdict("user utility figure", ok,
            f"{len(over)} of {len(rows)} points over 1e-3 (max {float(worst.delta):.4f}), "
            f"anchors off: {bad_anchors}, {elapsed:.3f} s")


def test_csp_utility_figure(verdict):
    cfg = parse_config(bundled_config_text())
    result, rows, over, worst, elapsed = _reference_check("csp_utility", cfg.params,
                                                          cfg.ef_quantum, F(2, 100))
    anchors = [
        (F(1, 10), F(1, 10), 10, "u_csp1", F("0.66")),
        (F(1, 10), F(1, 10), 100, "u_csp1", F("6.07")),
        (F(1, 10), F(1, 10), 10, "u_csp0", F("0.64")),
        (F(1, 10), F(1, 10), 100, "u_csp0", F("6.49")),
    ]
    bad_anchors = [(N, col, float(want)) for e, n, N, col, want in anchors
                   if abs(_cell(result, e, n, N, col) - want) > F(2, 100)]
    ok = not over and not bad_anchors and elapsed < 1
    where = [(float(d.ef_fraction), str(d.series), d.users, float(d.expected), float(d.computed))
             for d in over]
    verdict("provider utility figure", ok,
            f"{len(over)} of {len(rows)} points over 0.02 {where}, anchors off: {bad_anchors}, "
            f"{elapsed:.3f} s")


def test_ic_threshold(verdict):
    found = grid_min_ef(SF, SC, 10)
    closed = F(9, 10) * (SF - SC)
    percent = found / SF * 100
    ok = found == closed and abs(percent - 36) <= 1
    verdict("IC threshold", ok, f"grid min {found} = {float(closed)}, {float(percent):.2f}% of SF")


def test_uniform_payments(verdict):
    t0 = time.perf_counter()
    exact = uniform_payments_sweep(100)
    sf = 165 * 10 ** 15
    integer = uniform_payments_sweep(100, integer_mode=True, storage_fee=sf, extra_fee=sf // 10)
    elapsed = time.perf_counter() - t0
    ok = (exact.max_deviation == 0 and integer.max_deviation <= 1
          and all(s.csp_residual >= 0 for s in integer.steps) and elapsed < 10)
    verdict("uniform payments", ok,
            f"rational max deviation {exact.max_deviation}, integer max deviation "
            f"{integer.max_deviation}, min provider residual "
            f"{min(s.csp_residual for s in integer.steps)}, {elapsed:.2f} s")


def test_fairness_case_tree(verdict):
    scripts = bundled_scenarios()
    results = run_suite(scripts)
    problems = []
    for script, res in zip(scripts, results):
        if not res.passed:
            problems.append(res.summary())
        if not all(res.fairness.values()):
            problems.append(f"{script.name}: fairness")
        deltas = script.expect.get("deltas", {})
        for key, outcome in res.outcomes.items():
            user = key.split(":")[0]
            if outcome == Outcome.REFUNDED.value and F(deltas.get(user, "x")) != 0:
                problems.append(f"{script.name}: refund is not full")
            if outcome == Outcome.DEPOSIT_LOST.value:
                deposit = F(script.contract.get("deposit", 0))
                if F(deltas.get("csp", "0")) != deposit or deposit == 0:
                    problems.append(f"{script.name}: deposit not transferred")
    cases = sorted(s.case for s in scripts)
    verdict("fairness", not problems, f"{len(results)} scenarios, cases {cases}, problems {problems}")


def _quote_trial(rng, history, shuffle):
    """Upload ``history`` holders one by one, probing the quote before each."""
    w = World.build(EconParams.reference(F(1, 10)), deposit=0)
    d = FileObject(b"probe target")
    noise_files = [FileObject(f"noise {i}".encode()) for i in range(3)]
    quotes = []
    names = list(range(history * 5))
    if shuffle:
        rng.shuffle(names)
    it = iter(names)
    for _ in range(history):
        if shuffle:
            for _ in range(rng.randint(0, 3)):
                kind = rng.choice(["abort", "other", "tick"])
                if kind == "abort":
                    w.add_user(f"n{next(it)}", Policy.ABORT_AFTER_QUOTE,
                               funding=rng.randint(1, 5)).user_store(d)
                elif kind == "other":
                    w.add_user(f"n{next(it)}", funding=rng.randint(1, 5)).user_store(
                        rng.choice(noise_files))
                else:
                    w.ledger.advance(rng.randint(1, 3))
        probe = w.add_user(f"p{next(it)}", Policy.ABORT_AFTER_QUOTE,
                           funding=rng.randint(1, 5) if shuffle else None)
        quotes.append(probe.user_store(d).quote.pay)
        holder = w.add_user(f"h{next(it)}", funding=rng.randint(1, 5) if shuffle else None)
        quotes.append(holder.user_store(d).quote.pay)
    return quotes


def test_quote_correctness(verdict):
    rng = random.Random(2024)
    mismatches = 0
    for _ in range(100):
        history = rng.randint(1, 6)
        baseline = _quote_trial(rng, history, shuffle=False)
        if _quote_trial(rng, history, shuffle=True) != baseline:
            mismatches += 1
    verdict("quote correctness", mismatches == 0, f"{mismatches} of 100 trials changed a quote")


def test_inter_csp_equivalence(verdict):
    rng = random.Random(7)
    d = FileObject(b"placement target")
    params = EconParams.reference(F(1, 10))
    problems = []
    for trial in range(20):
        n_csps, m = rng.randint(2, 5), rng.randint(1, 10)
        placement = [rng.randrange(n_csps) for _ in range(m)]
        w = World.build(params, csp_count=n_csps, interconnected=True, af_reserve=5)
        users = [w.add_user(f"u{i}", csp_index=c) for i, c in enumerate(placement)]
        for u in users:
            u.user_store(d)
        w.settle()
        w.ledger.check_conservation()
        nets = [w.user_funding - w.ledger.balance(u.address) for u in users]
        if nets != [params.storage_fee_SF / m + params.extra_fee_EF] * m:
            problems.append(f"trial {trial}: nets {nets}")
        # paid out of the requesting providers' reserves, received by storers
        af_out = sum(5 - w.contract(i).af_reserve for i in range(n_csps))
        af_in = sum(x.af for i in range(n_csps) for x in w.contract(i).cross.values()
                    if x.state.value in ("active", "inactive")
                    and x.remote_csp in {c.address for c in w.csps})
        if af_in != af_out:
            problems.append(f"trial {trial}: AF {af_in} != {af_out}")
        for u in users:
            if not fairness_predicate(w.ledger, u, u.uploads[0]):
                problems.append(f"trial {trial}: fairness")
    verdict("inter-provider equivalence", not problems, f"20 placements, problems {problems}")


def test_experiment2_paper_scale(verdict):
    t0 = time.perf_counter()
    data = synthetic_dataset(403, 270_738, seed=0)
    result = experiment2(data, 5)
    checks = ordering(result, interaction_cost_bound(data, 5, EconParams.reference()))
    elapsed = time.perf_counter() - t0
    ok = all(c.ok for c in checks) and elapsed < 60
    rows = [(r["csp"], round(float(r["u0"]), 2), round(float(r["u1"]), 2), round(float(r["u2"]), 2))
            for r in result.as_dicts()]
    failing = [c.csp for c in checks if not c.ok]
    verdict("experiment 2 ordering", ok, f"{elapsed:.2f} s, rows {rows}, ordering fails at {failing}")


def test_interaction_costs_shift_utilities(verdict):
    base = EconParams.reference(F(1, 10))
    costs = EconParams.reference(F(1, 10), cost_user_I=F(1, 100), cost_csp_I=F(1, 200),
                              cost_deploy_I=F(1, 10))
    N, n = 10, 10
    user_shift = utility_user_dedup(base, n) - utility_user_dedup(costs, n)
    csp_shift = (utility_csp_dedup(base, [PopulationState(N, n)])
                 - utility_csp_dedup(costs, [PopulationState(N, n)]))
    w = World.build(costs, user_funding=1)
    u = w.add_user("u")
    u.user_store(FileObject(b"gas"))
    charged = 1 - w.ledger.balance(u.address) - u.uploads[0].quote.pay
    ok = (user_shift == F(1, 100) and csp_shift == N * F(1, 200) + F(1, 10)
          and charged == F(1, 100) and average_user_utility(costs, N, n) < average_user_utility(base, N, n))
    verdict("interaction costs (no target)", ok,
            f"user shift {user_shift}, provider shift {csp_shift}, ledger charged {charged}")


def test_state_machine_exhaustion(verdict):
    obs = list(enumerate_machine())
    accepted = {(o[0], o[5]) for o in obs if o[4]}
    wrong = [o for o in obs if o[5] != o[6]]
    torn = [o for o in obs if not o[7]]
    ok = accepted == set(TRANSITIONS) and not wrong and not torn
    verdict("state-machine exhaustion", ok,
            f"{len(obs)} combinations, {len(accepted)} transitions accepted, "
            f"{len(wrong)} unexpected, {len(torn)} non-atomic rejections")
