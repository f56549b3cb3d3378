import json

import pytest

from dedupchain.actors import CASE_OF
from dedupchain.harness.scenarios import (ScenarioError, ScenarioScript, bundled_names,
                                          bundled_scenarios, load_bundled, replay, run_scenario,
                                          run_suite)


def test_bundled_suite_passes():
    results = run_suite(bundled_scenarios())
    failed = [r.summary() for r in results if not r.passed]
    assert not failed
    assert len(results) == len(bundled_names()) == 10


def test_bundled_cover_every_case():
    cases = {s.case for s in bundled_scenarios()}
    assert set(CASE_OF.values()) <= cases
    assert {"1.1.1.1.1", "1.3"} <= cases


def test_parallel_suite_keeps_order_and_traces():
    scripts = bundled_scenarios()[:4]
    serial = run_suite(scripts)
    parallel = run_suite(scripts, workers=2)
    assert [r.name for r in parallel] == [s.name for s in scripts]
    assert [r.trace for r in parallel] == [r.trace for r in serial]


def test_replay_is_byte_identical():
    script = load_bundled("honest_pop")
    trace = run_scenario(script).trace
    assert replay(script, trace).identical


def test_replay_reports_first_difference():
    script = load_bundled("honest_pop")
    lines = run_scenario(script).trace.splitlines(keepends=True)
    lines[2] = lines[2].replace('"tau"', '"tau_"')
    r = replay(script, "".join(lines))
    assert not r.identical and r.first_difference == 3


def test_trace_uses_labels():
    trace = run_scenario(load_bundled("honest_first_upload")).trace
    assert '"alice"' in trace and "0x" not in trace
    for line in trace.splitlines():
        json.loads(line)


def test_wrong_expectation_fails():
    data = load_bundled("no_link").to_dict()
    data["expect"]["outcomes"]["alice:report"] = "stored"
    r = run_scenario(ScenarioScript.from_dict(data))
    assert not r.passed and any("outcome" in f for f in r.failures)
    assert r.summary().startswith("FAIL no_link")


def test_round_trip_through_json(tmp_path):
    s = load_bundled("wrong_pop")
    path = tmp_path / "s.json"
    path.write_text(s.dumps())
    assert ScenarioScript.load(path) == s


@pytest.mark.parametrize("mutate,match", [
    (lambda d: d.pop("schedule"), "missing"),
    (lambda d: d["schedule"].append({"op": "dance"}), "unknown op"),
    (lambda d: d["schedule"].append({"op": "store", "user": "alice", "file": "nope"}), "unknown file"),
])
def test_malformed_scripts(mutate, match):
    data = load_bundled("honest_first_upload").to_dict()
    mutate(data)
    with pytest.raises(ScenarioError, match=match):
        run_scenario(ScenarioScript.from_dict(data))


def test_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ScenarioError):
        ScenarioScript.load(path)
    with pytest.raises(ScenarioError):
        load_bundled("does_not_exist")
