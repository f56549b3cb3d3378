"""Declarative scenario scripts and the engine that runs them.

A script is a JSON document::

    {
      "name": "...", "case": "1.2", "description": "...",
      "params":   {"profit_P": "2.165", "storage_fee_SF": "0.165", ...},
      "contract": {"interval": 10, "deposit": "0.05"},
      "csp":      {"policy": "Honest", "funding": "0"},
      "users":    [{"name": "alice", "policy": "Honest"}],
      "files":    {"f1": "any text; its UTF-8 bytes are the file"},
      "schedule": [{"op": "store", "user": "alice", "file": "f1"},
                   {"op": "advance", "steps": 31}, {"op": "tick"},
                   {"op": "delink", "user": "alice", "file": "f1"}],
      "expect":   {"outcomes": {"alice:f1": "stored"},
                   "deltas": {"alice": "-363/2000", "csp": "363/2000"},
                   "stored_copies": {"f1": 1}}
    }

Amounts are exact decimal or ``n/d`` strings.  Deltas are balance changes
from funding to the end of the run.  Running a script always ends with a
settle step (all deadlines pass, everyone reacts), then checks fairness for
every upload, conservation, and the expectations.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

from ..actors import Outcome, Policy, fairness_predicate, upload_outcome
from ..crypto import FileObject, pipeline
from ..economics import EconParams
from ..ledger import ConservationError
from ..money import fmt, money
from .driver import World


class ScenarioError(ValueError):
    """The script itself is malformed."""


@dataclass
class ScenarioScript:
    name: str
    params: dict
    users: list
    files: dict
    schedule: list
    expect: dict = field(default_factory=dict)
    contract: dict = field(default_factory=dict)
    csp: dict = field(default_factory=dict)
    case: str = ""
    description: str = ""
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioScript":
        try:
            return cls(
                name=data["name"], params=data["params"], users=data["users"],
                files=data["files"], schedule=data["schedule"], expect=data.get("expect", {}),
                contract=data.get("contract", {}), csp=data.get("csp", {}),
                case=data.get("case", ""), description=data.get("description", ""),
                seed=data.get("seed", 0),
            )
        except KeyError as exc:
            raise ScenarioError(f"script is missing {exc.args[0]!r}") from None

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ScenarioScript":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"{path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "case": self.case, "description": self.description,
            "seed": self.seed, "params": self.params, "contract": self.contract,
            "csp": self.csp, "users": self.users, "files": self.files,
            "schedule": self.schedule, "expect": self.expect,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


@dataclass
class ScenarioResult:
    name: str
    case: str
    passed: bool
    failures: list
    trace: str
    outcomes: dict
    fairness: dict

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        detail = "" if self.passed else " - " + "; ".join(self.failures)
        return f"{verdict} {self.name} (case {self.case}){detail}"


def _file(script: ScenarioScript, key: str) -> FileObject:
    try:
        return FileObject(script.files[key].encode("utf-8"))
    except KeyError:
        raise ScenarioError(f"unknown file {key!r}") from None


def build_world(script: ScenarioScript) -> World:
    params = EconParams(**{k: (v if isinstance(v, bool) else money(v))
                           for k, v in script.params.items()})
    c = script.contract
    csp = script.csp
    return World.build(
        params,
        interval=int(c.get("interval", 10)),
        deposit=money(c.get("deposit", 0)),
        csp_policies=[Policy(csp.get("policy", "Honest"))],
        csp_funding=money(csp.get("funding", 0)),
        integer_mode=bool(c.get("integer_mode", False)),
        seed=script.seed,
        start=int(c.get("start", 0)),
    )


def run_scenario(script: ScenarioScript) -> ScenarioResult:
    world = build_world(script)
    ledger = world.ledger
    for spec in script.users:
        funding = spec.get("funding")
        world.add_user(spec["name"], Policy(spec.get("policy", "Honest")),
                       funding=None if funding is None else money(funding))
    start_balances = {name: ledger.balance(addr) for addr, name in ledger.labels.items()}
    uploads: dict[str, Any] = {}
    failures: list[str] = []

    for step_no, step in enumerate(script.schedule):
        op = step.get("op")
        if op == "store":
            user = world.users[step["user"]]
            uploads[f"{step['user']}:{step['file']}"] = user.user_store(
                _file(script, step["file"]), int(step.get("size", 1)))
        elif op == "advance":
            ledger.advance(int(step["steps"]))
        elif op == "tick":
            world.tick()
        elif op == "settle":
            world.settle()
        elif op == "delink":
            user = world.users[step["user"]]
            tag = pipeline(_file(script, step["file"]))[2]
            r = user.user_delink(tag)
            if not r.accepted:
                failures.append(f"step {step_no}: delink rejected ({r.reason})")
        else:
            raise ScenarioError(f"step {step_no}: unknown op {op!r}")
    world.settle()

    try:
        ledger.check_conservation()
    except ConservationError as exc:
        failures.append(f"conservation: {exc}")

    outcomes = {key: upload_outcome(ledger, up).value for key, up in uploads.items()}
    fairness = {}
    for key, up in uploads.items():
        user = world.users[key.split(":", 1)[0]]
        try:
            fairness[key] = fairness_predicate(ledger, user, up)
        except ValueError as exc:
            fairness[key] = False
            failures.append(f"fairness {key}: {exc}")
        if not fairness[key]:
            failures.append(f"fairness violated for {key}")

    exp = script.expect
    for key, want in exp.get("outcomes", {}).items():
        got = outcomes.get(key)
        if got != Outcome(want).value:
            failures.append(f"outcome {key}: expected {want}, got {got}")
    end_balances = {name: ledger.balance(addr) for addr, name in ledger.labels.items()}
    for name, want in exp.get("deltas", {}).items():
        if name not in end_balances:
            failures.append(f"delta {name}: unknown account")
            continue
        got = end_balances[name] - start_balances[name]
        if got != money(want):
            failures.append(f"delta {name}: expected {fmt(money(want))}, got {fmt(got)}")
    for key, want in exp.get("stored_copies", {}).items():
        tag = pipeline(_file(script, key))[2]
        got = sum(c.stored_copies(tag) for c in world.csps)
        if got != int(want):
            failures.append(f"stored copies of {key}: expected {want}, got {got}")
    for key, want in exp.get("link_active", {}).items():
        user = world.users[key.split(":", 1)[0]]
        got = user.holds_active_link(uploads[key])
        if got != bool(want):
            failures.append(f"link {key}: expected active={want}, got {got}")

    return ScenarioResult(script.name, script.case, not failures, failures, ledger.trace_lines(),
                          outcomes, fairness)


def run_suite(scripts: list, workers: int = 1) -> list:
    """Run every script, each on its own ledger; results keep input order."""
    if workers <= 1 or len(scripts) <= 1:
        return [run_scenario(s) for s in scripts]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_scenario, scripts))


@dataclass
class ReplayResult:
    identical: bool
    first_difference: Optional[int] = None
    expected: Optional[str] = None
    actual: Optional[str] = None


def replay(script: ScenarioScript, recorded: str) -> ReplayResult:
    """Re-run ``script`` and compare its trace byte for byte with ``recorded``."""
    fresh = run_scenario(script).trace
    if fresh == recorded:
        return ReplayResult(True)
    a, b = recorded.splitlines(), fresh.splitlines()
    for i in range(max(len(a), len(b))):
        x = a[i] if i < len(a) else None
        y = b[i] if i < len(b) else None
        if x != y:
            return ReplayResult(False, i + 1, x, y)
    return ReplayResult(False, len(a) + 1)


def bundled_names() -> list[str]:
    base = resources.files("dedupchain.data.scenarios")
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))


def load_bundled(name: str) -> ScenarioScript:
    base = resources.files("dedupchain.data.scenarios")
    path = base / f"{name}.json"
    if not path.is_file():
        raise ScenarioError(f"no bundled scenario {name!r}")
    return ScenarioScript.from_dict(json.loads(path.read_text(encoding="utf-8")))


def bundled_scenarios() -> list[ScenarioScript]:
    return [load_bundled(n) for n in bundled_names()]
