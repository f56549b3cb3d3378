"""Parsing Debian popularity-contest ``by_inst`` listings and package sizes.

A ``by_inst`` listing has one package per line::

    #rank name        inst  vote  old recent no-files (maintainer)
    1     dpkg        1200   800  100    300        0 (Debian dpkg team)

Comment lines start with ``#``; the listing ends with a dashed rule and a
``Total`` line, both skipped.  Sizes come from a separate two-column table of
``name bytes``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, TextIO, Union

import numpy as np


class PopconParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class PopconRecord:
    rank: int
    package: str
    inst: int
    vote: int
    old: int
    recent: int
    no_files: int
    size_bytes: int = 0


_FIELDS = ("rank", "name", "inst", "vote", "old", "recent", "no-files")


def _lines(stream: Union[TextIO, str, Iterable[str]]) -> Iterable[str]:
    if isinstance(stream, str):
        return io.StringIO(stream)
    return stream


def _skip(line: str) -> bool:
    s = line.strip()
    return not s or s.startswith("#") or s.startswith("-") or s.lower().startswith("total")


def parse_by_inst(stream) -> list[PopconRecord]:
    """Records without sizes, in listing order."""
    out = []
    for no, line in enumerate(_lines(stream), start=1):
        if _skip(line):
            continue
        parts = line.split()
        if len(parts) < len(_FIELDS):
            raise PopconParseError(no, f"expected {len(_FIELDS)} fields, found {len(parts)}")
        values = []
        for pos, (label, raw) in enumerate(zip(_FIELDS, parts)):
            if pos == 1:
                continue
            try:
                values.append(int(raw))
            except ValueError:
                raise PopconParseError(no, f"field {pos + 1} ({label}) is not an integer: {raw!r}") from None
        rank, inst, vote, old, recent, no_files = values
        if inst < 1:
            raise PopconParseError(no, f"package {parts[1]} has no installations")
        out.append(PopconRecord(rank, parts[1], inst, vote, old, recent, no_files))
    return out


def parse_sizes(stream) -> dict[str, int]:
    sizes: dict[str, int] = {}
    for no, line in enumerate(_lines(stream), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != 2:
            raise PopconParseError(no, "size table rows are 'name bytes'")
        try:
            size = int(parts[1])
        except ValueError:
            raise PopconParseError(no, f"size is not an integer: {parts[1]!r}") from None
        if size <= 0:
            raise PopconParseError(no, f"package {parts[0]} has non-positive size")
        sizes[parts[0]] = size
    return sizes


def parse_popcon(stream, sizes) -> list[PopconRecord]:
    """Parse a ``by_inst`` listing and join each package with its size.

    ``sizes`` is a mapping or a size-table stream.  A package missing from the
    size table is an error naming the package.
    """
    table = sizes if isinstance(sizes, dict) else parse_sizes(sizes)
    joined = []
    for rec in parse_by_inst(stream):
        if rec.package not in table:
            raise KeyError(f"no size for package {rec.package!r}")
        joined.append(PopconRecord(rec.rank, rec.package, rec.inst, rec.vote, rec.old,
                                   rec.recent, rec.no_files, table[rec.package]))
    if not joined:
        raise ValueError("dataset is empty")
    return joined


def synthetic_dataset(packages: int = 403, requests: int = 270_738, seed: int = 0,
                      zipf_s: float = 1.1) -> list[PopconRecord]:
    """A popcon-shaped dataset with exact package and request totals.

    Installations follow a Zipf-like profile over rank and sizes are
    log-normal around 1 MB, both drawn from a seeded generator.
    """
    if packages < 1 or requests < packages:
        raise ValueError("need at least one request per package")
    rng = np.random.default_rng(seed)
    weights = np.arange(1, packages + 1, dtype=float) ** -zipf_s
    weights *= rng.uniform(0.8, 1.2, packages)
    weights /= weights.sum()
    spare = requests - packages
    raw = weights * spare
    inst = np.floor(raw).astype(np.int64)
    short = spare - int(inst.sum())
    order = np.argsort(-(raw - inst), kind="stable")
    inst[order[:short]] += 1
    inst += 1
    inst = np.sort(inst)[::-1]
    sizes = np.maximum(1, np.round(rng.lognormal(mean=np.log(1e6), sigma=1.2, size=packages)))
    out = []
    for i in range(packages):
        n = int(inst[i])
        vote = int(n * 0.6)
        old = int(n * 0.3)
        out.append(PopconRecord(i + 1, f"pkg{i + 1:04d}", n, vote, old, n - vote - old, 0,
                                int(sizes[i])))
    return out


def format_by_inst(records: Iterable[PopconRecord]) -> str:
    lines = ["#Format", "#", "#rank name inst vote old recent no-files (maintainer)"]
    total = [0, 0, 0, 0, 0]
    for r in records:
        lines.append(f"{r.rank:<6}{r.package:<32}{r.inst:>8}{r.vote:>8}{r.old:>8}{r.recent:>8}"
                     f"{r.no_files:>8} (synthetic)")
        for i, v in enumerate((r.inst, r.vote, r.old, r.recent, r.no_files)):
            total[i] += v
    lines.append("-" * 78)
    lines.append("Total" + " " * 33 + "".join(f"{v:>8}" for v in total))
    return "\n".join(lines) + "\n"


def format_sizes(records: Iterable[PopconRecord]) -> str:
    return "".join(f"{r.package} {r.size_bytes}\n" for r in records)
