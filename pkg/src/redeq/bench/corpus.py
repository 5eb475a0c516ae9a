"""Benchmark equations and the tab-separated corpus manifest format.

One equation per line: ``id<TAB>equation<TAB>x0:lo:hi[,x1:lo:hi...]``.
Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..errors import DataError, EquationSyntaxError
from ..expr import Expression, parse_expression

MAX_VARIABLES = 3


@dataclass(frozen=True)
class BenchmarkEquation:
    id: str
    equation: str
    variable_ranges: tuple  # ((lo, hi), ...) indexed by variable

    def __post_init__(self):
        if not 1 <= len(self.variable_ranges) <= MAX_VARIABLES:
            raise DataError(f"{self.id}: 1 to {MAX_VARIABLES} variables supported")
        for lo, hi in self.variable_ranges:
            if not lo < hi:
                raise DataError(f"{self.id}: empty range [{lo}, {hi}]")
        used = self.expression.variables()
        if used and max(used) >= len(self.variable_ranges):
            raise DataError(f"{self.id}: x{max(used)} has no range")

    @property
    def expression(self) -> Expression:
        return parse_expression(self.equation)

    @property
    def variable_count(self) -> int:
        return len(self.variable_ranges)

    def manifest_line(self) -> str:
        ranges = ",".join(f"x{i}:{lo:g}:{hi:g}" for i, (lo, hi) in enumerate(self.variable_ranges))
        return f"{self.id}\t{self.equation}\t{ranges}"


def parse_manifest(text: str) -> list[BenchmarkEquation]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 3:
            raise DataError(f"manifest line {lineno}: expected 3 tab-separated fields")
        eq_id, equation, ranges_text = (p.strip() for p in parts)
        ranges = {}
        for item in ranges_text.split(","):
            try:
                name, lo, hi = item.split(":")
                idx = int(name.strip().lstrip("x"))
                ranges[idx] = (float(lo), float(hi))
            except ValueError:
                raise DataError(f"manifest line {lineno}: bad range {item!r}") from None
        if sorted(ranges) != list(range(len(ranges))):
            raise DataError(f"manifest line {lineno}: ranges must cover x0..x{len(ranges) - 1}")
        try:
            out.append(BenchmarkEquation(eq_id, equation, tuple(ranges[i] for i in range(len(ranges)))))
        except EquationSyntaxError as exc:
            raise DataError(f"manifest line {lineno}: {exc}") from None
    return out


def load_corpus(path=None) -> list[BenchmarkEquation]:
    """Read a manifest file, or the bundled Feynman-style corpus by default."""
    if path is None:
        text = resources.files("redeq.bench").joinpath("data/feynman.tsv").read_text()
    else:
        text = Path(path).read_text()
    return parse_manifest(text)
