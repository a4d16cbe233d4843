"""Inter-rater agreement for 1-10 ratings of extraction outputs.

Krippendorff's alpha is computed from the coincidence matrix of pairable
values: ``alpha = 1 - D_o / D_e``.  Items rated by fewer than two raters
carry no pairable information and are dropped.
"""
from __future__ import annotations

import csv
import io
import math
import statistics
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Optional

from .errors import (
    BadHeader,
    DegenerateData,
    DuplicateCell,
    EmptyInput,
    NothingPairable,
    RatingsError,
    ScoreOutOfRange,
)

ITEM_KINDS = ("step", "tool", "action", "prompt")
RELIABILITY_THRESHOLD = 0.667
METRICS = ("nominal", "ordinal", "interval")
HEADER = ["rater_id", "item_id", "item_kind", "score"]


@dataclass(frozen=True)
class RatingMatrix:
    raters: tuple[str, ...]
    items: tuple[tuple[str, str], ...]  # (item_id, item_kind)
    cells: dict  # (rater_id, item_id) -> int | None

    def __post_init__(self):
        if len(self.raters) < 2:
            raise RatingsError("need at least 2 raters")
        if not self.items:
            raise RatingsError("need at least 1 item")
        for key, score in self.cells.items():
            if score is not None and not 1 <= score <= 10:
                raise ScoreOutOfRange(f"{key}: score {score} outside 1..10")

    def score(self, rater: str, item_id: str) -> Optional[int]:
        return self.cells.get((rater, item_id))

    def units(self) -> list[list[int]]:
        """Present scores per item, in item order."""
        return [[s for r in self.raters if (s := self.score(r, item_id)) is not None]
                for item_id, _ in self.items]

    def scores(self) -> list[int]:
        return [s for unit in self.units() for s in unit]

    def restrict(self, kind: str) -> "RatingMatrix":
        items = tuple(it for it in self.items if it[1] == kind)
        ids = {i for i, _ in items}
        cells = {k: v for k, v in self.cells.items() if k[1] in ids}
        return RatingMatrix(self.raters, items, cells)

    @classmethod
    def from_rows(cls, rows: list[list[Optional[int]]], kind: str = "step",
                  rater_ids: Optional[list[str]] = None) -> "RatingMatrix":
        """Build from a raters x items nested list (``None`` = missing)."""
        rater_ids = rater_ids or [f"r{i}" for i in range(len(rows))]
        n_items = len(rows[0]) if rows else 0
        items = tuple((f"i{j}", kind) for j in range(n_items))
        cells = {(rater_ids[i], f"i{j}"): rows[i][j]
                 for i in range(len(rows)) for j in range(n_items)}
        return cls(tuple(rater_ids), items, cells)


def load_ratings(text: str) -> RatingMatrix:
    reader = csv.reader(io.StringIO(text.lstrip("﻿")))
    rows = [r for r in reader if any(c.strip() for c in r)]
    if not rows:
        raise BadHeader("empty ratings file")
    if [c.strip() for c in rows[0]] != HEADER:
        raise BadHeader(f"expected header {','.join(HEADER)}")
    raters: dict[str, None] = {}
    items: dict[str, str] = {}
    cells: dict = {}
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != 4:
            raise RatingsError(f"line {lineno}: expected 4 fields")
        rater, item, kind, raw = (c.strip() for c in row)
        if kind not in ITEM_KINDS:
            raise RatingsError(f"line {lineno}: unknown item kind {kind!r}")
        if items.setdefault(item, kind) != kind:
            raise RatingsError(f"line {lineno}: item {item!r} has two kinds")
        if (rater, item) in cells:
            raise DuplicateCell(f"line {lineno}: second score for ({rater}, {item})")
        if raw:
            try:
                score = int(raw)
            except ValueError:
                raise RatingsError(f"line {lineno}: score {raw!r} is not an integer") from None
            if not 1 <= score <= 10:
                raise ScoreOutOfRange(f"line {lineno}: score {score} outside 1..10")
        else:
            score = None
        raters[rater] = None
        cells[(rater, item)] = score
    return RatingMatrix(tuple(raters), tuple(items.items()), cells)


def coincidence_matrix(m: RatingMatrix) -> dict[tuple[int, int], float]:
    """o[v, v'] summed over items; each ordered pair weighs 1/(m_u - 1)."""
    o: dict[tuple[int, int], float] = defaultdict(float)
    pairable = False
    for unit in m.units():
        mu = len(unit)
        if mu < 2:
            continue
        pairable = True
        for i, v in enumerate(unit):
            for j, w in enumerate(unit):
                if i != j:
                    o[(v, w)] += 1.0 / (mu - 1)
    if not pairable:
        raise NothingPairable("no item has two or more scores")
    return dict(o)


def difference_function(metric: str, marginals: dict[int, float]):
    """Squared difference delta^2(v, w) for the given metric."""
    if metric == "nominal":
        return lambda v, w: 0.0 if v == w else 1.0
    if metric == "interval":
        return lambda v, w: float(v - w) ** 2
    if metric == "ordinal":
        values = sorted(marginals)

        def ordinal(v, w):
            if v == w:
                return 0.0
            lo, hi = min(v, w), max(v, w)
            between = sum(marginals[g] for g in values if lo <= g <= hi)
            return (between - (marginals[v] + marginals[w]) / 2.0) ** 2
        return ordinal
    raise ValueError(f"unknown metric {metric!r}")


@dataclass(frozen=True)
class AgreementResult:
    alpha: float
    d_o: float
    d_e: float
    metric: str
    n_pairable: int
    reliable: bool


def is_reliable(alpha: float) -> bool:
    return alpha >= RELIABILITY_THRESHOLD


def krippendorff_alpha(m: RatingMatrix, metric: str = "interval") -> AgreementResult:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    o = coincidence_matrix(m)
    marginals: dict[int, float] = defaultdict(float)
    for (v, _), count in o.items():
        marginals[v] += count
    n = sum(marginals.values())
    delta = difference_function(metric, marginals)
    d_o = sum(count * delta(v, w) for (v, w), count in o.items()) / n
    d_e = sum(marginals[v] * marginals[w] * delta(v, w)
              for v in marginals for w in marginals) / (n * (n - 1))
    if d_e <= 0:
        raise DegenerateData("all pairable scores are identical; alpha is undefined")
    alpha = 1.0 - d_o / d_e
    return AgreementResult(alpha, d_o, d_e, metric, int(round(n)), is_reliable(alpha))


@dataclass(frozen=True)
class DescriptiveStats:
    n: int
    mean: float
    variance_population: float
    variance_sample: Optional[float]
    sd_population: float
    sd_sample: Optional[float]
    min: float
    max: float


def descriptive_stats(values) -> DescriptiveStats:
    values = [float(v) for v in values]
    if not values:
        raise EmptyInput("no values")
    pvar = statistics.pvariance(values)
    svar = statistics.variance(values) if len(values) > 1 else None
    return DescriptiveStats(
        n=len(values),
        mean=statistics.fmean(values),
        variance_population=pvar,
        variance_sample=svar,
        sd_population=math.sqrt(pvar),
        sd_sample=math.sqrt(svar) if svar is not None else None,
        min=min(values),
        max=max(values),
    )


def verdict(alpha: float) -> str:
    return "reliable" if is_reliable(alpha) else "not reliable"


def _section(m: RatingMatrix, metric: str) -> dict:
    out: dict = {"metric": metric, "n_items": len(m.items),
                 "stats": asdict(descriptive_stats(m.scores())) if m.scores() else None}
    try:
        res = krippendorff_alpha(m, metric)
    except (DegenerateData, NothingPairable) as exc:
        out.update(alpha=None, d_o=None, d_e=None, n_pairable=0, reliable=None,
                   verdict="undefined", error=f"{type(exc).__name__}: {exc}")
        return out
    out.update(alpha=res.alpha, d_o=res.d_o, d_e=res.d_e, n_pairable=res.n_pairable,
               reliable=res.reliable, verdict=verdict(res.alpha))
    return out


def agreement_report(m: RatingMatrix, metric: str = "interval", group_by_kind: bool = True) -> dict:
    report = {"metric": metric, "threshold": RELIABILITY_THRESHOLD,
              "overall": _section(m, metric), "by_kind": {}}
    if group_by_kind:
        present = {kind for _, kind in m.items}
        for kind in ITEM_KINDS:
            if kind in present:
                report["by_kind"][kind] = _section(m.restrict(kind), metric)
    return report


def format_report(report: dict) -> str:
    def fmt(x, spec=".3f"):
        if x is None:
            return "-"
        text = format(x, spec)
        return text[1:] if text.startswith("-") and not text.strip("-0.") else text

    rows = [("overall", report["overall"])] + list(report["by_kind"].items())
    lines = [f"Krippendorff's alpha ({report['metric']} metric, "
             f"reliable at alpha >= {report['threshold']})",
             f"{'scope':<9} {'items':>5} {'pairs':>5} {'alpha':>7} {'mean':>6} "
             f"{'sd(s)':>6} {'sd(p)':>6} {'min':>4} {'max':>4}  verdict"]
    for name, sec in rows:
        st = sec["stats"] or {}
        lines.append(
            f"{name:<9} {sec['n_items']:>5} {sec['n_pairable']:>5} {fmt(sec['alpha']):>7} "
            f"{fmt(st.get('mean'), '.2f'):>6} {fmt(st.get('sd_sample'), '.2f'):>6} "
            f"{fmt(st.get('sd_population'), '.2f'):>6} {fmt(st.get('min'), '.0f'):>4} "
            f"{fmt(st.get('max'), '.0f'):>4}  {sec['verdict']}")
        if sec.get("error"):
            lines.append(f"{'':<9} {sec['error']}")
    return "\n".join(lines) + "\n"
