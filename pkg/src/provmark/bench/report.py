"""Benchmark report: rows, aggregation and rendering."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields

from ..transforms import CATEGORIES

SCHEMA = "provmark-bench-report"
SCHEMA_VERSION = 1
MODES = ("random", "worst")
ROW_FIELDS = ("tpr_lo", "tpr_hi", "fpr", "bit_accuracy", "code_accuracy", "abstention_rate",
              "psnr", "ssim")
# decimals kept in the canonical JSON; quality means are coarser so that
# last-bit float differences between platforms do not leak into reports
DIGITS = {"psnr": 4, "ssim": 6}
RATE_DIGITS = 10


@dataclass(frozen=True)
class Row:
    """One line of the report.

    ``kind`` is ``transform``, ``category`` or ``aggregate``; ``n`` is the
    number of (image, transform) cells behind the row, used as its weight.
    """

    label: str
    kind: str
    category: str
    mode: str
    n: int
    tpr_lo: float
    tpr_hi: float
    fpr: float
    bit_accuracy: float
    code_accuracy: float
    abstention_rate: float
    psnr: float
    ssim: float

    def rounded(self) -> "Row":
        vals = {f: round(float(getattr(self, f)), DIGITS.get(f, RATE_DIGITS)) for f in ROW_FIELDS}
        return Row(self.label, self.kind, self.category, self.mode, int(self.n), **vals)


def weighted_row(label: str, kind: str, category: str, mode: str, rows: list[Row]) -> Row:
    """Cell-count weighted mean of ``rows``."""
    n = sum(r.n for r in rows)
    vals = {f: sum(getattr(r, f) * r.n for r in rows) / n for f in ROW_FIELDS}
    return Row(label, kind, category, mode, n, **vals)


def summarize(transform_rows: list[Row]) -> list[Row]:
    """Transform rows followed by Identity, category and Aggregated rows."""
    out = list(transform_rows)
    for mode in MODES:
        rows = [r for r in transform_rows if r.mode == mode]
        if not rows:
            continue
        cats = []
        ident = [r for r in rows if r.category == "Identity"]
        if ident:
            out.append(weighted_row("Identity", "category", "Identity", mode, ident))
        for cat in CATEGORIES:
            members = [r for r in rows if r.category == cat]
            if members:
                cats.append(weighted_row(cat, "category", cat, mode, members))
        out.extend(cats)
        if cats:
            out.append(weighted_row("Aggregated", "aggregate", "Aggregated", mode, cats))
    return out


@dataclass
class BenchReport:
    """Benchmark outcome.  ``cells`` and ``timings`` are not serialised."""

    config: dict
    dataset: dict
    operating_point: dict
    quality: dict
    rows: list[Row]
    catalog: dict
    cells: list = field(default_factory=list, repr=False)
    timings: dict = field(default_factory=dict, repr=False)

    def row(self, label: str, mode: str, kind: str | None = None) -> Row:
        for r in self.rows:
            if r.label == label and r.mode == mode and (kind is None or r.kind == kind):
                return r
        raise KeyError((label, mode))

    @property
    def target_fpr(self) -> float:
        return float(self.operating_point["target_fpr"])

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "dataset": self.dataset,
            "operating_point": self.operating_point,
            "quality": self.quality,
            "rows": [asdict(r.rounded()) for r in self.rows],
            "catalog": self.catalog,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BenchReport":
        if d.get("schema") != SCHEMA:
            raise ValueError("not a benchmark report")
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema version {d.get('schema_version')}")
        rows = [Row(**r) for r in d["rows"]]
        return cls(d["config"], d["dataset"], d["operating_point"], d["quality"], rows,
                   d["catalog"])

    @classmethod
    def from_json(cls, text: str | bytes) -> "BenchReport":
        return cls.from_dict(json.loads(text))


def _pct(x: float) -> str:
    return f"{100.0 * x:.2f}%"


def tpr_cell(lo: float, hi: float) -> str:
    """Single percentage, or a ``[lo, hi]`` bracket when ties leave a range."""
    a, b = _pct(lo), _pct(hi)
    return a if a == b else f"[{a}, {b}]"


def _table_rows(report: BenchReport) -> list[tuple[str, Row]]:
    """(label, row) pairs in table order."""
    out = []
    rows = {(r.label, r.mode): r for r in report.rows if r.kind != "transform"}
    ident = rows.get(("Identity", "worst")) or rows.get(("Identity", "random"))
    if ident:
        out.append(("Identity (excl. resizing)", ident))
    for mode, suffix in (("random", ""), ("worst", " Worst")):
        if ("Aggregated", mode) in rows:
            out.append(("Aggregated" + suffix, rows[("Aggregated", mode)]))
        for cat in CATEGORIES:
            if (cat, mode) in rows:
                out.append((cat + suffix, rows[(cat, mode)]))
    return out


def render_markdown(report: BenchReport) -> str:
    method = report.config.get("method", "reference")
    n = report.dataset.get("n_images", "?")
    lines = [
        f"TPR at {_pct(report.target_fpr)} FPR (average over worst-case transformations), "
        f"n = {n} images, one operating point kappa = {report.operating_point['kappa']:.6g}",
        "",
        f"|  | {method} |",
        "|:--|:--:|",
    ]
    for label, r in _table_rows(report):
        lines.append(f"| {label} | {tpr_cell(r.tpr_lo, r.tpr_hi)} |")
    return "\n".join(lines) + "\n"


def render_csv(report: BenchReport) -> str:
    buf = io.StringIO()
    names = [f.name for f in fields(Row)]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in report.rows:
        d = asdict(r.rounded())
        w.writerow([d[k] for k in names])
    return buf.getvalue()


def render_json(report: BenchReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n"


def render_report(report: BenchReport, fmt: str = "json") -> bytes:
    """Render as ``json`` (canonical), ``csv`` or ``markdown``."""
    if fmt == "json":
        return render_json(report).encode()
    if fmt == "csv":
        return render_csv(report).encode()
    if fmt in ("markdown", "markdown-table", "md"):
        return render_markdown(report).encode()
    raise ValueError(f"unknown report format {fmt!r}")
