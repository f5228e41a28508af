"""Result tables in JSON, CSV and plain-text layouts, plus run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

FORMATS = ("json", "csv", "text")

ORDERING_COLUMNS = ("domain", "system", "mean_rank", "oso_pred_rate", "mean_tau")
RANK_BIN_COLUMNS = ("domain", "system", "n_docs", "0-4", "5-10", ">10")
SUMMARIZATION_COLUMNS = ("system", "extraction_accuracy")
SIZE_SWEEP_COLUMNS = ("m", "oso_pred_rate", "extraction_accuracy")
LEARNING_CURVE_COLUMNS = ("train_size", "oso_prediction_rate", "mean_rank", "mean_tau")


class ReportError(OSError):
    """Raised when a report cannot be written."""


@dataclass
class Table:
    name: str
    columns: tuple[str, ...]
    rows: list[dict]
    title: str = ""

    def __post_init__(self):
        for row in self.rows:
            missing = set(self.columns) - set(row)
            if missing:
                raise ValueError(f"row of table {self.name!r} lacks {sorted(missing)}")


def ordering_table(results: Mapping[tuple[str, str], object]) -> Table:
    """One row per (domain, system) from :class:`OrderingReport` objects."""
    rows = [{"domain": d, "system": s, "mean_rank": r.mean_rank, "oso_pred_rate": r.prediction_rate,
             "mean_tau": r.mean_tau} for (d, s), r in results.items()]
    return Table("ordering", ORDERING_COLUMNS, rows, "Ordering results (averages over the test cases)")


def rank_bin_table(results: Mapping[tuple[str, str], object]) -> Table:
    """Fraction of documents whose OSO rank falls in each range."""
    rows = []
    for (d, s), r in results.items():
        hist = r.rank_histogram()
        n = sum(hist.values())
        rows.append({"domain": d, "system": s, "n_docs": n, **{b: c / n for b, c in hist.items()}})
    return Table("rank_bins", RANK_BIN_COLUMNS, rows, "Share of test documents by OSO rank range")


def summarization_table(accuracies: Mapping[str, float]) -> Table:
    rows = [{"system": s, "extraction_accuracy": a} for s, a in accuracies.items()]
    return Table("summarization", SUMMARIZATION_COLUMNS, rows, "Summarization results")


def size_sweep_table(rows: Sequence[dict]) -> Table:
    return Table("size_sweep", SIZE_SWEEP_COLUMNS, list(rows), "Performance as a function of model size")


def learning_curve_table(rows: Sequence[dict]) -> Table:
    return Table("learning_curve", LEARNING_CURVE_COLUMNS, list(rows),
                 "Ordering performance as a function of training-set size")


# -- rendering -----------------------------------------------------------------

_PERCENT_COLUMNS = {"oso_pred_rate", "oso_prediction_rate", "extraction_accuracy", "0-4", "5-10", ">10"}


def _fmt(value, column: str) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "N/A"
    if column in _PERCENT_COLUMNS:
        return f"{100 * value:.0f}%"
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def _grid(header: Sequence[str], body: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(c)) for c in col) for col in zip(header, *body)]
    line = "+" + "+".join("-" * (w + 2) for w in widths) + "+"

    def render(cells):
        return "| " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " |"

    return "\n".join([line, render(header), line, *(render(r) for r in body), line])


_TEXT_HEADERS = {
    "domain": "Domain", "system": "System", "mean_rank": "Rank", "oso_pred_rate": "OSO pred.",
    "mean_tau": "tau", "n_docs": "Docs", "extraction_accuracy": "Extraction accuracy",
    "train_size": "Training docs", "oso_prediction_rate": "OSO pred.", "m": "Model size",
}


def render_text(table: Table) -> str:
    """Plain-text table; the model-size sweep is transposed, one column per size."""
    if table.name == "size_sweep":
        header = ["Model size", *(_fmt(r["m"], "m") for r in table.rows)]
        body = [["Ordering", *(_fmt(r["oso_pred_rate"], "oso_pred_rate") for r in table.rows)],
                ["Summarization", *(_fmt(r["extraction_accuracy"], "extraction_accuracy") for r in table.rows)]]
    else:
        header = [_TEXT_HEADERS.get(c, c) for c in table.columns]
        body = [[_fmt(r[c], c) for c in table.columns] for r in table.rows]
    text = _grid(header, body)
    return f"{table.title}\n{text}\n" if table.title else text + "\n"


def render_csv(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(table.columns), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in table.rows:
        writer.writerow({c: ("" if row[c] is None else row[c]) for c in table.columns})
    return buf.getvalue()


def _json_default(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def dumps(data) -> str:
    return json.dumps(data, indent=1, sort_keys=True, default=_json_default) + "\n"


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def emit_report(tables: Sequence[Table], out: str | Path, fmt: str = "json", extra: dict | None = None) -> list[Path]:
    """Write ``tables`` to ``out`` and return the files written.

    JSON and text produce one file. CSV produces one file per table, named
    ``<stem>.<table>.csv`` when there is more than one table. ``extra`` is
    merged into the JSON document and ignored by the other formats.
    """
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    out = Path(out)
    if fmt == "json":
        doc = {"tables": {t.name: {"title": t.title, "columns": list(t.columns), "rows": t.rows} for t in tables}}
        doc.update(extra or {})
        return [_write(out, dumps(doc))]
    if fmt == "text":
        return [_write(out, "\n".join(render_text(t) for t in tables))]
    if len(tables) == 1:
        return [_write(out, render_csv(tables[0]))]
    return [_write(out.with_name(f"{out.stem}.{t.name}.csv"), render_csv(t)) for t in tables]


# -- manifests -----------------------------------------------------------------


def sha256_path(path: str | Path) -> str:
    """Digest of a file, or of a directory's files in sorted relative-path order."""
    path = Path(path)
    h = hashlib.sha256()
    files = [path] if path.is_file() else sorted(p for p in path.rglob("*") if p.is_file())
    for p in files:
        if path.is_dir():
            h.update(str(p.relative_to(path)).encode("utf-8") + b"\0")
        h.update(p.read_bytes())
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict[str, str]
    seed: int | None
    version: str
    wall_time: float = 0.0
    outputs: dict[str, str] = field(default_factory=dict)
    python: str = field(default_factory=platform.python_version)

    def record_outputs(self, paths: Sequence[Path]) -> None:
        for p in paths:
            self.outputs[Path(p).name] = sha256_path(p)

    def write(self, path: str | Path) -> Path:
        return _write(Path(path), dumps(asdict(self)))
