"""CSV readers and writers for option chains, scenarios, densities and reports.

Floats are written with ``repr`` so files round-trip exactly and repeated
runs produce byte-identical output.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .pricing import OptionQuote
from .rnd import PricingReport, RndEstimate

CHAIN_COLUMNS = ("strike", "price", "kind", "tau", "spot", "rate", "dividend")
SCENARIO_COLUMNS = ("strike", "price", "iv", "tag")
SCENARIO_TAGS = ("liquid", "illiquid", "truth")
RND_COLUMNS = ("strike", "density", "raw_density")
TRACE_COLUMNS = ("epoch", "risk", "kl", "objective", "stopped")
_KIND_CODE = {"C": "call", "P": "put"}


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_rows(path, required) -> list[dict]:
    """Rows of a CSV as dicts; the header must contain every required column."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}; header is {header}",
                              column=missing[0])
        return list(reader)


def _float(row, col, path, line):
    try:
        return float(row[col])
    except (TypeError, ValueError):
        raise SchemaError(f"{path}:{line}: column '{col}' is not a number: {row[col]!r}",
                          column=col) from None


def write_chain(path, quotes) -> Path:
    rows = ((q.strike, q.price, "C" if q.kind == "call" else "P", q.tau, q.spot, q.rate, q.dividend)
            for q in quotes)
    return write_rows(path, CHAIN_COLUMNS, rows)


def read_chain(path) -> list[OptionQuote]:
    out = []
    for line, row in enumerate(read_rows(path, CHAIN_COLUMNS), start=2):
        kind = _KIND_CODE.get((row["kind"] or "").strip().upper())
        if kind is None:
            raise SchemaError(f"{path}:{line}: column 'kind' must be C or P, got {row['kind']!r}",
                              column="kind")
        vals = {c: _float(row, c, path, line) for c in CHAIN_COLUMNS if c != "kind"}
        try:
            out.append(OptionQuote(kind=kind, **vals))
        except ValueError as exc:
            raise SchemaError(f"{path}:{line}: {exc}") from None
    if not out:
        raise SchemaError(f"{path}: no quotes")
    return out


def write_scenario(path, rows) -> Path:
    """``rows``: iterable of (strike, price, iv, tag)."""
    return write_rows(path, SCENARIO_COLUMNS, rows)


def read_scenario(path) -> list[tuple]:
    out = []
    for line, row in enumerate(read_rows(path, SCENARIO_COLUMNS), start=2):
        if row["tag"] not in SCENARIO_TAGS:
            raise SchemaError(f"{path}:{line}: column 'tag' must be one of {SCENARIO_TAGS}",
                              column="tag")
        out.append((_float(row, "strike", path, line), _float(row, "price", path, line),
                    _float(row, "iv", path, line), row["tag"]))
    return out


def write_rnd(path, rnd: RndEstimate) -> Path:
    return write_rows(path, RND_COLUMNS, zip(rnd.strikes, rnd.density, rnd.raw_density))


def read_rnd_columns(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = read_rows(path, RND_COLUMNS)
    if not rows:
        raise SchemaError(f"{path}: no rows")
    cols = [np.array([_float(r, c, path, i) for i, r in enumerate(rows, start=2)]) for c in RND_COLUMNS]
    return cols[0], cols[1], cols[2]


def write_trace(path, trace) -> Path:
    return write_rows(path, TRACE_COLUMNS, trace.rows())


def write_losses(path, losses) -> Path:
    return write_rows(path, ("epoch", "loss"), enumerate(float(v) for v in losses))


def read_features(path) -> np.ndarray:
    """Numeric feature matrix (rows x columns) from a headed CSV."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise SchemaError(f"{path}: empty feature file")
        rows = [r for r in reader if r]
    data = np.empty((len(rows), len(header)))
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise SchemaError(f"{path}:{i + 2}: expected {len(header)} columns, got {len(r)}")
        for j, v in enumerate(r):
            try:
                data[i, j] = float(v)
            except ValueError:
                raise SchemaError(f"{path}:{i + 2}: column '{header[j]}' is not a number: {v!r}",
                                  column=header[j]) from None
    return data


def write_report(path, reports: dict[str, PricingReport]) -> Path:
    """Table layout: one row per method, one column per strike, MAE last."""
    items = list(reports.items())
    strikes = items[0][1].strikes
    header = ["method"] + [f"{k:g}" for k in strikes] + ["MAE"]
    rows = ([name] + list(rep.errors) + [rep.mae] for name, rep in items)
    return write_rows(path, header, rows)
