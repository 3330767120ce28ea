"""Panel CSV and parameter JSON formats, plus index preprocessing.

Panel files are long format, one row per (object, time): columns
``object_id, t, x_1..x_p`` and optionally ``w_1..w_d``. Time indices
are 1-based and must be contiguous from 1 within each object. All
floats are written with shortest round-trip formatting, so a
write/load cycle reproduces values exactly.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .errors import (
    DuplicateTimeError,
    GapError,
    NonNumericCellError,
    PanelFormatError,
    RaggedCovariateError,
    ZeroVarianceError,
)
from .model import (
    ClusterParams,
    FixedTransition,
    ModelParams,
    ObjectSeries,
    PanelDataset,
    RegressedTransition,
)
from .numkernel import SpdMatrix
from .simulate import SimTruth


def _fmt(v: float) -> str:
    return repr(float(v))


def _numbered_columns(header, prefix):
    cols = [c for c in header if c.startswith(prefix)]
    expected = [f"{prefix}{i}" for i in range(1, len(cols) + 1)]
    if cols != expected:
        raise PanelFormatError(
            f"{prefix}* columns must be named {prefix}1..{prefix}{len(cols)} "
            f"in order; found {cols}")
    return len(cols)


def _parse_cell(raw, column, line_no):
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise NonNumericCellError(
            f"non-numeric value {raw!r} in column {column!r} "
            f"at line {line_no}") from None


def _assemble(rows_by_object, order, d):
    objects = []
    for oid in order:
        rows = rows_by_object[oid]
        rows.sort(key=lambda r: r[0])
        ts = [r[0] for r in rows]
        for pos, t in enumerate(ts, start=1):
            if t != pos:
                raise GapError(
                    f"object {oid!r}: time indices must run 1..T "
                    f"without gaps; expected t={pos}, found t={t}")
        x = np.array([r[1] for r in rows])
        w = np.array([r[2] for r in rows]) if d > 0 else None
        objects.append(ObjectSeries(id=oid, x=x, w=w))
    return PanelDataset(objects)


def load_panel(path) -> PanelDataset:
    """Read a long-format panel CSV.

    Objects appear in order of first appearance; rows within an object
    are sorted by t. Duplicate (object, t) pairs, gaps in t, ragged
    covariates, and non-numeric cells raise subclasses of
    PanelFormatError naming the offending object, line, and column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelFormatError(f"{path}: empty file") from None
        if header[:2] != ["object_id", "t"]:
            raise PanelFormatError(
                "header must start with object_id,t; "
                f"found {header[:2]}")
        body = header[2:]
        p = _numbered_columns([c for c in body if c.startswith("x_")], "x_")
        d = _numbered_columns([c for c in body if c.startswith("w_")], "w_")
        expected = (["object_id", "t"]
                    + [f"x_{i}" for i in range(1, p + 1)]
                    + [f"w_{j}" for j in range(1, d + 1)])
        if header != expected:
            raise PanelFormatError(
                f"unexpected header {header}; expected {expected}")
        if p == 0:
            raise PanelFormatError("at least one x_ column is required")

        rows_by_object: dict[str, list] = {}
        order: list[str] = []
        seen: set[tuple[str, int]] = set()
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                if d > 0 and len(row) == 2 + p:
                    raise RaggedCovariateError(
                        f"object {row[0]!r}: covariate cells missing "
                        f"at line {line_no}")
                raise PanelFormatError(
                    f"line {line_no}: expected {len(header)} cells, "
                    f"found {len(row)}")
            oid = row[0]
            try:
                t = int(row[1])
            except ValueError:
                raise NonNumericCellError(
                    f"non-integer time {row[1]!r} in column 't' "
                    f"at line {line_no}") from None
            if (oid, t) in seen:
                raise DuplicateTimeError(
                    f"object {oid!r}: duplicate time t={t} at line {line_no}")
            seen.add((oid, t))
            xs = [_parse_cell(row[2 + i], f"x_{i + 1}", line_no)
                  for i in range(p)]
            ws = None
            if d > 0:
                raw_ws = row[2 + p:]
                if any(cell.strip() == "" for cell in raw_ws):
                    raise RaggedCovariateError(
                        f"object {oid!r}: empty covariate cell "
                        f"at line {line_no}")
                ws = [_parse_cell(raw_ws[j], f"w_{j + 1}", line_no)
                      for j in range(d)]
            if oid not in rows_by_object:
                rows_by_object[oid] = []
                order.append(oid)
            rows_by_object[oid].append((t, xs, ws))
    return _assemble(rows_by_object, order, d)


def write_panel(ds: PanelDataset, path) -> None:
    """Write a dataset in the long CSV format read by load_panel."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = (["object_id", "t"]
                  + [f"x_{i}" for i in range(1, ds.p + 1)]
                  + [f"w_{j}" for j in range(1, ds.d + 1)])
        writer.writerow(header)
        for obj in ds.objects:
            for t in range(obj.T):
                row = [obj.id, str(t + 1)] + [_fmt(v) for v in obj.x[t]]
                if ds.d > 0:
                    row += [_fmt(v) for v in obj.w[t]]
                writer.writerow(row)


def build_indices(path, mapping) -> PanelDataset:
    """Build index responses from a raw long CSV.

    The raw file has columns ``object_id, t, <raw names...>`` and
    optionally ``w_1..w_d`` covariates (passed through untouched).
    `mapping` sends each index name to the list of raw columns it
    averages. Every raw variable is z-scored within each time point
    across the objects observed then, and each index is the mean of its
    group's z-scores. Every non-covariate column must belong to exactly
    one index. A raw variable with zero variance at some time point is
    an error naming the variable and the time.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelFormatError(f"{path}: empty file") from None
        if header[:2] != ["object_id", "t"]:
            raise PanelFormatError("header must start with object_id,t")
        names = header[2:]
        w_names = [c for c in names if c.startswith("w_")]
        raw_names = [c for c in names if not c.startswith("w_")]
        d = _numbered_columns(w_names, "w_")

        assigned = [v for group in mapping.values() for v in group]
        if sorted(assigned) != sorted(set(assigned)):
            raise ValueError("a raw variable appears in more than one index")
        missing = [v for v in assigned if v not in raw_names]
        if missing:
            raise ValueError(f"mapped variables not in the file: {missing}")
        unmapped = [v for v in raw_names if v not in assigned]
        if unmapped:
            raise ValueError(f"raw variables not mapped to any index: "
                             f"{unmapped}")

        col_of = {name: header.index(name) for name in names}
        records = []
        seen = set()
        order = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise PanelFormatError(
                    f"line {line_no}: expected {len(header)} cells, "
                    f"found {len(row)}")
            oid = row[0]
            try:
                t = int(row[1])
            except ValueError:
                raise NonNumericCellError(
                    f"non-integer time {row[1]!r} in column 't' "
                    f"at line {line_no}") from None
            if (oid, t) in seen:
                raise DuplicateTimeError(
                    f"object {oid!r}: duplicate time t={t} at line {line_no}")
            seen.add((oid, t))
            if oid not in order:
                order.append(oid)
            vals = {name: _parse_cell(row[col_of[name]], name, line_no)
                    for name in raw_names}
            ws = ([_parse_cell(row[col_of[f'w_{j + 1}']], f"w_{j + 1}",
                               line_no) for j in range(d)]
                  if d > 0 else None)
            records.append((oid, t, vals, ws))

    # per-time z-scores across the objects observed at that time
    times = sorted({t for _, t, _, _ in records})
    zscores: dict[tuple[str, int, str], float] = {}
    for t in times:
        at_t = [(oid, vals) for oid, tt, vals, _ in records if tt == t]
        for name in raw_names:
            col = np.array([vals[name] for _, vals in at_t])
            if col.size < 2:
                raise ZeroVarianceError(
                    f"variable {name!r} at t={t}: need at least two "
                    "objects to standardize")
            sd = float(col.std(ddof=1))
            if sd <= 0.0:
                raise ZeroVarianceError(
                    f"variable {name!r} is constant at t={t}; "
                    "cannot standardize")
            mean = float(col.mean())
            for (oid, vals) in at_t:
                zscores[(oid, t, name)] = (vals[name] - mean) / sd

    rows_by_object: dict[str, list] = {oid: [] for oid in order}
    for oid, t, vals, ws in records:
        xs = [float(np.mean([zscores[(oid, t, v)] for v in group]))
              for group in mapping.values()]
        rows_by_object[oid].append((t, xs, ws))
    return _assemble(rows_by_object, order, d)


# ---------------------------------------------------------------------------
# parameter and truth JSON


def params_to_dict(params: ModelParams, d: int | None = None) -> dict:
    cp = params.clusters
    tm = params.transitions
    if isinstance(tm, FixedTransition):
        transition = {
            "type": "fixed",
            "alpha": tm.alpha.tolist(),
            "beta": tm.beta.tolist(),
        }
        d_out = 0 if d is None else d
    else:
        transition = {
            "type": "regressed",
            "delta": tm.delta.tolist(),
            "gamma": tm.gamma.tolist(),
        }
        d_out = tm.d
    return {
        "K": cp.K,
        "p": cp.p,
        "d": d_out,
        "lambda": cp.lam,
        "mu": cp.mu.tolist(),
        "sigma": [s.values.tolist() for s in cp.sigma],
        "transition": transition,
    }


def params_from_dict(doc: dict) -> ModelParams:
    cp = ClusterParams(
        mu=np.array(doc["mu"], dtype=float),
        sigma=[SpdMatrix(np.array(s, dtype=float)) for s in doc["sigma"]],
        lam=float(doc["lambda"]),
    )
    tr = doc["transition"]
    if tr["type"] == "fixed":
        tm = FixedTransition(alpha=np.array(tr["alpha"], dtype=float),
                             beta=np.array(tr["beta"], dtype=float))
    elif tr["type"] == "regressed":
        tm = RegressedTransition(delta=np.array(tr["delta"], dtype=float),
                                 gamma=np.array(tr["gamma"], dtype=float))
    else:
        raise PanelFormatError(f"unknown transition type {tr['type']!r}")
    return ModelParams(clusters=cp, transitions=tm)


def save_params(params: ModelParams, path, d: int | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_dict(params, d), fh, indent=1)
        fh.write("\n")


def load_params(path) -> ModelParams:
    with open(path, encoding="utf-8") as fh:
        return params_from_dict(json.load(fh))


def save_truth(truth: SimTruth, ds: PanelDataset, path) -> None:
    doc = {
        "params": params_to_dict(
            truth.params,
            d=ds.d if truth.params.requires_covariates else None),
        "labels": {obj.id: [int(v) for v in z]
                   for obj, z in zip(ds.objects, truth.z)},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_truth(path):
    """Returns (ModelParams, {object_id: [labels...]})."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return params_from_dict(doc["params"]), {
        oid: np.array(z, dtype=int) for oid, z in doc["labels"].items()
    }


def load_flat_labels(path):
    """Flat labels from a truth JSON, a posteriors CSV (its `hard`
    column), or a plain labels CSV (object_id, t, label).

    Returns (keys, labels) where keys is the list of (object_id, t)
    pairs in object-major, time-minor order.
    """
    path = str(path)
    if path.endswith(".json"):
        _, by_obj = load_truth(path)
        keys, labels = [], []
        for oid, z in by_obj.items():
            for t, lab in enumerate(z, start=1):
                keys.append((oid, t))
                labels.append(int(lab))
        return keys, np.array(labels, dtype=int)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if "hard" in header:
            col = header.index("hard")
        elif "label" in header:
            col = header.index("label")
        else:
            raise PanelFormatError(
                f"{path}: need a 'hard' or 'label' column")
        if header[:2] != ["object_id", "t"]:
            raise PanelFormatError("header must start with object_id,t")
        rows = {}
        order = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            oid = row[0]
            t = int(row[1])
            if (oid, t) in rows:
                raise DuplicateTimeError(
                    f"object {oid!r}: duplicate time t={t} at line {line_no}")
            if oid not in order:
                order.append(oid)
            try:
                rows[(oid, t)] = int(row[col])
            except ValueError:
                raise NonNumericCellError(
                    f"non-integer label {row[col]!r} at line {line_no}"
                ) from None
    keys, labels = [], []
    for oid in order:
        ts = sorted(t for (o, t) in rows if o == oid)
        for t in ts:
            keys.append((oid, t))
            labels.append(rows[(oid, t)])
    return keys, np.array(labels, dtype=int)
