"""File formats: model JSON, truth-coefficient JSON, and CSV data/mask/metric
payloads shared by the CLI and the experiment scripts.

Data CSVs are comma-separated with a header row ``t,x1..xd``, no index column;
missing cells are empty fields and mirrored as 1s in the companion mask CSV.
Lines starting with '#' (the optional timestamp banner) are ignored on read.
"""

from __future__ import annotations

import csv
import json
from datetime import datetime, timezone

import numpy as np

from .evaluate import CoefficientTable
from .model import ModelParams
from .polybasis import PolyBasis, enumerate_basis

SCHEMA_VERSION = 1

__all__ = [
    "save_model",
    "load_model",
    "save_truth",
    "load_truth",
    "write_data_csv",
    "read_data_csv",
    "write_mask_csv",
    "read_mask_csv",
    "write_table_csv",
]


def _banner_lines(banner: str | None):
    if banner is None:
        return []
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return [f"# {banner} generated {stamp}"]


def write_data_csv(path, X, mask=None, banner: str | None = None, t0: int = 1,
                   dt: float | None = None, prefix: str = "x") -> None:
    """Write a (N, d) array; masked cells become empty fields."""
    X = np.asarray(X, dtype=float)
    N, d = X.shape
    miss = None if mask is None else np.asarray(mask, dtype=bool)
    with open(path, "w", newline="") as fh:
        for line in _banner_lines(banner):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"{prefix}{j + 1}" for j in range(d)])
        for i in range(N):
            t = (t0 + i) * dt if dt is not None else t0 + i
            row = [repr(float(t)) if dt is not None else str(t)]
            for j in range(d):
                if miss is not None and miss[i, j]:
                    row.append("")
                else:
                    row.append(repr(float(X[i, j])))
            writer.writerow(row)


def read_data_csv(path):
    """Read a data CSV; returns (X, mask) with NaN + True-mask at empty cells."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for row in reader:
            if not row or row[0].startswith("#"):
                continue
            if header is None:
                header = row
                continue
            rows.append(row[1:])  # drop the t column
    if header is None or not rows:
        raise ValueError(f"{path}: no data rows")
    d = len(header) - 1
    N = len(rows)
    X = np.full((N, d), np.nan)
    mask = np.zeros((N, d), dtype=bool)
    for i, row in enumerate(rows):
        if len(row) != d:
            raise ValueError(f"{path}: row {i} has {len(row)} cells, expected {d}")
        for j, cell in enumerate(row):
            if cell.strip() == "":
                mask[i, j] = True
            else:
                X[i, j] = float(cell)
    return X, mask


def write_mask_csv(path, mask, banner: str | None = None) -> None:
    mask = np.asarray(mask, dtype=bool)
    with open(path, "w", newline="") as fh:
        for line in _banner_lines(banner):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{j + 1}" for j in range(mask.shape[1])])
        for i in range(mask.shape[0]):
            writer.writerow([i + 1] + [int(v) for v in mask[i]])


def read_mask_csv(path) -> np.ndarray:
    vals, _ = read_data_csv(path)
    return vals.astype(bool)


def write_table_csv(path, rows, fieldnames, banner: str | None = None) -> None:
    """Write dict rows with a fixed column order."""
    with open(path, "w", newline="") as fh:
        for line in _banner_lines(banner):
            fh.write(line + "\n")
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    return v


def _basis_order(basis: PolyBasis):
    return [list(m.exponents) for m in basis.monomials]


def save_model(path, theta: ModelParams, fit_meta: dict | None = None) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "k": theta.k,
        "d": theta.d,
        "d_phi": theta.basis.d_phi,
        "basis_order": _basis_order(theta.basis),
        "A": theta.A.tolist(),
        "F": theta.F.tolist(),
        "b": theta.b.tolist(),
        "C": theta.C.tolist(),
        "u": theta.u.tolist(),
        "Gamma": theta.Gamma.tolist(),
        "R": theta.R.tolist(),
        "fit_meta": fit_meta or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> tuple[ModelParams, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema_version {doc.get('schema_version')}")
    k, d_phi = int(doc["k"]), int(doc["d_phi"])
    basis = PolyBasis.linear(k) if d_phi < 2 else enumerate_basis(k, d_phi)
    if _basis_order(basis) != doc["basis_order"]:
        raise ValueError(f"{path}: basis_order does not match the canonical ordering")
    F = np.array(doc["F"], dtype=float).reshape(k, basis.k_phi)
    theta = ModelParams(
        A=np.array(doc["A"], dtype=float),
        F=F,
        b=np.array(doc["b"], dtype=float),
        C=np.array(doc["C"], dtype=float),
        u=np.array(doc["u"], dtype=float),
        Gamma=np.array(doc["Gamma"], dtype=float),
        R=np.array(doc["R"], dtype=float),
        basis=basis,
    )
    return theta, doc.get("fit_meta", {})


def save_truth(path, table: CoefficientTable, meta: dict | None = None) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "dim": int(table.values.shape[0]),
        "k": table.k,
        "degree": table.degree,
        "basis_order": _basis_order(table.basis),
        "coefficients": table.values.tolist(),
    }
    doc.update(meta or {})
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_truth(path) -> tuple[CoefficientTable, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    table = CoefficientTable(np.array(doc["coefficients"], dtype=float),
                             int(doc["k"]), int(doc["degree"]))
    if _basis_order(table.basis) != doc["basis_order"]:
        raise ValueError(f"{path}: basis_order does not match the canonical ordering")
    meta = {key: doc[key] for key in doc
            if key not in ("schema_version", "dim", "k", "degree", "basis_order", "coefficients")}
    return table, meta
