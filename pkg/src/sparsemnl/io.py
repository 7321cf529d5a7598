"""CSV persistence for datasets and coefficient matrices.

Datasets: header ``x1,...,xd,y`` with 1-based integer labels.
Coefficients: ``d`` rows by ``L`` columns without header, plus a sidecar
JSON (same stem, ``.json``) carrying the identification convention.
Floats are written with ``repr`` so a round trip is bit-exact.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .mnl_core import CoeffMatrix, Convention, validate_design


def _fmt(v: float) -> str:
    return repr(float(v))


def write_dataset(path, X, y) -> None:
    X = validate_design(X)
    y = np.asarray(y, dtype=np.int64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(X.shape[1])] + ["y"])
        for row, label in zip(X, y):
            w.writerow([_fmt(v) for v in row] + [int(label)])


def read_dataset(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[-1] != "y" or header[:-1] != [f"x{j + 1}" for j in range(len(header) - 1)]:
        raise ValueError(f"{path}: expected header x1,...,xd,y")
    if not body:
        raise ValueError(f"{path}: no observations")
    X = np.array([[float(v) for v in r[:-1]] for r in body])
    y = np.array([int(r[-1]) for r in body], dtype=np.int64)
    return X, y


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_coefficients(path, coeff: CoeffMatrix) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in coeff.B:
            w.writerow([_fmt(v) for v in row])
    meta = {"convention": coeff.convention.value, "d": coeff.d, "L": coeff.L}
    sidecar_path(path).write_text(json.dumps(meta, sort_keys=True) + "\n")


def read_coefficients(path) -> CoeffMatrix:
    with open(path, newline="") as fh:
        B = np.array([[float(v) for v in r] for r in csv.reader(fh) if r])
    meta = json.loads(sidecar_path(path).read_text())
    coeff = CoeffMatrix(B, Convention(meta["convention"]))
    if (coeff.d, coeff.L) != (meta.get("d", coeff.d), meta.get("L", coeff.L)):
        raise ValueError(f"{path}: shape does not match sidecar metadata")
    return coeff
