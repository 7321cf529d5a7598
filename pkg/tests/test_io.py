import numpy as np
import pytest

from sparsemnl.io import read_coefficients, read_dataset, sidecar_path, write_coefficients, write_dataset
from sparsemnl.mnl_core import CoeffMatrix


def test_dataset_round_trip(tmp_path, rng):
    X = rng.normal(size=(7, 3))
    y = rng.integers(1, 4, size=7)
    p = tmp_path / "data.csv"
    write_dataset(p, X, y)
    assert p.read_text().splitlines()[0] == "x1,x2,x3,y"
    X2, y2 = read_dataset(p)
    assert X2.tobytes() == X.tobytes() and np.array_equal(y2, y)


def test_dataset_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,y\n1,2,1\n")
    with pytest.raises(ValueError):
        read_dataset(p)
    p.write_text("x1,y\n")
    with pytest.raises(ValueError):
        read_dataset(p)


@pytest.mark.parametrize("conv", ["ReferenceLast", "ZeroRowMean"])
def test_coefficients_round_trip(tmp_path, rng, conv):
    B = rng.normal(size=(4, 3))
    C = CoeffMatrix(B - B[:, -1:], "ReferenceLast").to(conv)
    p = tmp_path / "coef.csv"
    write_coefficients(p, C)
    assert sidecar_path(p).exists()
    C2 = read_coefficients(p)
    assert C2.convention == C.convention and C2.B.tobytes() == C.B.tobytes()


def test_coefficients_sidecar_mismatch(tmp_path):
    p = tmp_path / "coef.csv"
    write_coefficients(p, CoeffMatrix.zeros(2, 3))
    sidecar_path(p).write_text('{"convention": "ReferenceLast", "d": 3, "L": 3}')
    with pytest.raises(ValueError):
        read_coefficients(p)
