import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adml.data import (
    Dataset,
    csv_header,
    format_float,
    read_dataset_csv,
    write_dataset_csv,
)

FINITE = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(FINITE)
def test_format_float_round_trips(x):
    assert float(format_float(x)) == x


def make_data(n=5, d=3, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(
        W=rng.normal(size=(n, d)),
        A=(rng.random(n) < 0.5).astype(float),
        Y=rng.normal(size=n),
    )


class TestDataset:
    def test_shape_accessors(self):
        data = make_data(n=7, d=2)
        assert (data.n, data.n_covariates) == (7, 2)

    def test_w_must_be_2d(self):
        with pytest.raises(ValueError, match="2-d"):
            Dataset(W=np.zeros(3), A=np.zeros(3), Y=np.zeros(3))

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="match the number of rows"):
            Dataset(W=np.zeros((3, 2)), A=np.zeros(2), Y=np.zeros(3))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            Dataset(W=np.array([[np.nan]]), A=np.zeros(1), Y=np.zeros(1))

    def test_treatment_must_be_binary(self):
        with pytest.raises(ValueError, match="0/1"):
            Dataset(W=np.zeros((2, 1)), A=np.array([0.0, 0.5]), Y=np.zeros(2))

    def test_lists_are_coerced(self):
        data = Dataset(W=[[0.0], [1.0]], A=[0, 1], Y=[1.5, 2.5])
        assert data.W.dtype == float


class TestCsv:
    def test_header_layout(self):
        assert csv_header(2) == ["W1", "W2", "A", "Y"]

    def test_round_trip_is_exact(self):
        data = make_data(n=20, d=4, seed=3)
        buf = io.StringIO()
        write_dataset_csv(data, buf)
        back = read_dataset_csv(io.StringIO(buf.getvalue()))
        assert np.array_equal(back.W, data.W)
        assert np.array_equal(back.A, data.A)
        assert np.array_equal(back.Y, data.Y)

    def test_write_then_read_bytes_stable(self):
        data = make_data(n=6, d=2, seed=5)
        bufs = []
        for _ in range(2):
            buf = io.StringIO()
            write_dataset_csv(data, buf)
            bufs.append(buf.getvalue())
        assert bufs[0] == bufs[1]
        assert bufs[0].startswith("W1,W2,A,Y\n")

    @pytest.mark.parametrize(
        "text,message",
        [
            ("", "empty file: missing header"),
            ("X1,A,Y\n0,0,0\n", "header must be W1..Wd,A,Y"),
            ("W1,W2,Y\n0,0,0\n", "header must be W1..Wd,A,Y"),
            ("W1,A,Y\n0,0\n", "row 1: expected 3 fields, got 2"),
            ("W1,A,Y\n0,0,x\n", "row 1: non-numeric field"),
            ("W1,A,Y\n0,0,inf\n", "row 1: non-finite value"),
            ("W1,A,Y\n0,2,0\n", "row 1: treatment must be 0 or 1, got 2"),
            ("W1,A,Y\n", "no data rows"),
        ],
    )
    def test_malformed_inputs_name_the_problem(self, text, message):
        with pytest.raises(ValueError) as err:
            read_dataset_csv(io.StringIO(text))
        assert message in str(err.value)

    def test_error_names_first_bad_row(self):
        text = "W1,A,Y\n0,0,1\n0,1,2\nbad,0,3\n"
        with pytest.raises(ValueError, match="row 3"):
            read_dataset_csv(io.StringIO(text))
