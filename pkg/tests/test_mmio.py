import numpy as np
import pytest

from vstab.errors import MatrixMarketError
from vstab.mmio import file_checksum, read_matrix, read_square, read_vector, write_matrix


def test_read_array(data_dir):
    A = read_square(data_dir / "nonnormal_0.5_2.mtx")
    assert A.dtype == np.complex128
    assert np.array_equal(A, np.array([[0.5, 1.0], [0.0, 2.0]]))


def test_read_complex_coordinate(data_dir):
    A = read_square(data_dir / "diag_complex_coord.mtx")
    assert np.array_equal(A, np.diag([0.5j, 2.0]))


def test_read_vector(data_dir):
    x = read_vector(data_dir / "e1.mtx")
    assert x.shape == (2,) and np.array_equal(x, [1.0, 0.0])


@pytest.mark.parametrize("name,reader", [("garbage.mtx", read_matrix),
                                         ("not_square.mtx", read_square),
                                         ("missing.mtx", read_matrix),
                                         ("nonnormal_0.5_2.mtx", read_vector)])
def test_read_errors(data_dir, name, reader):
    with pytest.raises(MatrixMarketError):
        reader(data_dir / name)


def test_bad_body(tmp_path):
    p = tmp_path / "bad.mtx"
    p.write_text("%%MatrixMarket matrix array real general\n2 2\n1.0\nabc\n")
    with pytest.raises(MatrixMarketError):
        read_matrix(p)


def test_non_finite(tmp_path):
    p = tmp_path / "nan.mtx"
    p.write_text("%%MatrixMarket matrix array real general\n1 1\nnan\n")
    with pytest.raises(MatrixMarketError):
        read_matrix(p)


@pytest.mark.parametrize("A", [np.array([[0.1, -2.5e-17], [3.0, 1e300]]),
                               np.array([[1 + 2j, 0.3], [0.0, -1j]])])
def test_round_trip_is_exact(tmp_path, A):
    p = tmp_path / "a.mtx"
    write_matrix(p, A, comment="round trip")
    assert p.exists()
    assert np.array_equal(read_matrix(p), A.astype(complex))
    assert ("complex" in p.read_text().splitlines()[0]) == np.iscomplexobj(A)


def test_checksum_is_content_hash(tmp_path, data_dir):
    a = tmp_path / "copy.mtx"
    a.write_bytes((data_dir / "identity.mtx").read_bytes())
    assert file_checksum(a) == file_checksum(data_dir / "identity.mtx")
    assert len(file_checksum(a)) == 64
