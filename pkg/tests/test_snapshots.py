"""Binary snapshot format: round trips, validation, corruption handling."""

import struct

import numpy as np
import pytest

from qgk.grid import GridSpec
from qgk import spectral as sp
from qgk.snapshots import MAGIC, SnapshotError, read_snapshot, write_snapshot


def field(n=16, L=2.5, seed=0):
    g = GridSpec(n, L)
    return sp.random_band_field(g, seed, 1.0, 3.0, 1, n // 3)


def test_round_trip_bitwise(tmp_path):
    u = field(seed=3)
    path = tmp_path / "state.qgk"
    write_snapshot(path, u, 1.75)
    v, t = read_snapshot(path)
    assert t == 1.75
    assert v.grid.n == u.grid.n
    assert v.grid.box_length == u.grid.box_length
    assert np.array_equal(v.coeffs, u.coeffs)


def test_header_layout(tmp_path):
    u = field(n=16, L=2.5)
    path = tmp_path / "state.qgk"
    write_snapshot(path, u, 0.5)
    raw = path.read_bytes()
    magic, version, n, L, t = struct.unpack("<4sIIdd", raw[:28])
    assert magic == MAGIC and version == 1 and n == 16
    assert L == 2.5 and t == 0.5
    assert len(raw) == 28 + 16 * 16 * 16


def test_truncated_payload_rejected(tmp_path):
    u = field()
    path = tmp_path / "state.qgk"
    write_snapshot(path, u, 0.0)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(SnapshotError, match="payload"):
        read_snapshot(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "state.qgk"
    write_snapshot(path, field(), 0.0)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(SnapshotError, match="magic"):
        read_snapshot(path)


def test_bad_version_rejected(tmp_path):
    path = tmp_path / "state.qgk"
    write_snapshot(path, field(), 0.0)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 9)
    path.write_bytes(bytes(raw))
    with pytest.raises(SnapshotError, match="version"):
        read_snapshot(path)


def test_hermitian_violation_rejected(tmp_path):
    u = field(seed=4)
    u.coeffs[1, 2] += 0.5  # break the symmetry on purpose
    path = tmp_path / "state.qgk"
    write_snapshot(path, u, 0.0)
    with pytest.raises(SnapshotError, match="Hermitian"):
        read_snapshot(path)


def test_nonfinite_rejected(tmp_path):
    u = field(seed=5)
    u.coeffs[2, 2] = np.nan
    path = tmp_path / "state.qgk"
    write_snapshot(path, u, 0.0)
    with pytest.raises(SnapshotError, match="finite"):
        read_snapshot(path)
