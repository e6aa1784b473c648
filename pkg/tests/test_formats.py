import numpy as np
import pytest

from ndmultiplex.design import standard_sequence
from ndmultiplex.dynamics import build_signal_matrix, default_models
from ndmultiplex.errors import ValidationError
from ndmultiplex.formats import (
    FRS1_MAGIC,
    fraction_to_gray,
    overlay_rgb,
    read_dense_csv,
    read_frs1,
    read_json,
    read_pnm,
    read_signal_matrix_csv,
    read_table_csv,
    sha256_file,
    write_dense_csv,
    write_frs1,
    write_json,
    write_pgm,
    write_ppm,
    write_signal_matrix_csv,
    write_table_csv,
)
from ndmultiplex.phantom import FrameStack


@pytest.fixture
def stack():
    rng = np.random.default_rng(1)
    return FrameStack(rng.random((4, 3, 5)).astype(np.float32), [0.0, 0.1, 0.2, 0.35], 0.07)


def test_frs1_round_trip_is_bit_identical(tmp_path, stack):
    p = tmp_path / "s.frs"
    write_frs1(p, stack)
    back = read_frs1(p)
    assert back.voxels.tobytes() == stack.voxels.tobytes()
    np.testing.assert_array_equal(back.frame_times_s, stack.frame_times_s)
    assert back.pixel_pitch_mm == stack.pixel_pitch_mm
    q = tmp_path / "t.frs"
    write_frs1(q, back)
    assert p.read_bytes() == q.read_bytes()


def test_frs1_header_layout(tmp_path, stack):
    p = tmp_path / "s.frs"
    write_frs1(p, stack)
    raw = p.read_bytes()
    assert raw[:4] == FRS1_MAGIC
    w, h, n = np.frombuffer(raw[4:16], "<u4")
    assert (w, h, n) == (5, 3, 4)
    ext = int(np.frombuffer(raw[20:24], "<u4")[0])
    assert len(raw) == 24 + ext + 8 * 4 + 4 * 4 * 3 * 5


def test_frs1_bad_magic(tmp_path, stack):
    p = tmp_path / "s.frs"
    write_frs1(p, stack)
    p.write_bytes(b"XXXX" + p.read_bytes()[4:])
    with pytest.raises(ValidationError):
        read_frs1(p)


def test_frs1_truncated(tmp_path, stack):
    p = tmp_path / "s.frs"
    write_frs1(p, stack)
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(ValidationError):
        read_frs1(p)


def test_dense_csv_round_trip(tmp_path):
    M = np.random.default_rng(2).standard_normal((16, 3)) * 1e3
    write_dense_csv(tmp_path / "m.csv", M)
    np.testing.assert_allclose(read_dense_csv(tmp_path / "m.csv"), M, rtol=1e-12, atol=0)


def test_dense_csv_rejects_ragged(tmp_path):
    (tmp_path / "r.csv").write_text("1,2\n3\n")
    with pytest.raises(ValidationError):
        read_dense_csv(tmp_path / "r.csv")


def test_signal_matrix_csv_round_trip(tmp_path):
    S = build_signal_matrix(default_models(), standard_sequence())
    write_signal_matrix_csv(tmp_path / "s.csv", S)
    back = read_signal_matrix_csv(tmp_path / "s.csv")
    assert back.labels == S.labels
    np.testing.assert_array_equal(back.values, S.values)
    np.testing.assert_array_equal(back.frame_times_s, S.frame_times_s)


def test_table_csv(tmp_path):
    write_table_csv(tmp_path / "t.csv", ["n", "x"], [[1, 2], [0.1, 1 / 3]])
    assert (tmp_path / "t.csv").read_text().splitlines()[1] == "1,0.10000000000000001"
    header, cols = read_table_csv(tmp_path / "t.csv")
    assert header == ["n", "x"]
    assert cols[1][1] == 1 / 3


def test_json_is_canonical(tmp_path):
    write_json(tmp_path / "a.json", {"b": np.float64(1.5), "a": np.arange(2)})
    assert (tmp_path / "a.json").read_text() == '{\n  "a": [\n    0,\n    1\n  ],\n  "b": 1.5\n}\n'
    assert read_json(tmp_path / "a.json") == {"a": [0, 1], "b": 1.5}
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ValidationError):
        read_json(tmp_path / "bad.json")


def test_gray_map():
    np.testing.assert_array_equal(fraction_to_gray([0.0, 0.5, 1.0, np.nan, 2.0]),
                                  [0, 128, 255, 0, 255])


def test_overlay_colours():
    rgb = overlay_rgb(np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
    np.testing.assert_array_equal(rgb[0], [[0, 0, 255], [255, 255, 0], [0, 0, 0]])


def test_pnm_round_trip(tmp_path):
    g = np.arange(12, dtype=np.uint8).reshape(3, 4)
    write_pgm(tmp_path / "g.pgm", g)
    assert (tmp_path / "g.pgm").read_bytes().startswith(b"P5\n4 3\n255\n")
    np.testing.assert_array_equal(read_pnm(tmp_path / "g.pgm"), g)
    c = np.arange(36, dtype=np.uint8).reshape(3, 4, 3)
    write_ppm(tmp_path / "c.ppm", c)
    np.testing.assert_array_equal(read_pnm(tmp_path / "c.ppm"), c)


def test_sha256(tmp_path):
    (tmp_path / "x").write_bytes(b"abc")
    assert sha256_file(tmp_path / "x") == (
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")
