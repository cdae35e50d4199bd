import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oscgroup import io
from oscgroup.errors import ParseError
from oscgroup.network import TraceBuffer


def test_points_round_trip(tmp_path, rng):
    pts = rng.normal(size=(7, 2)) * 1e3
    io.write_points(tmp_path / "p.csv", pts)
    np.testing.assert_array_equal(io.read_points(tmp_path / "p.csv"), pts)


def test_points_without_version_line(tmp_path):
    (tmp_path / "p.csv").write_text("x,y\n1,2\n3.5,-4\n")
    np.testing.assert_array_equal(io.read_points(tmp_path / "p.csv"), [[1, 2], [3.5, -4]])


@pytest.mark.parametrize("text,line", [("x,y\n1,2\n1,2,3\n", 3), ("x,y\n1,a\n", 2), ("x,y\n1,inf\n", 2)])
def test_points_errors_carry_line(tmp_path, text, line):
    (tmp_path / "p.csv").write_text(text)
    with pytest.raises(ParseError) as info:
        io.read_points(tmp_path / "p.csv")
    assert info.value.line == line


def test_empty_points_file(tmp_path):
    (tmp_path / "p.csv").write_text("")
    with pytest.raises(ParseError):
        io.read_points(tmp_path / "p.csv")
    (tmp_path / "q.csv").write_text("# oscgroup points v1\nx,y\n")
    with pytest.raises(ParseError):
        io.read_points(tmp_path / "q.csv")


def test_unknown_version_or_kind_rejected(tmp_path):
    (tmp_path / "a.csv").write_text("# oscgroup points v9\nx,y\n1,2\n")
    with pytest.raises(ParseError, match="version"):
        io.read_points(tmp_path / "a.csv")
    (tmp_path / "b.csv").write_text("# oscgroup labels v1\nx,y\n1,2\n")
    with pytest.raises(ParseError, match="points"):
        io.read_points(tmp_path / "b.csv")


@given(hnp.arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                  elements=st.floats(0, 179.9)))
def test_grid_round_trip(tmp_path_factory, deg):
    path = tmp_path_factory.mktemp("g") / "grid.txt"
    io.write_grid(path, np.radians(deg))
    np.testing.assert_allclose(np.degrees(io.read_grid(path)), deg, rtol=1e-12, atol=1e-12)


def test_grid_ragged_row_reports_row(tmp_path):
    (tmp_path / "g.txt").write_text("0 90 45\n10 20\n")
    with pytest.raises(ParseError) as info:
        io.read_grid(tmp_path / "g.txt")
    assert "row 1" in str(info.value)
    assert info.value.line == 2


def test_pgm_round_trip_binary(tmp_path, rng):
    img = rng.integers(0, 256, (5, 7)).astype(float)
    io.write_pgm(tmp_path / "a.pgm", img)
    np.testing.assert_array_equal(io.read_pgm(tmp_path / "a.pgm"), img)


def test_pgm_ascii_with_comments(tmp_path):
    (tmp_path / "a.pgm").write_text("P2\n# comment\n3 2\n255\n0 10 20\n30 40 255\n")
    np.testing.assert_array_equal(io.read_pgm(tmp_path / "a.pgm"), [[0, 10, 20], [30, 40, 255]])


def test_pgm_rescales_small_maxval(tmp_path):
    (tmp_path / "a.pgm").write_text("P2\n2 1\n15\n0 15\n")
    np.testing.assert_array_equal(io.read_pgm(tmp_path / "a.pgm"), [[0, 255]])


def test_pgm_sixteen_bit_rejected(tmp_path):
    (tmp_path / "a.pgm").write_bytes(b"P5\n2 1\n65535\n" + b"\x00\x01\x00\x02")
    with pytest.raises(ParseError, match="8-bit"):
        io.read_pgm(tmp_path / "a.pgm")


@pytest.mark.parametrize("data", [b"P6\n1 1\n255\n\x00\x00\x00", b"P5\n2 2\n255\n\x00", b"P2\n2 1\n255\n1\n", b""])
def test_pgm_malformed(tmp_path, data):
    (tmp_path / "a.pgm").write_bytes(data)
    with pytest.raises(ParseError):
        io.read_pgm(tmp_path / "a.pgm")


def test_pgm_write_clips(tmp_path):
    io.write_pgm(tmp_path / "a.pgm", np.array([[-20.0, 300.0, 127.6]]))
    np.testing.assert_array_equal(io.read_pgm(tmp_path / "a.pgm"), [[0, 255, 128]])


def test_traces_round_trip(tmp_path, rng):
    tr = TraceBuffer(0.25, rng.normal(size=(9, 3)))
    io.write_traces(tmp_path / "t.csv", tr)
    times, v = io.read_traces(tmp_path / "t.csv")
    np.testing.assert_array_equal(times, tr.times)
    np.testing.assert_array_equal(v, tr.v)


def test_labels_round_trip_and_errors(tmp_path):
    io.write_labels(tmp_path / "l.csv", [0, -1, 2, 2])
    np.testing.assert_array_equal(io.read_labels(tmp_path / "l.csv"), [0, -1, 2, 2])
    (tmp_path / "bad.csv").write_text("osc_id,label\n0,1\n2,1\n")
    with pytest.raises(ParseError):
        io.read_labels(tmp_path / "bad.csv")


def test_label_map_round_trip(tmp_path, rng):
    lab = rng.integers(0, 4, (6, 5))
    io.write_label_map(tmp_path / "m.csv", lab)
    np.testing.assert_array_equal(io.read_label_map(tmp_path / "m.csv"), lab)


def test_cells_round_trip(tmp_path):
    contours = [[(1, 2), (2, 2)], [(5, 5)]]
    io.write_cells(tmp_path / "c.csv", contours)
    assert io.read_cells(tmp_path / "c.csv") == contours
    io.write_cells(tmp_path / "e.csv", [])
    assert io.read_cells(tmp_path / "e.csv") == []


def test_edges_round_trip(tmp_path):
    io.write_edges(tmp_path / "g.csv", 4, [(0, 1, 2.5), (1, 3, 0.125)])
    n, rows, cols, gains = io.read_edges(tmp_path / "g.csv")
    assert n == 4
    assert rows.tolist() == [0, 1] and cols.tolist() == [1, 3] and gains.tolist() == [2.5, 0.125]


def test_gray_text_round_trip(tmp_path, rng):
    img = rng.normal(100, 40, (4, 6))
    io.write_gray_text(tmp_path / "i.txt", img)
    np.testing.assert_array_equal(io.read_gray_text(tmp_path / "i.txt"), img)


@given(st.dictionaries(st.text("abcdefgh_", min_size=1, max_size=8),
                       st.one_of(st.booleans(), st.integers(-10**6, 10**6),
                                 st.floats(allow_nan=False, allow_infinity=False),
                                 st.text("xyz ", min_size=1, max_size=6).map(str.strip).filter(bool))))
def test_key_value_round_trip(mapping):
    parsed = io.parse_kv(io.format_kv("report", mapping), "report")
    assert parsed.keys() == mapping.keys()
    for key, value in mapping.items():
        assert parsed[key] == value


def test_atomic_write_leaves_no_temp_files(tmp_path):
    io.atomic_write(tmp_path / "sub" / "f.txt", "hello")
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["f.txt"]
