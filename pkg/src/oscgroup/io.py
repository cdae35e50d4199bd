"""File formats.

Text formats start with a version line ``# oscgroup <kind> v<N>``. Readers
accept files without it (treated as v1) and reject unknown kinds/versions.
Images are 8-bit portable graymaps (P2 or P5).
"""
from __future__ import annotations

import csv
import io as _io
import math
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from oscgroup.errors import ParseError

FORMAT_VERSION = 1
_VERSION_RE = re.compile(r"^#\s*oscgroup\s+(\S+)\s+v(\d+)\s*$")


def version_line(kind: str) -> str:
    return f"# oscgroup {kind} v{FORMAT_VERSION}"


def atomic_write(path, data, mode: str = "w") -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode + ("b" if isinstance(data, bytes) else ""),
                       **({} if isinstance(data, bytes) else {"newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(x: float) -> str:
    return repr(float(x))


def _read_lines(path) -> list[str]:
    try:
        return Path(path).read_text().splitlines()
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not a text file") from exc


def _strip_version(lines: list[str], kind: str) -> tuple[list[str], int]:
    """Drop the version line (if any); returns remaining lines and their 1-based offset."""
    if lines and lines[0].startswith("#"):
        m = _VERSION_RE.match(lines[0].strip())
        if not m:
            raise ParseError(f"unrecognised header {lines[0]!r}", line=1)
        if m.group(1) != kind:
            raise ParseError(f"expected a {kind!r} file, got {m.group(1)!r}", line=1)
        if int(m.group(2)) != FORMAT_VERSION:
            raise ParseError(f"unsupported {kind} format version {m.group(2)}", line=1)
        return lines[1:], 2
    return lines, 1


# -- points -----------------------------------------------------------------

def write_points(path, points) -> Path:
    buf = _io.StringIO()
    buf.write(version_line("points") + "\n")
    buf.write("x,y\n")
    for x, y in np.asarray(points, dtype=float):
        buf.write(f"{_fmt(x)},{_fmt(y)}\n")
    return atomic_write(path, buf.getvalue())


def read_points(path) -> np.ndarray:
    lines, first = _strip_version(_read_lines(path), "points")
    rows = []
    header_seen = False
    for k, line in enumerate(lines, start=first):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if not header_seen and s.replace(" ", "").lower() == "x,y":
            header_seen = True
            continue
        parts = s.split(",")
        if len(parts) != 2:
            raise ParseError(f"expected 2 fields, got {len(parts)}", line=k)
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise ParseError(f"non-numeric coordinate in {s!r}", line=k) from exc
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ParseError("non-finite coordinate", line=k)
        rows.append((x, y))
    if not rows:
        raise ParseError(f"{path}: no points")
    return np.array(rows)


# -- orientation grid -------------------------------------------------------

def write_grid(path, theta_rad) -> Path:
    deg = np.degrees(np.asarray(theta_rad, dtype=float))
    buf = _io.StringIO()
    buf.write(version_line("orientation-grid") + "\n")
    for row in deg:
        buf.write(" ".join(_fmt(x) for x in row) + "\n")
    return atomic_write(path, buf.getvalue())


def read_grid(path) -> np.ndarray:
    """Orientation grid in radians (file stores degrees)."""
    lines, first = _strip_version(_read_lines(path), "orientation-grid")
    rows = []
    width = None
    for k, line in enumerate(lines, start=first):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            vals = [float(t) for t in s.split()]
        except ValueError as exc:
            raise ParseError(f"non-numeric orientation in row {len(rows)}", line=k) from exc
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise ParseError(f"row {len(rows)} has {len(vals)} entries, expected {width}", line=k)
        rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: empty grid")
    arr = np.array(rows)
    if not np.all(np.isfinite(arr)):
        raise ParseError("non-finite orientation")
    return np.radians(arr)


# -- graymap ----------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int, pos: int):
    tokens = []
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ParseError("truncated graymap header")
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit P2/P5 graymap as a float array of gray levels."""
    data = Path(path).read_bytes()
    if len(data) < 2 or data[:2] not in (b"P2", b"P5"):
        raise ParseError(f"{path}: not a P2/P5 graymap")
    magic = data[:2]
    try:
        (w, h, maxval), pos = _pgm_tokens(data, 3, 2)
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise ParseError(f"{path}: bad graymap header") from exc
    if width < 1 or height < 1:
        raise ParseError(f"{path}: empty image")
    if not 0 < maxval <= 255:
        raise ParseError(f"{path}: unsupported maxval {maxval} (only 8-bit graymaps are supported)")
    n = width * height
    if magic == b"P5":
        pixels = data[pos + 1:pos + 1 + n]
        if len(pixels) != n:
            raise ParseError(f"{path}: expected {n} bytes of pixel data, got {len(pixels)}")
        arr = np.frombuffer(pixels, dtype=np.uint8).astype(float)
    else:
        try:
            toks, _ = _pgm_tokens(data, n, pos)
        except ParseError as exc:
            raise ParseError(f"{path}: expected {n} pixel values") from exc
        try:
            arr = np.array([int(t) for t in toks], dtype=float)
        except ValueError as exc:
            raise ParseError(f"{path}: non-integer pixel value") from exc
        if arr.max(initial=0) > maxval:
            raise ParseError(f"{path}: pixel value exceeds maxval")
    arr = arr.reshape(height, width)
    if maxval != 255:
        arr = arr * (255.0 / maxval)
    return arr


def write_pgm(path, img) -> Path:
    """Write a binary (P5) 8-bit graymap; values are rounded and clipped to [0, 255]."""
    u = np.clip(np.rint(np.asarray(img, dtype=float)), 0, 255).astype(np.uint8)
    h, w = u.shape
    header = f"P5\n{w} {h}\n255\n".encode()
    return atomic_write(path, header + u.tobytes())


# -- traces, labels, series -------------------------------------------------

def write_traces(path, traces) -> Path:
    buf = _io.StringIO()
    buf.write(version_line("traces") + "\n")
    buf.write(",".join(["t"] + [f"osc_{i}" for i in range(traces.n)]) + "\n")
    for t, row in zip(traces.times, traces.v):
        buf.write(_fmt(t) + "," + ",".join(_fmt(x) for x in row) + "\n")
    return atomic_write(path, buf.getvalue())


def read_traces(path):
    """Returns ``(times, v)``."""
    lines, first = _strip_version(_read_lines(path), "traces")
    if not lines or not lines[0].startswith("t,"):
        raise ParseError("missing 't,osc_0,...' header", line=first)
    arr = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    return arr[:, 0], arr[:, 1:]


def write_labels(path, labels) -> Path:
    buf = _io.StringIO()
    buf.write(version_line("labels") + "\n")
    buf.write("osc_id,label\n")
    for i, lab in enumerate(np.asarray(labels).ravel()):
        buf.write(f"{i},{int(lab)}\n")
    return atomic_write(path, buf.getvalue())


def read_labels(path) -> np.ndarray:
    lines, first = _strip_version(_read_lines(path), "labels")
    out = []
    for k, line in enumerate(lines, start=first):
        s = line.strip()
        if not s or s == "osc_id,label":
            continue
        try:
            i, lab = (int(t) for t in s.split(","))
        except ValueError as exc:
            raise ParseError(f"bad label row {s!r}", line=k) from exc
        if i != len(out):
            raise ParseError(f"expected osc_id {len(out)}, got {i}", line=k)
        out.append(lab)
    return np.array(out, dtype=np.int64)


def write_series(path, times, counts) -> Path:
    buf = _io.StringIO()
    buf.write(version_line("coincidence") + "\n")
    buf.write("t,count\n")
    for t, c in zip(times, counts):
        buf.write(f"{_fmt(t)},{int(c)}\n")
    return atomic_write(path, buf.getvalue())


def write_label_map(path, labels) -> Path:
    lab = np.asarray(labels, dtype=np.int64)
    buf = _io.StringIO()
    buf.write(version_line("label-map") + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for row in lab:
        w.writerow(row.tolist())
    return atomic_write(path, buf.getvalue())


def read_label_map(path) -> np.ndarray:
    lines, first = _strip_version(_read_lines(path), "label-map")
    rows = [list(map(int, ln.split(","))) for ln in lines if ln.strip()]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ParseError("label map rows must be non-empty and of equal length", line=first)
    return np.array(rows, dtype=np.int64)


def write_cells(path, contours) -> Path:
    """Per-contour cell lists as ``contour,row,col`` rows."""
    buf = _io.StringIO()
    buf.write(version_line("contours") + "\n")
    buf.write("contour,row,col\n")
    for k, cells in enumerate(contours):
        for r, c in cells:
            buf.write(f"{k},{int(r)},{int(c)}\n")
    return atomic_write(path, buf.getvalue())


def read_cells(path) -> list[list[tuple[int, int]]]:
    lines, first = _strip_version(_read_lines(path), "contours")
    out: dict[int, list] = {}
    for k, line in enumerate(lines, start=first):
        s = line.strip()
        if not s or s == "contour,row,col":
            continue
        try:
            c, r, col = (int(t) for t in s.split(","))
        except ValueError as exc:
            raise ParseError(f"bad cell row {s!r}", line=k) from exc
        out.setdefault(c, []).append((r, col))
    return [out[k] for k in sorted(out)]


# -- key/value reports ------------------------------------------------------

def format_kv(kind: str, mapping: dict) -> str:
    lines = [version_line(kind)]
    for key, value in mapping.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = _fmt(value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def parse_kv(text: str, kind: str) -> dict:
    lines, first = _strip_version(text.splitlines(), kind)
    out = {}
    for k, line in enumerate(lines, start=first):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ParseError(f"expected key=value, got {s!r}", line=k)
        key, value = s.split("=", 1)
        out[key.strip()] = _coerce(value.strip())
    return out


def _coerce(value: str):
    if value in ("true", "false"):
        return value == "true"
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


# -- graphs and full-precision images ---------------------------------------

def write_edges(path, n: int, edges) -> Path:
    """Weighted edge list ``i,j,k`` preceded by a node-count line ``n=<N>``."""
    buf = _io.StringIO()
    buf.write(version_line("graph") + "\n")
    buf.write(f"n={int(n)}\n")
    buf.write("i,j,k\n")
    for i, j, k in edges:
        buf.write(f"{int(i)},{int(j)},{_fmt(k)}\n")
    return atomic_write(path, buf.getvalue())


def read_edges(path):
    """Returns ``(n, rows, cols, gains)``."""
    lines, first = _strip_version(_read_lines(path), "graph")
    n = None
    rows, cols, gains = [], [], []
    for k, line in enumerate(lines, start=first):
        s = line.strip()
        if not s or s.startswith("#") or s == "i,j,k":
            continue
        if s.startswith("n="):
            try:
                n = int(s[2:])
            except ValueError as exc:
                raise ParseError(f"bad node count {s!r}", line=k) from exc
            continue
        try:
            i, j, g = s.split(",")
            rows.append(int(i))
            cols.append(int(j))
            gains.append(float(g))
        except ValueError as exc:
            raise ParseError(f"bad edge row {s!r}", line=k) from exc
    if n is None:
        n = max(rows + cols, default=-1) + 1
    if n < 1:
        raise ParseError(f"{path}: graph has no nodes")
    return n, np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(gains)


def write_gray_text(path, img) -> Path:
    """Gray levels at full float precision, whitespace-separated rows."""
    buf = _io.StringIO()
    buf.write(version_line("gray-image") + "\n")
    for row in np.asarray(img, dtype=float):
        buf.write(" ".join(_fmt(x) for x in row) + "\n")
    return atomic_write(path, buf.getvalue())


def read_gray_text(path) -> np.ndarray:
    lines, first = _strip_version(_read_lines(path), "gray-image")
    rows = []
    for k, line in enumerate(lines, start=first):
        s = line.strip()
        if not s:
            continue
        try:
            rows.append([float(t) for t in s.split()])
        except ValueError as exc:
            raise ParseError(f"non-numeric gray level in row {len(rows)}", line=k) from exc
        if len(rows[-1]) != len(rows[0]):
            raise ParseError(f"row {len(rows) - 1} has {len(rows[-1])} entries, expected {len(rows[0])}", line=k)
    if not rows:
        raise ParseError(f"{path}: empty image")
    return np.array(rows)
