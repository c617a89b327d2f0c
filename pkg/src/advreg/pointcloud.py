"""Point-cloud container, PLY/XYZ reading and writing, normalization and
mini-batch sampling."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    DegenerateInputError,
    EmptyCloudError,
    InvalidArgumentError,
    MalformedHeaderError,
    MissingFileError,
    UnsupportedFormatError,
)

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    source_path: Optional[str] = None

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim == 1 and pts.size == 3:
            pts = pts.reshape(1, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidArgumentError(f"points must be (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    def with_points(self, points):
        return PointCloud(points, self.source_path)


@dataclass(frozen=True)
class NormalizationRecord:
    centroid: np.ndarray
    scale: float

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise InvalidArgumentError(f"scale must be positive and finite, got {self.scale}")
        object.__setattr__(self, "centroid", np.asarray(self.centroid, dtype=np.float64))

    def apply(self, points):
        return (np.asarray(points) - self.centroid) / self.scale

    def invert(self, points):
        return np.asarray(points) * self.scale + self.centroid


def _points_of(cloud):
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)


def rms_radius(points):
    points = _points_of(points)
    centered = points - points.mean(axis=0)
    return float(np.sqrt(np.mean(np.sum(centered * centered, axis=1))))


def normalize(cloud):
    """Center on the centroid and scale to unit RMS radius."""
    pts = _points_of(cloud)
    if len(pts) == 0:
        raise EmptyCloudError("cannot normalize an empty cloud")
    centroid = pts.mean(axis=0)
    scale = rms_radius(pts)
    if not scale > 1e-300:
        raise DegenerateInputError("all points coincide; normalization scale is zero")
    rec = NormalizationRecord(centroid, scale)
    out = PointCloud(rec.apply(pts), getattr(cloud, "source_path", None))
    return out, rec


def denormalize(cloud, record):
    return PointCloud(record.invert(_points_of(cloud)), getattr(cloud, "source_path", None))


def sample_batch(cloud, n, rng):
    """Draw ``n`` points uniformly with replacement."""
    pts = _points_of(cloud)
    if len(pts) == 0:
        raise EmptyCloudError("cannot sample from an empty cloud")
    if n < 1:
        raise InvalidArgumentError(f"batch size must be >= 1, got {n}")
    return pts[rng.integers(0, len(pts), size=int(n))]


# ---------------------------------------------------------------- file IO


_EXTENSIONS = {".ply": "ply", ".xyz": "xyz", ".txt": "xyz", ".pts": "xyz"}


def load_point_cloud(path, format=None):
    """Read vertex positions from a PLY or XYZ file.

    ``format`` is ``"ply"`` or ``"xyz"``; inferred from the extension when
    omitted: ``.ply`` is PLY, ``.xyz``/``.txt``/``.pts`` are XYZ text.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFileError(f"no such file: {path}")
    if format is None:
        ext = os.path.splitext(path)[1].lower()
        format = _EXTENSIONS.get(ext)
        if format is None:
            raise UnsupportedFormatError(f"{path}: cannot infer format from extension {ext!r}")
    format = format.lower()
    if format == "ply":
        pts = _read_ply(path)
    elif format == "xyz":
        pts = _read_xyz(path)
    else:
        raise UnsupportedFormatError(f"unknown point-cloud format {format!r}")
    if len(pts) == 0:
        raise EmptyCloudError(f"{path}: file contains no points")
    return PointCloud(pts, path)


def _read_xyz(path):
    rows = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.replace(",", " ").split()
            if len(parts) < 3:
                raise MalformedHeaderError(f"{path}:{lineno}: expected 'x y z'")
            try:
                rows.append([float(v) for v in parts[:3]])
            except ValueError as exc:
                raise MalformedHeaderError(f"{path}:{lineno}: {exc}") from None
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def _parse_ply_header(fh, path):
    magic = fh.readline().strip()
    if magic != b"ply":
        raise MalformedHeaderError(f"{path}: missing 'ply' magic")
    fmt = None
    elements = []  # [name, count, [(prop_name, dtype | ("list", count_t, item_t))]]
    while True:
        raw = fh.readline()
        if not raw:
            raise MalformedHeaderError(f"{path}: header ends without 'end_header'")
        tok = raw.decode("ascii", errors="replace").split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "end_header":
            break
        if tok[0] == "format":
            if len(tok) < 2:
                raise MalformedHeaderError(f"{path}: bad format line")
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3:
                raise MalformedHeaderError(f"{path}: bad element line {raw!r}")
            try:
                elements.append([tok[1], int(tok[2]), []])
            except ValueError:
                raise MalformedHeaderError(f"{path}: bad element count {tok[2]!r}") from None
        elif tok[0] == "property":
            if not elements:
                raise MalformedHeaderError(f"{path}: property before any element")
            if tok[1] == "list":
                if len(tok) != 5 or tok[2] not in _PLY_TYPES or tok[3] not in _PLY_TYPES:
                    raise MalformedHeaderError(f"{path}: bad list property {raw!r}")
                elements[-1][2].append((tok[4], ("list", _PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]])))
            else:
                if len(tok) != 3 or tok[1] not in _PLY_TYPES:
                    raise MalformedHeaderError(f"{path}: bad property {raw!r}")
                elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
        else:
            raise MalformedHeaderError(f"{path}: unexpected header keyword {tok[0]!r}")
    if fmt is None:
        raise MalformedHeaderError(f"{path}: missing format line")
    return fmt, elements


def _read_ply(path):
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh, path)
        names = [e[0] for e in elements]
        if "vertex" not in names:
            raise MalformedHeaderError(f"{path}: no vertex element")
        vertex = elements[names.index("vertex")]
        props = [p[0] for p in vertex[2]]
        for axis in "xyz":
            if axis not in props:
                raise MalformedHeaderError(f"{path}: vertex element lacks property {axis!r}")
        if fmt == "ascii":
            return _read_ply_ascii(fh, elements, path)
        if fmt == "binary_little_endian":
            return _read_ply_binary(fh, elements, path)
        if fmt == "binary_big_endian":
            raise UnsupportedFormatError(f"{path}: binary_big_endian PLY is not supported")
        raise MalformedHeaderError(f"{path}: unknown PLY format {fmt!r}")


def _read_ply_ascii(fh, elements, path):
    text = fh.read().decode("ascii", errors="replace").splitlines()
    row = 0
    for name, count, props in elements:
        if name != "vertex":
            row += count
            continue
        cols = [next(i for i, p in enumerate(props) if p[0] == a) for a in "xyz"]
        lines = text[row:row + count]
        if len(lines) < count:
            raise MalformedHeaderError(f"{path}: expected {count} vertices, found {len(lines)}")
        out = np.empty((count, 3), dtype=np.float64)
        for i, line in enumerate(lines):
            vals = line.split()
            try:
                out[i] = [float(vals[c]) for c in cols]
            except (IndexError, ValueError):
                raise MalformedHeaderError(f"{path}: bad vertex line {row + i + 1}") from None
        return out
    raise MalformedHeaderError(f"{path}: no vertex element")  # pragma: no cover


def _read_ply_binary(fh, elements, path):
    for name, count, props in elements:
        if any(isinstance(p[1], tuple) for p in props):
            if name == "vertex":
                raise UnsupportedFormatError(f"{path}: list properties on vertices are not supported")
            # variable-size records before the vertex block would need a
            # record-by-record walk; vertices normally come first
            raise UnsupportedFormatError(
                f"{path}: element {name!r} with list properties precedes the vertex element"
            )
        dtype = np.dtype([(p[0], "<" + p[1]) for p in props])
        raw = fh.read(dtype.itemsize * count)
        if len(raw) != dtype.itemsize * count:
            raise MalformedHeaderError(f"{path}: truncated {name} block")
        data = np.frombuffer(raw, dtype=dtype)
        if name == "vertex":
            return np.column_stack([data[a].astype(np.float64) for a in "xyz"])
    raise MalformedHeaderError(f"{path}: no vertex element")  # pragma: no cover


def write_ply(path, cloud, binary=True, dtype="double"):
    """Write vertex positions as PLY (binary little-endian by default)."""
    pts = _points_of(cloud)
    np_type = {"double": "<f8", "float": "<f4"}[dtype]
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {len(pts)}",
        f"property {dtype} x",
        f"property {dtype} y",
        f"property {dtype} z",
        "end_header",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(np.ascontiguousarray(pts, dtype=np_type).tobytes())
        else:
            for p in pts:
                fh.write(("%r %r %r\n" % tuple(float(v) for v in p)).encode("ascii"))


def write_xyz(path, cloud):
    np.savetxt(path, _points_of(cloud), fmt="%.17g")


def bundled_cloud_path():
    return os.path.join(os.path.dirname(__file__), "data", "toy_bunny.ply")


def load_bundled_cloud():
    """The shipped ~2000-point asymmetric test shape (normalized)."""
    return load_point_cloud(bundled_cloud_path(), "ply")
