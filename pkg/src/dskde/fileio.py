"""PGM frames, the binary model format, detection CSVs and ``key = value`` configs."""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .bandwidth import BandwidthPlan
from .estimators import FrameStack, GpaTable
from .extract import BBox

MAGIC = b"DSKD"
FORMAT_VERSION = 1
VARIANT_CODES = {"ds": 1, "cd": 2}
_HEADER = struct.Struct("<4sHHIIIdddQ")


class PgmFormatError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
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
            raise PgmFormatError("truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Binary 8-bit PGM (P5) as a uint8 array of shape (rows, cols)."""
    data = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise PgmFormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise PgmFormatError(f"{path}: malformed header") from exc
    if not 0 < maxval <= 255:
        raise PgmFormatError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    raster = data[offset:offset + width * height]
    if len(raster) != width * height:
        raise PgmFormatError(f"{path}: expected {width * height} pixel bytes, found {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path, image) -> None:
    """Write a uint8 array, or a float array in [0, 1] scaled by 255, as P5."""
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = np.clip(np.rint(np.asarray(img, dtype=float) * 255.0), 0, 255).astype(np.uint8)
    rows, cols = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (cols, rows))
        fh.write(img.tobytes())


def list_frames(source) -> list[Path]:
    """PGM paths from a directory or an explicit list, sorted by file name."""
    if isinstance(source, (str, Path)) and Path(source).is_dir():
        paths = list(Path(source).glob("*.pgm"))
    elif isinstance(source, (str, Path)):
        paths = [Path(source)]
    else:
        paths = [Path(p) for p in source]
    return sorted(paths, key=lambda p: p.name)


def load_frames(source, stride: int = 1) -> FrameStack:
    """Every ``stride``-th frame, pixel byte v mapped to v / 255."""
    if stride < 1:
        raise ValueError("stride must be at least 1")
    paths = list_frames(source)[::stride]
    if not paths:
        raise FileNotFoundError(f"no PGM frames found in {source}")
    frames = [read_pgm(p) for p in paths]
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise PgmFormatError(f"frames have mixed dimensions: {sorted(shapes)}")
    return FrameStack(np.stack(frames).astype(float) / 255.0)


def save_stack(stack: FrameStack, directory, prefix: str = "frame") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(stack.n)))
    paths = []
    for k, frame in enumerate(stack.values):
        path = directory / f"{prefix}_{k:0{width}d}.pgm"
        write_pgm(path, frame)
        paths.append(path)
    return paths


def save_model(table: GpaTable, path) -> None:
    """Little-endian: header, float64 grid, float32 table (slice-major, then row-major)."""
    p, q = table.shape
    plan = table.plan
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, VARIANT_CODES[table.variant], p, q, table.g_star,
                          plan.h, plan.h_star, plan.sigma_hat, table.seed)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(table.grid.astype("<f8").tobytes())
        fh.write(table.table.astype("<f4").tobytes())


def load_model(path) -> GpaTable:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ModelFormatError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, version, code, p, q, g_star, h, h_star, sigma_hat, seed = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    variants = {v: k for k, v in VARIANT_CODES.items()}
    if code not in variants:
        raise ModelFormatError(f"{path}: unknown variant flag {code}")
    expected = _HEADER.size + 8 * g_star + 4 * g_star * p * q
    if len(data) != expected:
        raise ModelFormatError(f"{path}: payload length {len(data)} bytes, header implies {expected}")
    grid = np.frombuffer(data, dtype="<f8", count=g_star, offset=_HEADER.size).astype(float)
    if np.any(np.diff(grid) <= 0):
        raise ModelFormatError(f"{path}: grid is not strictly ascending")
    table = np.frombuffer(data, dtype="<f4", count=g_star * p * q, offset=_HEADER.size + 8 * g_star)
    plan = BandwidthPlan(h=h, h_star=h_star, sigma_hat=sigma_hat, n=None, m=p * q)
    return GpaTable(grid=grid, table=table.astype(float).reshape(g_star, p, q), plan=plan,
                    variant=variants[code], seed=seed)


DETECTION_FIELDS = ["frame_id", "r0", "r1", "c0", "c1", "seconds"]


def write_detections(path, rows) -> None:
    """``rows`` yields ``(frame_id, BBox | None, seconds)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DETECTION_FIELDS)
        for fid, box, secs in rows:
            coords = ["", "", "", ""] if box is None else [box.r0, box.r1, box.c0, box.c1]
            w.writerow([fid] + coords + [f"{secs:.6f}"])


def read_detections(path) -> tuple[dict[str, BBox | None], dict[str, float]]:
    boxes, seconds = {}, {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != DETECTION_FIELDS:
            raise ValueError(f"{path}: expected header {','.join(DETECTION_FIELDS)}")
        for row in reader:
            fid = row["frame_id"]
            coords = [row[k].strip() for k in ("r0", "r1", "c0", "c1")]
            boxes[fid] = None if all(c == "" for c in coords) else BBox(*(int(c) for c in coords))
            seconds[fid] = float(row["seconds"]) if row["seconds"] else None
    return boxes, seconds


def read_config(path) -> dict[str, str]:
    """Plain ``key = value`` lines; ``#`` starts a comment. Keys use ``_`` or ``-`` interchangeably."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out
