"""Image and raster file formats.

PGM (P2/P5) is parsed directly; PNG goes through Pillow. Float rasters are
raw little-endian float32 with a ``key = value`` text sidecar.
"""

from __future__ import annotations

import csv
import os
import re
from pathlib import Path

import numpy as np

from .errors import IoError, UnsupportedImage
from .grammage import GrayImage

_PGM_TOKEN = re.compile(rb"(#[^\n]*\n)|(\S+)")


def _pgm_header(data: bytes):
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = _PGM_TOKEN.search(data, pos)
        if m is None:
            raise UnsupportedImage("truncated PGM header")
        pos = m.end()
        if m.group(2):
            tokens.append(m.group(2))
    return tokens, pos


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a binary (P5) or plain (P2) graymap. Returns (values, maxval)."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise UnsupportedImage(f"{path}: not a graymap (magic {magic!r})")
    (_, w, h, maxval), pos = _pgm_header(data)
    w, h, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval < 65536:
        raise UnsupportedImage(f"{path}: invalid maxval {maxval}")
    if magic == b"P2":
        vals = np.array(data[pos:].split()[: w * h], dtype=np.int64)
    else:
        # exactly one whitespace byte separates the header from the raster
        pos += 1
        dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        vals = np.frombuffer(data, dtype=dt, count=w * h, offset=pos)
    if vals.size != w * h:
        raise UnsupportedImage(f"{path}: expected {w * h} samples, got {vals.size}")
    return vals.reshape(h, w).astype(np.uint16 if maxval > 255 else np.uint8), maxval


def write_pgm(path, values, maxval=None) -> None:
    """Write integer gray values as binary PGM (8- or 16-bit)."""
    v = np.asarray(values)
    if maxval is None:
        maxval = 255 if v.max() <= 255 else 65535
    h, w = v.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    dt = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(v.astype(dt).tobytes())


def read_png(path) -> tuple[np.ndarray, int]:
    from PIL import Image

    with Image.open(path) as im:
        mode = im.mode
        if mode == "L":
            return np.asarray(im, dtype=np.uint8), 255
        if mode in ("I;16", "I;16B", "I;16L", "I"):
            a = np.asarray(im)
            if a.min() < 0 or a.max() > 65535:
                raise UnsupportedImage(f"{path}: values outside 16-bit range")
            return a.astype(np.uint16), 65535
    raise UnsupportedImage(
        f"{path}: unsupported PNG mode {mode!r}; only 8/16-bit grayscale is accepted"
    )


def load_image(path, pixel_size: float) -> GrayImage:
    """Load an 8/16-bit grayscale PGM or PNG; pixel size comes from the caller."""
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            magic = fh.read(8)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e.strerror or e}") from e
    if magic[:2] in (b"P2", b"P5"):
        values, maxval = read_pgm(path)
    elif magic.startswith(b"\x89PNG"):
        values, maxval = read_png(path)
    else:
        raise UnsupportedImage(f"{path}: unrecognized image format")
    maxrep = 255 if maxval <= 255 else 65535
    return GrayImage(values, float(pixel_size), max_value=min(maxval, maxrep), source=path)


def write_raster(path, values, **meta) -> None:
    """Write a float32 raster plus ``<path>.txt`` sidecar (width, height, meta)."""
    v = np.asarray(values, dtype="<f4")
    h, w = v.shape
    Path(path).write_bytes(v.tobytes())
    lines = [f"width = {w}", f"height = {h}", "dtype = float32-le"]
    lines += [f"{k} = {val!r}" if isinstance(val, str) else f"{k} = {val}" for k, val in meta.items()]
    Path(f"{path}.txt").write_text("\n".join(lines) + "\n")


def read_sidecar(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" not in line:
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v.strip("'\"")
    return out


def read_raster(path) -> tuple[np.ndarray, dict]:
    meta = read_sidecar(f"{path}.txt")
    w, h = int(meta["width"]), int(meta["height"])
    v = np.frombuffer(Path(path).read_bytes(), dtype="<f4").reshape(h, w)
    return v.astype(float), meta


def write_radial_csv(path, rs) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["rho_per_um", "k1_um2", "count"])
        for rho, k, n in zip(rs.bin_centers, rs.values, rs.counts):
            wr.writerow([repr(float(rho)), repr(float(k)), int(n)])


def read_radial_csv(path):
    from .spectral import RadialSpectrum

    rho, k, n = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rho.append(float(row["rho_per_um"]))
            k.append(float(row["k1_um2"]))
            n.append(int(row["count"]))
    return RadialSpectrum(np.array(rho), np.array(k), np.array(n))
