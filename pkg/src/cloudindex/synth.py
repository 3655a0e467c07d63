"""Synthetic nonwovens from a Poisson process of straight fiber segments.

Segment starts form a homogeneous Poisson field on the observation window
grown by the 99.9th length percentile plus R on every side, directions are
uniform on [0, pi) and lengths exponential with mean 1/lambda. Each segment
is drawn as a digital line carrying unit mass per unit length and smeared
with a disk (mean value) kernel of radius R.

Random numbers come from numpy's PCG64 generator seeded with ``cfg.seed``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy import signal

from .errors import DegenerateField, InvalidParams, KernelTooSmall, ZeroVariance
from .grammage import GrammageField

RNG_ALGORITHM = "numpy.random.PCG64"
LENGTH_QUANTILE = 0.999
MIN_KERNEL_PIXELS = 5
_CHUNK_POINTS = 4_000_000


@dataclass(frozen=True)
class SynthConfig:
    grid: tuple[int, int]  # (Nx, Ny) pixels
    pixel_size_um: float
    na_per_mm2: float
    lambda_per_mm: float
    radius_um: float
    seed: int = 0

    def __post_init__(self):
        nx, ny = self.grid
        if nx < 2 or ny < 2:
            raise InvalidParams(f"grid must be at least 2x2, got {self.grid}")
        for name in ("pixel_size_um", "na_per_mm2", "lambda_per_mm", "radius_um"):
            if not getattr(self, name) > 0:
                raise InvalidParams(f"{name} must be positive")
        if self.pixel_size_um > self.radius_um:
            raise InvalidParams(
                f"pixel size {self.pixel_size_um} um does not resolve R = {self.radius_um} um"
            )

    @property
    def window(self) -> tuple[float, float]:
        """(width, height) of the observation window in um."""
        return (self.grid[0] * self.pixel_size_um, self.grid[1] * self.pixel_size_um)

    @property
    def mean_length_um(self) -> float:
        return 1000.0 / self.lambda_per_mm

    @property
    def margin_um(self) -> float:
        """Window extension: length quantile plus R."""
        return -math.log(1 - LENGTH_QUANTILE) * self.mean_length_um + self.radius_um


@dataclass(frozen=True)
class Segment:
    start: tuple[float, float]
    angle: float
    length: float


@dataclass(frozen=True)
class FiberSystem:
    """Segments as parallel arrays (um, radians)."""

    x: np.ndarray
    y: np.ndarray
    angle: np.ndarray
    length: np.ndarray

    def __len__(self):
        return len(self.x)

    def __iter__(self) -> Iterator[Segment]:
        for x, y, a, l in zip(self.x, self.y, self.angle, self.length):
            yield Segment((float(x), float(y)), float(a), float(l))

    @classmethod
    def from_segments(cls, segments) -> "FiberSystem":
        segs = list(segments)
        if any(s.length <= 0 for s in segs):
            raise InvalidParams("segment lengths must be positive")
        return cls(
            np.array([s.start[0] for s in segs], dtype=float),
            np.array([s.start[1] for s in segs], dtype=float),
            np.array([s.angle for s in segs], dtype=float),
            np.array([s.length for s in segs], dtype=float),
        )

    def ends(self):
        return self.x + self.length * np.cos(self.angle), self.y + self.length * np.sin(self.angle)


def sample_fiber_system(cfg: SynthConfig) -> FiberSystem:
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    w, h = cfg.window
    m = cfg.margin_um
    area_mm2 = (w + 2 * m) * (h + 2 * m) * 1e-6
    n = rng.poisson(cfg.na_per_mm2 * area_mm2)
    x = rng.uniform(-m, w + m, n)
    y = rng.uniform(-m, h + m, n)
    angle = rng.uniform(0.0, np.pi, n)
    length = rng.exponential(cfg.mean_length_um, n)
    return FiberSystem(x, y, angle, length)


def disk_kernel(radius_px: float) -> np.ndarray:
    """Discrete mean value filter: unit sum over pixels within the radius."""
    r = int(math.floor(radius_px))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    k = (xx * xx + yy * yy <= radius_px * radius_px + 1e-9).astype(float)
    n = int(k.sum())
    if n < MIN_KERNEL_PIXELS:
        raise KernelTooSmall(
            f"disk of radius {radius_px:.3g} px covers {n} pixel(s); need >= {MIN_KERNEL_PIXELS}"
        )
    return k / n


def _clip(x0, y0, x1, y1, lo_x, lo_y, hi_x, hi_y):
    """Liang-Barsky clipping of many segments at once. Returns (t0, t1, keep)."""
    dx, dy = x1 - x0, y1 - y0
    t0 = np.zeros_like(x0)
    t1 = np.ones_like(x0)
    keep = np.ones(x0.shape, dtype=bool)
    for p, q in ((-dx, x0 - lo_x), (dx, hi_x - x0), (-dy, y0 - lo_y), (dy, hi_y - y0)):
        par = p == 0
        keep &= ~(par & (q < 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = q / p
        enter = (p < 0) & ~par
        leave = (p > 0) & ~par
        t0 = np.where(enter, np.maximum(t0, r), t0)
        t1 = np.where(leave, np.minimum(t1, r), t1)
    keep &= t0 < t1
    return t0, t1, keep


def _line_points(u0, v0, u1, v1):
    """Digital line points (DDA along the major axis, rounding the minor one).

    Pixel centres sit at integer (u, v). Returns (segment index, col, row).
    """
    du, dv = u1 - u0, v1 - v0
    steep = np.abs(dv) > np.abs(du)
    a0 = np.where(steep, v0, u0)
    a1 = np.where(steep, v1, u1)
    b0 = np.where(steep, u0, v0)
    b1 = np.where(steep, u1, v1)
    lo = np.minimum(a0, a1)
    hi = np.maximum(a0, a1)
    first = np.ceil(lo)
    npts = np.maximum(np.floor(hi) - first + 1, 0).astype(np.int64)
    # a segment shorter than one pixel step still deposits its mass once
    short = npts == 0
    first = np.where(short, np.round((lo + hi) / 2), first)
    npts = np.where(short, 1, npts)
    seg = np.repeat(np.arange(len(u0)), npts)
    offs = np.arange(npts.sum()) - np.repeat(np.cumsum(npts) - npts, npts)
    a = first[seg] + offs
    span = a1 - a0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(span[seg] != 0, (a - a0[seg]) / span[seg], 0.5)
    b = np.round(b0[seg] + t * (b1 - b0)[seg])
    col = np.where(steep[seg], b, a).astype(np.int64)
    row = np.where(steep[seg], a, b).astype(np.int64)
    return seg, col, row, npts


def rasterize_fiber_field(fibers: FiberSystem, cfg: SynthConfig) -> np.ndarray:
    """Raw local weight w(x): line mass density convolved with the disk kernel.

    Each segment deposits its length (clipped to the padded grid) evenly
    over its digital line pixels, so mass is conserved exactly; values are
    mass per unit area (1/um for unit linear density).
    """
    d = cfg.pixel_size_um
    kernel = disk_kernel(cfg.radius_um / d)
    nx, ny = cfg.grid
    pad = kernel.shape[0] // 2 + 1
    W, H = nx + 2 * pad, ny + 2 * pad
    acc = np.zeros(W * H)
    if len(fibers):
        ex, ey = fibers.ends()
        # pixel coordinates of the padded grid, centres at integers
        u0 = fibers.x / d - 0.5 + pad
        v0 = fibers.y / d - 0.5 + pad
        u1 = ex / d - 0.5 + pad
        v1 = ey / d - 0.5 + pad
        t0, t1, keep = _clip(u0, v0, u1, v1, -0.5, -0.5, W - 0.5, H - 0.5)
        idx = np.nonzero(keep)[0]
        su, sv = u1 - u0, v1 - v0
        cu0 = (u0 + t0 * su)[idx]
        cv0 = (v0 + t0 * sv)[idx]
        cu1 = (u0 + t1 * su)[idx]
        cv1 = (v0 + t1 * sv)[idx]
        mass = (fibers.length * (t1 - t0))[idx]
        est = np.maximum(np.abs(cu1 - cu0), np.abs(cv1 - cv0)) + 2
        bounds = np.searchsorted(np.cumsum(est), np.arange(1, int(est.sum() // _CHUNK_POINTS) + 2) * _CHUNK_POINTS)
        start = 0
        for stop in list(bounds) + [len(idx)]:
            stop = min(int(stop), len(idx))
            if stop <= start:
                continue
            sl = slice(start, stop)
            seg, col, row, npts = _line_points(cu0[sl], cv0[sl], cu1[sl], cv1[sl])
            ok = (col >= 0) & (col < W) & (row >= 0) & (row < H)
            wts = (mass[sl] / npts)[seg]
            acc += np.bincount((row * W + col)[ok], weights=wts[ok], minlength=W * H)
            start = stop
    density = acc.reshape(H, W) / (d * d)
    smooth = signal.fftconvolve(density, kernel, mode="same")
    return smooth[pad : pad + ny, pad : pad + nx]


def synth_nonwoven(cfg: SynthConfig) -> GrammageField:
    """Normalized synthetic grammage field f = (w - mean) / std."""
    raw = rasterize_fiber_field(sample_fiber_system(cfg), cfg)
    # FFT convolution leaves round-off noise where the field should be exactly 0
    raw = np.where(np.abs(raw) < 1e-12 * max(np.abs(raw).max(), 1e-300), 0.0, raw)
    try:
        f = GrammageField.from_raw(raw, cfg.pixel_size_um)
    except ZeroVariance:
        raise DegenerateField(
            f"synthetic field is constant (no segment hit the window; seed {cfg.seed})"
        ) from None
    return GrammageField(
        f.values, f.pixel_size,
        {"rng": RNG_ALGORITHM, "seed": cfg.seed, "lambda_per_mm": cfg.lambda_per_mm,
         "radius_um": cfg.radius_um, "na_per_mm2": cfg.na_per_mm2},
    )
