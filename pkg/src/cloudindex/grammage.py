"""Gray-tone transmission images and normalized local grammage fields."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    InvalidField,
    NonPositivePixel,
    UnsupportedImage,
    ZeroVariance,
)

log = logging.getLogger(__name__)

#: tolerances of the GrammageField invariants
MEAN_TOL = 1e-9
STD_TOL = 1e-9


def _frozen(a, dtype=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GrayImage:
    """A monochrome transmission image.

    ``values`` is indexed ``[row, column]`` i.e. ``[x2, x1]``; ``pixel_size``
    is in micrometres per pixel. ``max_value`` is the largest representable
    gray value of the source encoding (255, 65535) or ``None`` for real data.
    """

    values: np.ndarray
    pixel_size: float
    max_value: Optional[int] = None
    source: str = ""

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise UnsupportedImage(
                f"expected a single-channel 2D image, got shape {v.shape}"
            )
        if v.shape[0] < 2 or v.shape[1] < 2:
            raise UnsupportedImage(f"image must be at least 2x2, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise UnsupportedImage("image contains non-finite values")
        if not self.pixel_size > 0:
            raise UnsupportedImage(f"pixel size must be positive, got {self.pixel_size}")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def saturated(self) -> int:
        """Number of pixels at the maximum representable value."""
        if self.max_value is None:
            return 0
        return int(np.count_nonzero(self.values >= self.max_value))


@dataclass(frozen=True)
class GrammageField:
    """Normalized local grammage f(x): mean 0, population std 1."""

    values: np.ndarray
    pixel_size: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise InvalidField(f"field must be 2D, got shape {v.shape}")
        if not self.pixel_size > 0:
            raise InvalidField(f"pixel size must be positive, got {self.pixel_size}")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def check(self) -> None:
        """Raise InvalidField unless mean 0 / std 1 hold to tolerance."""
        v = self.values
        if not np.all(np.isfinite(v)):
            raise InvalidField("field contains non-finite values")
        mean = v.mean()
        std = v.std()
        if abs(mean) > MEAN_TOL or abs(std - 1.0) > STD_TOL:
            raise InvalidField(
                f"field is not normalized (mean={mean:.3g}, std={std:.12g})"
            )

    @classmethod
    def from_raw(cls, raw, pixel_size: float, meta=None) -> "GrammageField":
        """Normalize an arbitrary real grid to mean 0 / std 1."""
        raw = np.asarray(raw, dtype=float)
        return cls(_standardize(raw), pixel_size, dict(meta or {}))


def _standardize(a: np.ndarray) -> np.ndarray:
    mu = a.mean()
    sigma = a.std()
    if not sigma > 0:
        raise ZeroVariance("field has zero variance; normalization undefined")
    z = (a - mu) / sigma
    # one correction pass brings mean/std to round-off level on large grids
    z -= z.mean()
    z /= z.std()
    return z


def normalize_grammage(img: GrayImage) -> GrammageField:
    """Estimate f(x) = (mu - ln g(x)) / sigma from a transmission image.

    mu and sigma are the mean and population standard deviation of ln g over
    all pixels. Brighter pixels (less material) map to smaller f.
    """
    g = np.asarray(img.values, dtype=float)
    bad = np.count_nonzero(g <= 0)
    if bad:
        raise NonPositivePixel(
            f"{bad} pixel(s) with g(x) <= 0 in {img.source or 'image'}; "
            "illumination must keep every gray value positive"
        )
    if img.saturated:
        log.warning(
            "%s: %d saturated pixel(s) at %s (possible overexposure)",
            img.source or "image", img.saturated, img.max_value,
        )
    lng = np.log(g)
    mu = lng.mean()
    sigma = lng.std()
    if not sigma > 0:
        raise ZeroVariance(f"{img.source or 'image'} is constant; sigma = 0")
    f = (mu - lng) / sigma
    f -= f.mean()
    f /= f.std()
    meta = {"source": img.source, "saturated": img.saturated}
    return GrammageField(f, img.pixel_size, meta)


def pixelwise_mean(fields: Sequence[GrammageField]) -> GrammageField:
    """Per-pixel mean of several fields of view, re-normalized to mean 0 / std 1.

    A single field is returned unchanged.
    """
    fields = list(fields)
    if not fields:
        raise EmptyInput("pixelwise_mean needs at least one field")
    first = fields[0]
    for f in fields[1:]:
        if f.shape != first.shape:
            raise DimensionMismatch(
                f"field shapes differ: {first.shape} vs {f.shape}"
            )
        if f.pixel_size != first.pixel_size:
            raise DimensionMismatch(
                f"pixel sizes differ: {first.pixel_size} vs {f.pixel_size}"
            )
    if len(fields) == 1:
        return first
    # sorted summation keeps the result independent of list order
    stack = np.sort(np.stack([f.values for f in fields]), axis=0)
    mean = stack.sum(axis=0) / len(fields)
    meta = {"m": len(fields), "sources": [f.meta.get("source", "") for f in fields]}
    return GrammageField(_standardize(mean), first.pixel_size, meta)
