"""FFT power spectrum estimation and rotation/sector averages.

Conventions
-----------
The forward DFT is unnormalized. For a field of Nx x Ny pixels of size D
(micrometres) the estimate at the lattice frequency
``xi_k = (2 pi k1 / (Nx D), 2 pi k2 / (Ny D))`` is::

    k(xi_k) = D**2 / (2 pi Nx Ny) * |DFT(f)[k]|**2        [um^2]

so that ``(1/2pi) * sum_k k(xi_k) * dxi1 * dxi2`` equals the field variance,
i.e. exactly 1 for a normalized field before the DC bin is zeroed. No
taper is applied; the periodic extension implied by the FFT is accepted.

Arrays are kept in numpy FFT order: the zero frequency sits at index
``[0, 0]``; rows run over xi2, columns over xi1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptySector, OverlappingSectors
from .grammage import GrammageField


@dataclass(frozen=True)
class PowerSpectrum2D:
    values: np.ndarray  # [row = xi2, col = xi1], FFT order
    freq_step: tuple[float, float]  # (dxi1, dxi2) in 1/um
    dc_zeroed: bool = True

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def frequencies(self) -> tuple[np.ndarray, np.ndarray]:
        """Circular frequency grids (xi1, xi2) in 1/um, same layout as values."""
        h, w = self.values.shape
        xi1 = np.fft.fftfreq(w) * w * self.freq_step[0]
        xi2 = np.fft.fftfreq(h) * h * self.freq_step[1]
        return np.meshgrid(xi1, xi2)

    def radius(self) -> np.ndarray:
        xi1, xi2 = self.frequencies()
        return np.hypot(xi1, xi2)

    def angle(self) -> np.ndarray:
        """Polar angle phi = atan2(xi2, xi1) in (-pi, pi]."""
        xi1, xi2 = self.frequencies()
        return np.arctan2(xi2, xi1)

    def shifted(self) -> np.ndarray:
        """Values with the zero frequency moved to the array centre (for display)."""
        return np.fft.fftshift(self.values)

    def conservation_sum(self) -> float:
        """(1/2pi) * sum k(xi) dxi1 dxi2, the discrete total power."""
        d1, d2 = self.freq_step
        return float(self.values.sum() * d1 * d2 / (2 * np.pi))


@dataclass(frozen=True)
class RadialSpectrum:
    """Rotation (or sector) average k1(rho) on annular bins.

    ``bin_centers`` in 1/um, ``values`` in um^2. When the spectrum comes from
    a frequency lattice, ``rho_mean`` holds the mean radius of the points in
    each bin and ``cell_area`` the lattice cell dxi1 * dxi2.
    """

    bin_centers: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    sector: Optional[tuple[float, float]] = None
    bin_width: Optional[float] = None
    rho_mean: Optional[np.ndarray] = None
    cell_area: Optional[float] = None

    def __post_init__(self):
        for name in ("bin_centers", "values", "counts"):
            object.__setattr__(self, name, np.asarray(getattr(self, name)))
        n = len(self.bin_centers)
        if len(self.values) != n or len(self.counts) != n:
            raise ValueError("bin_centers, values and counts must have equal length")
        if n > 1 and np.any(np.diff(self.bin_centers) <= 0):
            raise ValueError("bin_centers must be strictly increasing")

    def __len__(self):
        return len(self.bin_centers)


def power_spectrum_2d(f: GrammageField, zero_dc: bool = True) -> PowerSpectrum2D:
    """Estimate k(xi) ~ 2 pi E|f_W(xi)|^2 / A by one FFT of the field."""
    f.check()
    return _spectrum(f.values, f.pixel_size, zero_dc)


def _spectrum(values: np.ndarray, pixel_size: float, zero_dc: bool = True) -> PowerSpectrum2D:
    ny, nx = values.shape
    F = np.fft.fft2(values)
    k = (pixel_size**2 / (2 * np.pi * nx * ny)) * (F.real**2 + F.imag**2)
    if zero_dc:
        k[0, 0] = 0.0
    step = (2 * np.pi / (nx * pixel_size), 2 * np.pi / (ny * pixel_size))
    return PowerSpectrum2D(k, step, zero_dc)


def _bin_index(ps: PowerSpectrum2D):
    """Annulus index of every lattice point and the bin width."""
    drho = min(ps.freq_step)
    idx = np.floor(ps.radius() / drho).astype(np.int64)
    return idx, drho


def _dc_mask(ps: PowerSpectrum2D) -> np.ndarray:
    m = np.ones(ps.values.shape, dtype=bool)
    m[0, 0] = False
    return m


def sector_mask(ps: PowerSpectrum2D, phi_lo: float, phi_hi: float) -> np.ndarray:
    """Lattice points whose angle phi, or antipodal angle phi -/+ pi, is in (lo, hi].

    The interval is half-open so that sectors partitioning (-pi, pi] assign
    each lattice point to exactly one sector.
    """
    if not -np.pi <= phi_lo < phi_hi <= np.pi:
        raise ValueError(f"need -pi <= phi_lo < phi_hi <= pi, got ({phi_lo}, {phi_hi})")
    phi = ps.angle()
    anti = np.where(phi > 0, phi - np.pi, phi + np.pi)
    inside = lambda a: (a > phi_lo) & (a <= phi_hi)  # noqa: E731
    m = inside(phi) | inside(anti)
    if phi_lo == -np.pi:
        # (-pi, pi] would otherwise never see the angle -pi that atan2 cannot return
        m |= phi == -np.pi
    return m & _dc_mask(ps)


def _average(ps: PowerSpectrum2D, mask: np.ndarray, sector=None) -> RadialSpectrum:
    idx, drho = _bin_index(ps)
    sel = idx[mask]
    nb = int(idx.max()) + 1
    counts = np.bincount(sel, minlength=nb)
    sums = np.bincount(sel, weights=ps.values[mask], minlength=nb)
    rsum = np.bincount(sel, weights=ps.radius()[mask], minlength=nb)
    keep = counts > 0
    i = np.nonzero(keep)[0]
    return RadialSpectrum(
        bin_centers=(i + 0.5) * drho,
        values=sums[keep] / counts[keep],
        counts=counts[keep],
        sector=sector,
        bin_width=drho,
        rho_mean=rsum[keep] / counts[keep],
        cell_area=ps.freq_step[0] * ps.freq_step[1],
    )


def radial_average(ps: PowerSpectrum2D) -> RadialSpectrum:
    """Rotation average k1(rho): arithmetic mean of k over each annulus.

    Bins have width min(dxi1, dxi2) and centres (i + 1/2) * width; the DC
    point is excluded and empty bins are dropped.
    """
    return _average(ps, _dc_mask(ps))


def sector_average(ps: PowerSpectrum2D, phi_lo: float, phi_hi: float) -> RadialSpectrum:
    """Like :func:`radial_average` restricted to the angular sector (phi_lo, phi_hi]."""
    m = sector_mask(ps, phi_lo, phi_hi)
    if not m.any():
        raise EmptySector(f"no lattice point in sector ({phi_lo:.4g}, {phi_hi:.4g}]")
    return _average(ps, m, sector=(phi_lo, phi_hi))


def sector_share(ps: PowerSpectrum2D, sectors) -> list[RadialSpectrum]:
    """Per-sector power on the full annulus grid, weighted by lattice share.

    For every annulus of the rotation average, sector ``s`` gets
    ``sum_{points in s} k / count_all``, so the values of a partition of
    (-pi, pi] add up to the rotation average bin by bin. All returned
    spectra share the bins of :func:`radial_average`; ``counts`` holds the
    number of sector points per bin (possibly 0).
    """
    idx, drho = _bin_index(ps)
    dc = _dc_mask(ps)
    nb = int(idx.max()) + 1
    total = np.bincount(idx[dc], minlength=nb)
    keep = total > 0
    centers = (np.nonzero(keep)[0] + 0.5) * drho
    seen = np.zeros(ps.values.shape, dtype=bool)
    out = []
    for lo, hi in sectors:
        m = sector_mask(ps, lo, hi)
        if not m.any():
            raise EmptySector(f"no lattice point in sector ({lo:.4g}, {hi:.4g}]")
        if (seen & m).any():
            raise OverlappingSectors(f"sector ({lo:.4g}, {hi:.4g}] overlaps an earlier one")
        seen |= m
        cnt = np.bincount(idx[m], minlength=nb)
        s = np.bincount(idx[m], weights=ps.values[m], minlength=nb)
        out.append(
            RadialSpectrum(centers, s[keep] / total[keep], cnt[keep], sector=(lo, hi), bin_width=drho)
        )
    return out


def block_mean(f: GrammageField, factor: int = 2) -> GrammageField:
    """Coarsen a field by block averaging, then re-normalize."""
    h, w = f.shape
    h2, w2 = h // factor, w // factor
    v = f.values[: h2 * factor, : w2 * factor]
    v = v.reshape(h2, factor, w2, factor).mean(axis=(1, 3))
    return GrammageField.from_raw(v, f.pixel_size * factor)


def band_fraction(rs: RadialSpectrum, rho: float) -> float:
    """Discrete fraction of the radial power (sum of rho k1 drho) below ``rho``."""
    w = rs.bin_centers * rs.values
    return float(w[rs.bin_centers < rho].sum() / w.sum())
