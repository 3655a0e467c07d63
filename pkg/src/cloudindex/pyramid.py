"""Difference-of-Gaussians (Laplacian pyramid) levels and their mean square power.

Level j uses the transfer function

    h_j(rho) = (exp(-s_{j-1}^2 rho^2) - exp(-s_j^2 rho^2)) / (2 pi),  s_j = 2^((j-1)/2) um

and MSP_j = int_0^inf rho k1(rho) h_j(rho)^2 drho, which is the mean square of
the field filtered with h_j in the frequency domain under the estimator
normalization of :mod:`cloudindex.spectral`. Values are dimensionless;
reports give them in permille.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BandOutOfRange, SigmaUnresolvable, SupportNotCovered
from .grammage import GrammageField
from .index import FrequencyBand
from .model import trapezoid
from .spectral import RadialSpectrum

RHO_MAX_FACTOR = math.sqrt(2 * math.log(2))  # 1.1774...


@dataclass(frozen=True)
class DogLevel:
    j: int

    @property
    def sigma_j(self) -> float:
        return 2.0 ** ((self.j - 1) / 2)

    @property
    def sigma_prev(self) -> float:
        return 2.0 ** ((self.j - 2) / 2)

    @property
    def rho_max(self) -> float:
        """Frequency (1/um) of the transfer function maximum."""
        return RHO_MAX_FACTOR / self.sigma_j


def dog_transfer(rho, level: DogLevel):
    rho2 = np.square(np.asarray(rho, dtype=float))
    out = (np.exp(-level.sigma_prev**2 * rho2) - np.exp(-level.sigma_j**2 * rho2)) / (2 * np.pi)
    return out if out.ndim else float(out)


def dog_norm(level: DogLevel) -> float:
    """||h_j|| = 1 / sqrt(24 pi sigma_j^2) in 1/um."""
    return 1.0 / math.sqrt(24 * math.pi * level.sigma_j**2)


def dog_overlap(level: DogLevel) -> float:
    """Normalized inner product of consecutive transfer functions j and j+1."""
    # int rho e^{-a rho^2} e^{-b rho^2} drho = 1 / (2 (a + b)); sums of such terms
    s = [level.sigma_prev**2, level.sigma_j**2, 2 * level.sigma_j**2]

    def inner(p, q):
        pairs = [(p[0], q[0], 1), (p[0], q[1], -1), (p[1], q[0], -1), (p[1], q[1], 1)]
        return sum(sign / (2 * (a + b)) for a, b, sign in pairs)

    hj = (s[0], s[1])
    hk = (s[1], s[2])
    return inner(hj, hk) / math.sqrt(inner(hj, hj) * inner(hk, hk))


def _filtered(f: GrammageField, transfer) -> np.ndarray:
    ny, nx = f.shape
    d = f.pixel_size
    xi1 = np.fft.fftfreq(nx, d) * 2 * np.pi
    xi2 = np.fft.fftfreq(ny, d) * 2 * np.pi
    rho = np.hypot(*np.meshgrid(xi1, xi2))
    return np.fft.ifft2(np.fft.fft2(f.values) * transfer(rho)).real


def msp_spatial(f: GrammageField, level: DogLevel) -> float:
    """Mean square of the DoG-filtered field (filter applied in the frequency domain)."""
    if level.sigma_j < 2 * f.pixel_size:
        raise SigmaUnresolvable(
            f"sigma_j = {level.sigma_j:.4g} um is below 2 pixels ({2 * f.pixel_size:.4g} um)"
        )
    g = _filtered(f, lambda rho: dog_transfer(rho, level))
    return float(np.mean(g * g))


def msp_spectral(rs: RadialSpectrum, level: DogLevel, support_tol: float = 1e-6,
                 quadrature: str = "auto") -> float:
    """MSP_j = int rho k1(rho) h_j(rho)^2 drho from a radial spectrum.

    ``quadrature="trapezoid"`` integrates over the bin centres, with the
    origin as an extra node (the integrand vanishes there).
    ``quadrature="lattice"`` replaces rho drho by the frequency-lattice
    measure of each annulus, count * cell_area / (2 pi), and evaluates h_j
    at the mean radius of the bin; this is the radial form of the discrete
    Plancherel sum and stays accurate when h_j lives in the first few bins.
    ``"auto"`` picks ``lattice`` whenever the spectrum carries lattice
    metadata. The bins must reach past the point where h_j^2 has decayed to
    ``support_tol`` of its peak.
    """
    rho = np.asarray(rs.bin_centers, dtype=float)
    h2 = np.square(dog_transfer(rho, level))
    peak = dog_transfer(level.rho_max, level) ** 2
    if h2[-1] > support_tol * peak or rho[-1] < level.rho_max:
        raise SupportNotCovered(
            f"radial spectrum ends at {rho[-1]:.4g} 1/um, short of the support of level {level.j}"
        )
    if quadrature == "auto":
        quadrature = "lattice" if rs.cell_area is not None and rs.rho_mean is not None else "trapezoid"
    if quadrature == "lattice":
        w = np.asarray(rs.counts) * rs.cell_area / (2 * np.pi)
        return float(np.sum(w * rs.values * np.square(dog_transfer(rs.rho_mean, level))))
    if quadrature != "trapezoid":
        raise ValueError(f"unknown quadrature {quadrature!r}")
    x = np.concatenate([[0.0], rho])
    y = np.concatenate([[0.0], rho * rs.values * h2])
    return float(trapezoid(y, x))


def bessel_bandpass_power(f: GrammageField, band: FrequencyBand) -> float:
    """Mean square of the field after an ideal annular band-pass rho0 <= |xi| <= rho1.

    Equals the band power (fraction of unit total) of the estimator.
    """
    ny, nx = f.shape
    d = f.pixel_size
    fund = 2 * np.pi / (max(nx, ny) * d)
    rmax = np.pi / d * math.sqrt(2)
    if band.rho0 < fund * (1 - 1e-12) or band.rho1 > rmax * (1 + 1e-12):
        raise BandOutOfRange(
            f"band [{band.rho0}, {band.rho1}] 1/um outside [{fund:.4g}, {rmax:.4g}]"
        )
    g = _filtered(f, lambda rho: ((rho >= band.rho0) & (rho <= band.rho1)).astype(float))
    return float(np.mean(g * g))


def telescoped_power(spectrum, levels) -> float:
    """int rho k1(rho) sum_j 2 pi h_j(rho) drho for a callable radial spectrum.

    The DoG transfer functions telescope, so this tends to the total power
    (1 for a normalized spectrum) as the levels cover all scales.
    """
    from scipy import integrate

    levels = sorted(levels, key=lambda lv: lv.j)
    s_lo, s_hi = levels[0].sigma_prev, levels[-1].sigma_j

    def integrand(rho):
        return rho * spectrum(rho) * (np.exp(-(s_lo * rho) ** 2) - np.exp(-(s_hi * rho) ** 2))

    pts = [1 / s_hi, 1 / s_lo]
    a, _ = integrate.quad(integrand, 0, pts[1], points=[pts[0]], limit=500)
    b, _ = integrate.quad(integrand, pts[1], np.inf, limit=500)
    return a + b
