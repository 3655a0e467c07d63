"""Cloudiness index, directional cloudiness and range of interaction."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BandOutOfRange, InsufficientBins, InvalidParams, NumericalError
from .model import BesselModelParams, range_of_interaction, trapezoid
from .spectral import PowerSpectrum2D, RadialSpectrum, radial_average, sector_average, sector_share

#: default band in 1/um (wavelengths 62.8 um .. 314.2 um)
DEFAULT_BAND = (0.02, 0.10)

# numerical noise allowed beyond [0, 1] before it counts as an error
_CLAMP_SLACK = 1e-3


@dataclass(frozen=True)
class FrequencyBand:
    rho0: float  # 1/um
    rho1: float  # 1/um

    def __post_init__(self):
        if not (0 < self.rho0 <= self.rho1):
            raise InvalidParams(f"band needs 0 < rho0 <= rho1, got [{self.rho0}, {self.rho1}]")

    @property
    def wavelengths_um(self) -> tuple[float, float]:
        """(2 pi / rho1, 2 pi / rho0)."""
        return (2 * math.pi / self.rho1, 2 * math.pi / self.rho0)

    @classmethod
    def parse(cls, text: str) -> "FrequencyBand":
        lo, hi = text.split(":")
        return cls(float(lo), float(hi))


def band_integral(rho, values, rho0: float, rho1: float) -> float:
    """Trapezoid of rho * k1(rho) over [rho0, rho1] on the sampled nodes.

    The integrand is interpolated linearly at the band edges.
    """
    rho = np.asarray(rho, dtype=float)
    g = rho * np.asarray(values, dtype=float)
    if rho1 == rho0:
        return 0.0
    inner = (rho > rho0) & (rho < rho1)
    x = np.concatenate([[rho0], rho[inner], [rho1]])
    y = np.concatenate([[np.interp(rho0, rho, g)], g[inner], [np.interp(rho1, rho, g)]])
    return float(trapezoid(y, x))


def _check_band(rs: RadialSpectrum, band: FrequencyBand) -> None:
    lo, hi = float(rs.bin_centers[0]), float(rs.bin_centers[-1])
    if band.rho0 < lo or band.rho1 > hi:
        raise BandOutOfRange(
            f"band [{band.rho0}, {band.rho1}] 1/um outside the estimable range "
            f"[{lo:.4g}, {hi:.4g}] 1/um"
        )
    if len(rs) < 2:
        raise InsufficientBins("fewer than two radial bins intersect the band")


def _clamp(frac: float) -> float:
    if frac < -_CLAMP_SLACK or frac > 1 + _CLAMP_SLACK:
        raise NumericalError(f"band power {frac:.6g} outside [0, 1]")
    return min(max(frac, 0.0), 1.0)


def cloudiness_index(rs: RadialSpectrum, band: FrequencyBand) -> float:
    """CLI in percent: band power int rho k1(rho) drho over [rho0, rho1]."""
    _check_band(rs, band)
    return 100.0 * _clamp(band_integral(rs.bin_centers, rs.values, band.rho0, band.rho1))


def directional_cloudiness(ps: PowerSpectrum2D, sectors, band: FrequencyBand,
                           partition: bool = True) -> list[float]:
    """Sector cloudiness indices in percent.

    With ``partition=True`` each sector's power per annulus is its share of
    the rotation average (sector sum over the count of the full annulus), so
    the values of a partition of (-pi, pi] sum to the full CLI. With
    ``partition=False`` each sector uses its own rotation mean, i.e. the CLI
    the field would have if it were isotropic with that sector's profile.
    """
    full = radial_average(ps)
    _check_band(full, band)
    out = []
    if partition:
        for rs in sector_share(ps, sectors):
            frac = band_integral(rs.bin_centers, rs.values, band.rho0, band.rho1)
            out.append(100.0 * _clamp(frac))
    else:
        for lo, hi in sectors:
            rs = sector_average(ps, lo, hi)
            _check_band(rs, band)
            out.append(100.0 * _clamp(band_integral(rs.bin_centers, rs.values, band.rho0, band.rho1)))
    return out


@dataclass
class CloudinessReport:
    cli_percent: float
    band: FrequencyBand
    sector_cli: list = field(default_factory=list)  # (phi_lo, phi_hi, percent)
    ri_mm2: Optional[float] = None
    model: Optional[BesselModelParams] = None
    msp: list = field(default_factory=list)  # (j, value_permille)
    inputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.cli_percent <= 100:
            raise InvalidParams(f"cli_percent {self.cli_percent} outside [0, 100]")
        if self.ri_mm2 is not None and self.ri_mm2 < 0:
            raise InvalidParams("ri_mm2 must be >= 0")

    @classmethod
    def build(cls, cli_percent, band, sector_cli=(), model=None, msp=(), inputs=None):
        ri = range_of_interaction(model) if model is not None else None
        return cls(cli_percent, band, list(sector_cli), ri, model, list(msp), dict(inputs or {}))

    def to_dict(self) -> dict:
        wl_lo, wl_hi = self.band.wavelengths_um
        d = {
            "cli_percent": self.cli_percent,
            "band_rho0_per_um": self.band.rho0,
            "band_rho1_per_um": self.band.rho1,
            "band_wavelength_min_um": wl_lo,
            "band_wavelength_max_um": wl_hi,
            "sectors": [
                {"phi_lo": lo, "phi_hi": hi, "cli_percent": v} for lo, hi, v in self.sector_cli
            ],
            "ri_mm2": self.ri_mm2,
            "model": None,
            "msp": [{"j": int(j), "value_permille": v} for j, v in self.msp],
            "inputs": self.inputs,
        }
        if self.model is not None:
            m = self.model
            d["model"] = {
                "lambda_per_mm": m.lambda_per_mm,
                "nu": m.nu,
                "fit_residual": m.fit_residual,
                "stderr_lambda_per_mm": m.stderr_lambda,
                "stderr_nu": m.stderr_nu,
                "converged": m.converged,
            }
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "CloudinessReport":
        model = None
        if d.get("model"):
            m = d["model"]
            model = BesselModelParams(
                m["lambda_per_mm"], m["nu"], m.get("fit_residual"),
                m.get("stderr_lambda_per_mm"), m.get("stderr_nu"), m.get("converged", True),
            )
        return cls(
            d["cli_percent"],
            FrequencyBand(d["band_rho0_per_um"], d["band_rho1_per_um"]),
            [(s["phi_lo"], s["phi_hi"], s["cli_percent"]) for s in d.get("sectors", [])],
            d.get("ri_mm2"),
            model,
            [(s["j"], s["value_permille"]) for s in d.get("msp", [])],
            d.get("inputs", {}),
        )
