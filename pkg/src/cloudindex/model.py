"""Parametric spectrum models, Hankel transform, band integrals and fitting.

Lengths are micrometres and frequencies 1/um internally. Model parameters
carry lambda in 1/mm because that is how fitted values are reported.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import integrate, optimize, special

from .errors import (
    GridTooCoarse,
    InsufficientBins,
    InvalidParams,
    NoConvergence,
    NonPositiveSpectrum,
    QuadratureFailure,
    UnitMismatch,
)

UM_PER_MM = 1000.0

trapezoid = getattr(np, "trapezoid", None) or np.trapz
_UNIT_SCALE = {"um": 1.0 / UM_PER_MM, "mm": 1.0}  # lambda[unit^-1] = lambda_per_mm * scale


@dataclass(frozen=True)
class BesselModelParams:
    """(lambda, nu) of the modified Bessel correlation / spectrum pair."""

    lambda_per_mm: float
    nu: float
    fit_residual: Optional[float] = None
    stderr_lambda: Optional[float] = None
    stderr_nu: Optional[float] = None
    converged: bool = True

    def __post_init__(self):
        if not (self.lambda_per_mm > 0 and math.isfinite(self.lambda_per_mm)):
            raise InvalidParams(f"lambda must be positive, got {self.lambda_per_mm}")
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise InvalidParams(f"nu must be positive, got {self.nu}")

    def lam(self, unit: str = "um") -> float:
        """lambda expressed in 1/unit."""
        try:
            return self.lambda_per_mm * _UNIT_SCALE[unit]
        except KeyError:
            raise UnitMismatch(f"unknown length unit {unit!r}; use 'um' or 'mm'") from None


@dataclass(frozen=True)
class FiberModelParams:
    """Straight fiber segments: lambda = 1/mean segment length, radius R, N_A."""

    lambda_per_mm: float
    radius_um: float
    na_per_mm2: float = 1.0

    def __post_init__(self):
        if not self.lambda_per_mm >= 0:
            raise InvalidParams(f"lambda must be >= 0, got {self.lambda_per_mm}")
        if not self.radius_um > 0:
            raise InvalidParams(f"R must be positive, got {self.radius_um}")
        if not self.na_per_mm2 > 0:
            raise InvalidParams(f"N_A must be positive, got {self.na_per_mm2}")


# ---------------------------------------------------------------------------
# modified Bessel pair


def bessel_correlation(r, p: BesselModelParams, unit: str = "um"):
    """k1(r) = (lambda r)^nu K_nu(lambda r) / (2^(nu-1) Gamma(nu)), k1(0) = 1."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise InvalidParams("r must be >= 0")
    z = p.lam(unit) * r
    with np.errstate(invalid="ignore", over="ignore"):
        # log form avoids overflow of z^nu * K_nu(z) for large nu
        out = np.exp(
            p.nu * np.log(np.where(z > 0, z, 1.0))
            + np.log(special.kve(p.nu, np.where(z > 0, z, 1.0)))
            - z
            - (p.nu - 1) * math.log(2.0)
            - special.gammaln(p.nu)
        )
    out = np.where(z > 0, out, 1.0)
    out = np.where(np.isfinite(out), out, 0.0)
    return out if out.ndim else float(out)


def bessel_spectrum(rho, p: BesselModelParams, unit: str = "um"):
    """k1(rho) = 2 nu lambda^(2 nu) / (lambda^2 + rho^2)^(nu + 1).

    ``rho`` is in 1/unit and the result in unit^2.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise InvalidParams("rho must be >= 0")
    lam = p.lam(unit)
    nu = p.nu
    # written as 2 nu / lam^2 * (1 + (rho/lam)^2)^-(nu+1) for range safety
    out = 2 * nu / lam**2 * np.exp(-(nu + 1) * np.log1p((rho / lam) ** 2))
    return out if out.ndim else float(out)


def model_band_integral(p: BesselModelParams, rho0: float, rho1: float, unit: str = "um") -> float:
    """Closed-form band power int_{rho0}^{rho1} rho k1(rho) drho.

    = lambda^(2nu) [(lambda^2+rho0^2)^-nu - (lambda^2+rho1^2)^-nu]; rho1 may be inf.
    """
    if not 0 <= rho0 <= rho1:
        raise InvalidParams(f"need 0 <= rho0 <= rho1, got [{rho0}, {rho1}]")
    lam = p.lam(unit)
    a = math.exp(-p.nu * math.log1p((rho0 / lam) ** 2))
    b = 0.0 if math.isinf(rho1) else math.exp(-p.nu * math.log1p((rho1 / lam) ** 2))
    return a - b


def range_of_interaction(p: BesselModelParams) -> float:
    """RI = 2 pi k1(0) = 4 pi nu / lambda^2, in mm^2."""
    if not (p.lambda_per_mm > 0 and p.nu > 0):
        raise InvalidParams("lambda and nu must be positive")
    return 4 * math.pi * p.nu / p.lambda_per_mm**2


# ---------------------------------------------------------------------------
# Hankel transform


def hankel_transform(r, values, rho=None, samples_per_period: int = 8):
    """Order-zero Hankel transform by the trapezoid rule on the given grid.

    Computes ``F(rho) = int_0^inf f(r) r J0(r rho) dr`` for samples ``values``
    on the strictly increasing grid ``r``. The transform is its own inverse,
    so the same call maps spectra back to correlations. ``rho`` defaults to
    the input grid. The grid must resolve the kernel: every spacing
    ``dr <= 2 pi / (samples_per_period * max(rho))``. Contributions beyond
    the last grid point are dropped, so ``values`` must have decayed there.

    Returns ``(rho, F)``.
    """
    r = np.asarray(r, dtype=float)
    f = np.asarray(values, dtype=float)
    if r.ndim != 1 or r.shape != f.shape or r.size < 2:
        raise ValueError("r and values must be 1D arrays of equal length >= 2")
    dr = np.diff(r)
    if np.any(dr <= 0) or r[0] < 0:
        raise ValueError("grid must be nonnegative and strictly increasing")
    rho = r.copy() if rho is None else np.atleast_1d(np.asarray(rho, dtype=float))
    rmax = float(np.max(rho))
    if rmax > 0 and dr.max() > 2 * np.pi / (samples_per_period * rmax):
        raise GridTooCoarse(
            f"grid spacing {dr.max():.4g} cannot resolve J0(r rho) at rho={rmax:.4g}; "
            f"need <= {2 * np.pi / (samples_per_period * rmax):.4g}"
        )
    # trapezoid weights for a nonuniform grid
    w = np.zeros_like(r)
    w[:-1] += dr / 2
    w[1:] += dr / 2
    g = f * r * w
    out = np.empty(rho.shape)
    # chunk the kernel matrix to bound memory
    step = max(1, int(4_000_000 // r.size))
    for i in range(0, rho.size, step):
        out[i : i + step] = special.j0(np.outer(rho[i : i + step], r)) @ g
    return rho, out


def hankel_grid(scale: float, rho_max: float, decay: float = 40.0, step: float = 0.002,
                n_log: int = 2000, samples_per_period: int = 16) -> np.ndarray:
    """Sample grid for functions varying on the length ``1/scale``.

    Geometric spacing from 1e-10/scale up to the uniform step, which is the
    smaller of ``step/scale`` and 2 pi / (samples_per_period * rho_max);
    uniform beyond that up to ``decay/scale``. The geometric part resolves
    non-analytic behaviour at the origin such as (scale r)^(2 nu) terms.
    The trapezoid error is dominated by the endpoint term h^2 g'(0) / 12,
    with g(r) = r f(r) J0(r rho), i.e. about h^2 f(0) / 12 in absolute value.
    """
    h = min(2 * np.pi / (samples_per_period * rho_max), step / scale)
    head = np.geomspace(1e-10 / scale, h, n_log)[:-1]
    body = np.arange(h, decay / scale, h)
    return np.concatenate([[0.0], head, body])


# ---------------------------------------------------------------------------
# fiber process model


def _psi_integrand(u, a):
    return special.j1(u) ** 2 / (u * np.sqrt(a * a + u * u))


@functools.lru_cache(maxsize=256)
def _psi_integral(a: float, n_zeros: int = 0, tol: float = 1e-10) -> float:
    """I(a) = int_0^inf J1(u)^2 / (u sqrt(a^2 + u^2)) du.

    Gauss-Legendre on each interval between consecutive zeros of J1 (where
    the integrand is smooth), adaptive quadrature on the first interval where
    the scale a matters, and the averaged asymptotic tail 1/(2 pi U^2)
    beyond the last zero U (J1^2 ~ 1/(pi u) on average), integrated exactly.
    """
    # the tail bound is relative to I(a) ~ 1/(2a), so large a needs a longer body
    n_zeros = n_zeros or max(4000, int(40 * a))
    zeros = special.jn_zeros(1, n_zeros)
    head, e_head = integrate.quad(
        _psi_integrand, 0.0, zeros[0], args=(a,), epsabs=0, epsrel=1e-13, limit=400,
        points=[a] if a < zeros[0] else None,
    )
    lo, hi = zeros[:-1], zeros[1:]
    mid, half = (hi + lo) / 2, (hi - lo) / 2

    def gl(n):
        x, w = np.polynomial.legendre.leggauss(n)
        u = mid[:, None] + half[:, None] * x[None, :]
        return float(((_psi_integrand(u, a) * w).sum(axis=1) * half).sum())

    body = gl(32)
    e_body = abs(body - gl(24))
    U = zeros[-1]
    # int_U^inf du / (pi u^2 sqrt(a^2 + u^2)), written to avoid cancellation
    x = (a / U) ** 2
    tail = 1.0 / (np.pi * U * U * (math.sqrt(1.0 + x) + 1.0))
    # J1^2 - 1/(pi u) oscillates as -sin(2u)/(pi u); its integral beyond U is
    # bounded by 1/(2 pi U^2 sqrt(a^2 + U^2)), the next non-oscillating term is O(U^-4)
    e_tail = 1.0 / (2 * np.pi * U * U * math.sqrt(a * a + U * U)) + 1.0 / U**4
    total = head + body + tail
    if e_head + e_body + e_tail > tol * total:
        raise QuadratureFailure(
            f"psi quadrature error {e_head + e_body + e_tail:.3g} exceeds tolerance"
        )
    return total


def compute_psi(lambda_per_mm: float, radius_um: float) -> float:
    """Normalization factor making the fiber-model spectrum carry unit power.

    Depends on lambda and R only through a = lambda R:
    psi = a / int_0^inf J1(u)^2 / (u sqrt(a^2 + u^2)) du, so that
    int_0^inf rho k1m(rho) drho = 1. In the filament limit a -> 0,
    psi ~ 3 pi a / 4.
    """
    if not (lambda_per_mm > 0 and radius_um > 0):
        raise InvalidParams("lambda and R must be positive")
    a = lambda_per_mm / UM_PER_MM * radius_um
    return float(a / _psi_integral(a))


def _psi_over_lambda(p: FiberModelParams) -> float:
    """psi / lambda in um; finite as lambda -> 0."""
    R = p.radius_um
    if p.lambda_per_mm == 0:
        return 3 * np.pi * R / 4
    a = p.lambda_per_mm / UM_PER_MM * R
    return R / _psi_integral(a)


def fiber_model_spectrum(rho, p: FiberModelParams, unit: str = "um"):
    """k1m(rho) = psi / (lambda sqrt(lambda^2 + rho^2)) * J1(R rho)^2 / (R rho)^2.

    ``rho`` in 1/unit, result in unit^2. lambda = 0 gives the filament limit.
    """
    scale = {"um": 1.0, "mm": UM_PER_MM}.get(unit)
    if scale is None:
        raise UnitMismatch(f"unknown length unit {unit!r}")
    rho_um = np.asarray(rho, dtype=float) / scale
    if np.any(rho_um < 0):
        raise InvalidParams("rho must be >= 0")
    lam = p.lambda_per_mm / UM_PER_MM
    R = p.radius_um
    x = R * rho_um
    with np.errstate(invalid="ignore", divide="ignore"):
        j1x = np.where(x > 0, special.j1(x) / np.where(x > 0, x, 1.0), 0.5)
    if lam == 0 and np.any(rho_um == 0):
        raise InvalidParams("filament limit (lambda = 0) is singular at rho = 0")
    out = _psi_over_lambda(p) / np.sqrt(lam**2 + rho_um**2) * j1x**2 / scale**2
    return out if np.ndim(out) else float(out)


def pair_correlation_lines(r, lambda_per_mm: float, na_per_mm2: float):
    """pcf(r) = 1 + lambda / (pi N_A r) exp(-lambda r) of the straight line system (r in mm)."""
    if not (lambda_per_mm > 0 and na_per_mm2 > 0):
        raise InvalidParams("lambda and N_A must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise InvalidParams("r must be > 0")
    out = 1.0 + lambda_per_mm / (np.pi * na_per_mm2 * r) * np.exp(-lambda_per_mm * r)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# fitting

MIN_FIT_BINS = 8


def _initial_lambda(rho, k):
    """rho where k1 first falls to half its in-band maximum."""
    half = 0.5 * k.max()
    i = int(np.argmax(k))
    below = np.nonzero(k[i:] <= half)[0]
    if below.size == 0:
        return float(rho[-1])
    return float(rho[i + below[0]])


def fit_bessel_model(rs, rho0: float, rho1: float, nu0: float = 0.25,
                     max_iter: int = 200, xtol: float = 1e-10) -> BesselModelParams:
    """Least-squares fit of the modified Bessel spectrum to a radial spectrum.

    Minimizes sum_i [ln k1(rho_i) - ln model(rho_i)]^2 over the bins with
    centres in [rho0, rho1] (1/um), by Levenberg-Marquardt in (ln lambda,
    ln nu). ``fit_residual`` is the RMS log-residual.
    """
    rho = np.asarray(rs.bin_centers, dtype=float)
    k = np.asarray(rs.values, dtype=float)
    sel = (rho >= rho0) & (rho <= rho1)
    rho, k = rho[sel], k[sel]
    if rho.size < MIN_FIT_BINS:
        raise InsufficientBins(f"{rho.size} bins in [{rho0}, {rho1}]; need >= {MIN_FIT_BINS}")
    if np.any(k <= 0):
        raise NonPositiveSpectrum("spectrum must be positive on every fitted bin")
    lnk = np.log(k)
    r2 = rho**2

    def resid(x):
        lam2 = math.exp(2 * x[0])
        nu = math.exp(x[1])
        return lnk - (math.log(2 * nu) + nu * math.log(lam2) - (nu + 1) * np.log(lam2 + r2))

    def jac(x):
        lam2 = math.exp(2 * x[0])
        nu = math.exp(x[1])
        d_lnlam = 2 * nu - (nu + 1) * 2 * lam2 / (lam2 + r2)
        d_lnnu = 1 + nu * math.log(lam2) - nu * np.log(lam2 + r2)
        return -np.column_stack([d_lnlam, d_lnnu])

    x0 = np.array([math.log(_initial_lambda(rho, k)), math.log(nu0)])
    sol = optimize.least_squares(
        resid, x0, jac=jac, method="lm", xtol=xtol, ftol=1e-15, gtol=1e-15,
        max_nfev=max_iter * 3,
    )
    lam_um, nu = math.exp(sol.x[0]), math.exp(sol.x[1])
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    p = BesselModelParams(lam_um * UM_PER_MM, nu, fit_residual=rms, converged=sol.status > 0)
    if sol.status <= 0:
        raise NoConvergence(f"Levenberg-Marquardt stopped: {sol.message}", best=p)
    return p


def combine_fits(pooled: BesselModelParams, per_image) -> BesselModelParams:
    """Attach standard deviations of the mean of per-image estimates."""
    per_image = list(per_image)
    m = len(per_image)
    if m < 2:
        return pooled
    lam = np.array([q.lambda_per_mm for q in per_image])
    nu = np.array([q.nu for q in per_image])
    return replace(
        pooled,
        stderr_lambda=float(lam.std(ddof=1) / math.sqrt(m)),
        stderr_nu=float(nu.std(ddof=1) / math.sqrt(m)),
    )
