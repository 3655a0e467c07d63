"""``cloudindex`` command line: analyze, spectrum, fit, synth, pyramid.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import CloudIndexError, DataError, DimensionMismatch, NoConvergence
from .grammage import normalize_grammage, pixelwise_mean
from .index import DEFAULT_BAND, CloudinessReport, FrequencyBand, cloudiness_index, directional_cloudiness
from .io import load_image, read_radial_csv, write_pgm, write_radial_csv, write_raster
from .model import combine_fits, fit_bessel_model, model_band_integral, range_of_interaction
from .pyramid import DogLevel, dog_norm, msp_spatial
from .spectral import power_spectrum_2d, radial_average
from .synth import RNG_ALGORITHM, SynthConfig, synth_nonwoven

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("cloudindex")

EXIT_USAGE = 2


@dataclass
class AnalysisConfig:
    image_paths: list
    pixel_size_um: float
    band: FrequencyBand = field(default_factory=lambda: FrequencyBand(*DEFAULT_BAND))
    sectors: Optional[list] = None
    fit: bool = False
    pyramid_levels: Optional[list] = None
    output_path: Optional[str] = None
    sector_partition: bool = True
    workers: int = 4

    def __post_init__(self):
        if not self.pixel_size_um > 0:
            raise DataError(f"pixel_size_um must be positive, got {self.pixel_size_um}")
        if not self.image_paths:
            raise DataError("no input images given")


class _Stage:
    """Prefix errors raised inside a pipeline stage with the stage name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, tp, exc, tb):
        if exc is not None and isinstance(exc, CloudIndexError) and not getattr(exc, "_staged", False):
            exc.args = (f"[{self.name}] {exc}",) + exc.args[1:]
            exc._staged = True
        return False


def run_analysis(cfg: AnalysisConfig) -> CloudinessReport:
    """load -> normalize -> pixelwise mean -> spectrum -> CLI (+ sectors, fit, RI, MSP)."""
    paths = [str(p) for p in cfg.image_paths]
    with _Stage("load"):
        with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as ex:
            images = list(ex.map(lambda p: load_image(p, cfg.pixel_size_um), paths))
        first = images[0]
        for img in images[1:]:
            if img.values.shape != first.values.shape:
                raise DimensionMismatch(
                    f"{first.source} is {first.width}x{first.height} but "
                    f"{img.source} is {img.width}x{img.height}"
                )
    with _Stage("normalize"):
        with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as ex:
            fields = list(ex.map(normalize_grammage, images))
        pooled = pixelwise_mean(fields)
    with _Stage("spectrum"):
        ps = power_spectrum_2d(pooled)
        rs = radial_average(ps)
    with _Stage("cli"):
        cli = cloudiness_index(rs, cfg.band)
        sector_cli = []
        if cfg.sectors:
            vals = directional_cloudiness(ps, cfg.sectors, cfg.band, partition=cfg.sector_partition)
            sector_cli = [(lo, hi, v) for (lo, hi), v in zip(cfg.sectors, vals)]
    model = None
    if cfg.fit:
        with _Stage("fit"):
            model = fit_bessel_model(rs, cfg.band.rho0, cfg.band.rho1)
            if len(fields) > 1:
                per = [fit_bessel_model(radial_average(power_spectrum_2d(f)), cfg.band.rho0, cfg.band.rho1)
                       for f in fields]
                model = combine_fits(model, per)
    msp = []
    if cfg.pyramid_levels:
        with _Stage("pyramid"):
            msp = [(j, 1000.0 * msp_spatial(pooled, DogLevel(j))) for j in cfg.pyramid_levels]
    inputs = {
        "files": paths,
        "pixel_size_um": cfg.pixel_size_um,
        "m": len(paths),
        "width_px": first.width,
        "height_px": first.height,
        "saturated_px": [img.saturated for img in images],
        "sector_normalization": "partition" if cfg.sector_partition else "sector_mean",
        "version": __version__,
    }
    report = CloudinessReport.build(cli, cfg.band, sector_cli, model, msp, inputs)
    if cfg.output_path:
        out = Path(cfg.output_path)
        out.write_text(report.to_json())
        write_radial_csv(out.with_suffix(".radial.csv"), rs)
    return report


# ---------------------------------------------------------------------------
# argument handling


def _sector(text):
    lo, hi = text.split(":")
    return (float(lo), float(hi))


def _sector_list(text):
    try:
        return [_sector(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid sector list {text!r}; expected LO:HI[,LO:HI...]")


_NEG_VALUE = re.compile(r"^-\d*\.?\d+(e-?\d+)?:")


def _join_negative_values(argv):
    """Turn ``--sectors -0.78:0.78`` into ``--sectors=-0.78:0.78`` so argparse keeps the value."""
    out = []
    for tok in argv:
        if out and out[-1] in ("--sectors", "--band") and _NEG_VALUE.match(tok):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def _band(text):
    try:
        return FrequencyBand.parse(text)
    except (ValueError, DataError) as e:
        raise argparse.ArgumentTypeError(f"invalid band {text!r}: {e}")


def _levels(text):
    out = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            a, b = part.split("-", 1) if not part.startswith("-") else (part, part)
            out += list(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _load_config(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _analysis_config(args) -> AnalysisConfig:
    conf = _load_config(args.config) if args.config else {}
    images = args.images or conf.get("images", [])
    pixel = args.pixel_size_um if args.pixel_size_um is not None else conf.get("pixel_size_um")
    if pixel is None:
        raise DataError("pixel size is required (--pixel-size-um or pixel_size_um in config)")
    band = args.band or (FrequencyBand.parse(conf["band"]) if "band" in conf else FrequencyBand(*DEFAULT_BAND))
    sectors = args.sectors or [_sector(s) for s in conf.get("sectors", [])] or None
    levels = args.pyramid_levels or conf.get("pyramid_levels")
    return AnalysisConfig(
        image_paths=images,
        pixel_size_um=float(pixel),
        band=band,
        sectors=sectors,
        fit=args.fit or bool(conf.get("fit", False)),
        pyramid_levels=levels,
        output_path=args.output or conf.get("output"),
        sector_partition=not (args.sector_mean or conf.get("sector_mean", False)),
    )


def cmd_analyze(args) -> int:
    cfg = _analysis_config(args)
    report = run_analysis(cfg)
    if not cfg.output_path:
        sys.stdout.write(report.to_json())
    else:
        log.info("CLI = %.2f %% -> %s", report.cli_percent, cfg.output_path)
    return 0


def cmd_spectrum(args) -> int:
    fields = [normalize_grammage(load_image(p, args.pixel_size_um)) for p in args.images]
    ps = power_spectrum_2d(pixelwise_mean(fields))
    rs = radial_average(ps)
    out = args.output or "/dev/stdout"
    write_radial_csv(out, rs)
    if args.raster:
        write_raster(
            args.raster, ps.shifted(), freq_step1_per_um=ps.freq_step[0],
            freq_step2_per_um=ps.freq_step[1], layout="zero frequency at [height//2, width//2]",
        )
    return 0


def cmd_fit(args) -> int:
    rs = read_radial_csv(args.spectrum)
    band = args.band or FrequencyBand(*DEFAULT_BAND)
    try:
        p = fit_bessel_model(rs, band.rho0, band.rho1)
    except NoConvergence as e:
        if e.best is None:
            raise
        log.warning("%s; reporting best iterate", e)
        p = e.best
    out = {
        "lambda_per_mm": p.lambda_per_mm,
        "nu": p.nu,
        "fit_residual": p.fit_residual,
        "converged": p.converged,
        "ri_mm2": range_of_interaction(p),
        "model_cli_percent": 100 * model_band_integral(p, band.rho0, band.rho1),
        "band_rho0_per_um": band.rho0,
        "band_rho1_per_um": band.rho1,
    }
    text = json.dumps(out, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        grid=(args.size, args.size), pixel_size_um=args.pixel_size_um, na_per_mm2=args.na,
        lambda_per_mm=args.lambda_per_mm, radius_um=args.radius_um, seed=args.seed,
    )
    f = synth_nonwoven(cfg)
    out = Path(args.output)
    v = f.values
    if args.transmission:
        # gray values of a transmission image whose ln is affine in f
        g = np.rint(args.gray_mean * np.exp(-args.contrast * v))
        if g.min() < 1 or g.max() > 65535:
            raise DataError("transmission encoding leaves the 16-bit range; lower --contrast")
        write_pgm(out, g.astype(np.uint16), maxval=65535)
        enc = {"encoding": "transmission", "gray_mean": args.gray_mean, "contrast": args.contrast}
    else:
        lo, hi = float(v.min()), float(v.max())
        scale = (hi - lo) / 65535.0
        write_pgm(out, np.rint((v - lo) / scale).astype(np.uint16), maxval=65535)
        enc = {"encoding": "affine", "offset": lo, "scale": scale}
    meta = dict(enc, pixel_size_um=cfg.pixel_size_um, na_per_mm2=cfg.na_per_mm2,
                lambda_per_mm=cfg.lambda_per_mm, radius_um=cfg.radius_um, seed=cfg.seed,
                rng=RNG_ALGORITHM)
    Path(f"{out}.txt").write_text("".join(f"{k} = {val}\n" for k, val in meta.items()))
    write_raster(out.with_suffix(".f32"), v, pixel_size_um=cfg.pixel_size_um, seed=cfg.seed, rng=RNG_ALGORITHM)
    return 0


def cmd_pyramid(args) -> int:
    pooled = None
    if args.images:
        if args.pixel_size_um is None:
            raise DataError("--pixel-size-um is required with images")
        pooled = pixelwise_mean([normalize_grammage(load_image(p, args.pixel_size_um)) for p in args.images])
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["j", "sigma_um", "rho_max_per_um", "norm_per_mm", "msp_permille"])
        for j in args.levels:
            lv = DogLevel(j)
            msp = "" if pooled is None else repr(1000.0 * msp_spatial(pooled, lv))
            wr.writerow([j, repr(lv.sigma_j), repr(lv.rho_max), repr(1000.0 * dog_norm(lv)), msp])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cloudindex", description="Cloudiness of nonwovens from transmission images.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="full pipeline -> JSON report + radial CSV")
    a.add_argument("images", nargs="*")
    a.add_argument("--config", help="TOML key-value file; flags override its values")
    a.add_argument("--pixel-size-um", type=float)
    a.add_argument("--band", type=_band, help="rho0:rho1 in 1/um (default 0.02:0.10)")
    a.add_argument("--sectors", type=_sector_list, action="extend", metavar="LO:HI[,LO:HI...]",
                   help="angle ranges in radians; repeat the flag or separate with commas")
    a.add_argument("--sector-mean", action="store_true",
                   help="per-sector rotation means instead of shares of the total power")
    a.add_argument("--fit", action="store_true")
    a.add_argument("--pyramid-levels", type=_levels, help="e.g. 9-12 or 9,10")
    a.add_argument("-o", "--output")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("spectrum", help="radial power spectrum as CSV")
    s.add_argument("images", nargs="+")
    s.add_argument("--pixel-size-um", type=float, required=True)
    s.add_argument("--raster", help="also write the 2D spectrum as float32 raster")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_spectrum)

    f = sub.add_parser("fit", help="fit the modified Bessel model to a radial CSV")
    f.add_argument("spectrum")
    f.add_argument("--band", type=_band)
    f.add_argument("-o", "--output")
    f.set_defaults(func=cmd_fit)

    y = sub.add_parser("synth", help="synthetic nonwoven field")
    y.add_argument("--na", type=float, required=True, help="segments per mm^2")
    y.add_argument("--lambda-per-mm", type=float, required=True)
    y.add_argument("--radius-um", type=float, required=True)
    y.add_argument("--size", type=int, default=1024)
    y.add_argument("--pixel-size-um", type=float, default=1.0)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--transmission", action="store_true",
                   help="encode as transmission gray values g = mean * exp(-contrast * f)")
    y.add_argument("--gray-mean", type=float, default=20000.0)
    y.add_argument("--contrast", type=float, default=0.2)
    y.add_argument("-o", "--output", required=True)
    y.set_defaults(func=cmd_synth)

    p = sub.add_parser("pyramid", help="DoG level table as CSV")
    p.add_argument("images", nargs="*")
    p.add_argument("--levels", type=_levels, default=list(range(9, 13)))
    p.add_argument("--pixel-size-um", type=float)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_pyramid)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(_join_negative_values(sys.argv[1:] if argv is None else list(argv)))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CloudIndexError as e:
        print(f"cloudindex: error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"cloudindex: error: cannot read/write {e.filename or ''}: {e.strerror or e}", file=sys.stderr)
        return DataError.exit_code
    except ValueError as e:
        print(f"cloudindex: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
