import math

import numpy as np
import pytest
from scipy import stats

from cloudindex.errors import DegenerateField, InvalidParams, KernelTooSmall
from cloudindex.index import FrequencyBand, directional_cloudiness
from cloudindex.spectral import power_spectrum_2d
from cloudindex.synth import (
    FiberSystem,
    Segment,
    SynthConfig,
    disk_kernel,
    rasterize_fiber_field,
    sample_fiber_system,
    synth_nonwoven,
)


def test_config_validation():
    with pytest.raises(InvalidParams):
        SynthConfig((64, 64), 2.0, 100, 1.0, 1.0)  # pixel larger than R
    with pytest.raises(InvalidParams):
        SynthConfig((64, 64), 1.0, 0.0, 1.0, 3.0)
    cfg = SynthConfig((100, 50), 2.0, 100, 2.0, 3.0)
    assert cfg.window == (200.0, 100.0)
    assert cfg.margin_um == pytest.approx(math.log(1000) * 500 + 3)


def test_sampling_is_deterministic():
    cfg = SynthConfig((128, 128), 1.0, 100, 2.0, 3.0, seed=42)
    a, b = sample_fiber_system(cfg), sample_fiber_system(cfg)
    for name in ("x", "y", "angle", "length"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert list(a)[:3] == list(b)[:3]


def test_segment_count_and_length_statistics():
    cfg0 = SynthConfig((256, 256), 1.0, 50, 5.0, 3.0)
    w, h = cfg0.window
    m = cfg0.margin_um
    expected = 50 * (w + 2 * m) * (h + 2 * m) * 1e-6
    counts, lengths, angles = [], [], []
    for seed in range(100):
        fs = sample_fiber_system(SynthConfig((256, 256), 1.0, 50, 5.0, 3.0, seed))
        counts.append(len(fs))
        lengths.append(fs.length)
        angles.append(fs.angle)
    counts = np.array(counts)
    assert abs(counts.mean() - expected) < 3 * math.sqrt(expected / 100)
    lengths = np.concatenate(lengths)
    assert abs(lengths.mean() - 200.0) < 3 * 200.0 / math.sqrt(lengths.size)
    angles = np.concatenate(angles)
    assert angles.min() >= 0 and angles.max() < np.pi
    # uniform directions
    assert stats.kstest(angles / np.pi, "uniform").pvalue > 1e-3


def test_disk_kernel():
    k = disk_kernel(3.0)
    assert k.sum() == pytest.approx(1.0, abs=1e-15)
    assert k.shape == (7, 7) and np.count_nonzero(k) == 29
    with pytest.raises(KernelTooSmall):
        disk_kernel(0.9)


def test_empty_system_rasterizes_to_zero():
    cfg = SynthConfig((32, 32), 1.0, 100, 2.0, 3.0)
    empty = FiberSystem(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0))
    assert not rasterize_fiber_field(empty, cfg).any()


@pytest.mark.parametrize("angle", [0.0, 0.3, math.pi / 4, 1.2, math.pi / 2, 2.9])
def test_single_segment_mass(angle):
    cfg = SynthConfig((128, 128), 0.5, 100, 2.0, 2.0)
    L = 37.3
    seg = Segment((32.0 - 0.5 * L * math.cos(angle), 32.0 - 0.5 * L * math.sin(angle)), angle, L)
    w = rasterize_fiber_field(FiberSystem.from_segments([seg]), cfg)
    mass = w.sum() * cfg.pixel_size_um**2
    assert mass == pytest.approx(L, abs=0.5 * cfg.pixel_size_um)


def test_segment_clipped_at_window_keeps_inside_mass():
    cfg = SynthConfig((64, 64), 1.0, 100, 2.0, 3.0)
    # horizontal line from far outside to the middle of the window
    seg = Segment((-500.0, 32.3), 0.0, 532.0)
    w = rasterize_fiber_field(FiberSystem.from_segments([seg]), cfg)
    assert w.sum() == pytest.approx(32.0, abs=4.0)


def test_midpoint_response_of_long_line():
    R = 20.0
    cfg = SynthConfig((256, 256), 1.0, 100, 2.0, R)
    seg = Segment((-1000.0, 128.5), 0.0, 3000.0)
    w = rasterize_fiber_field(FiberSystem.from_segments([seg]), cfg)
    # chord 2R over disk area pi R^2
    assert w[128, 128] == pytest.approx(2 / (math.pi * R), rel=0.03)


def test_segment_lengths_must_be_positive():
    with pytest.raises(InvalidParams):
        FiberSystem.from_segments([Segment((0, 0), 0, 0.0)])


def test_degenerate_field():
    with pytest.raises(DegenerateField):
        synth_nonwoven(SynthConfig((16, 16), 1.0, 1e-9, 1000.0, 3.0, seed=0))


def test_output_is_normalized_and_recorded():
    f = synth_nonwoven(SynthConfig((256, 256), 1.0, 200, 5.0, 3.0, seed=7))
    assert abs(f.values.mean()) < 1e-9 and abs(f.values.std() - 1) < 1e-9
    assert f.meta["seed"] == 7 and "PCG64" in f.meta["rng"]


@pytest.mark.slow
def test_high_density_field_is_close_to_gaussian():
    f = synth_nonwoven(SynthConfig((1024, 1024), 2.0, 200_000, 10.0, 10.0, seed=0))
    v = f.values.ravel()
    assert abs(stats.skew(v)) < 0.1
    assert abs(stats.kurtosis(v)) < 0.2


@pytest.mark.slow
def test_isotropy_of_sector_cli():
    band = FrequencyBand(0.05, 0.5)
    sectors = [(-math.pi / 4, math.pi / 4), (math.pi / 4, 3 * math.pi / 4)]
    diffs = []
    for seed in range(10):
        f = synth_nonwoven(SynthConfig((512, 512), 1.0, 2000, 10.0, 3.0, seed))
        a, b = directional_cloudiness(power_spectrum_2d(f), sectors, band)
        diffs.append((a - b) / (a + b))
    diffs = np.array(diffs)
    # no preferred direction: mean relative imbalance within 3 standard errors of 0
    assert abs(diffs.mean()) < 3 * diffs.std(ddof=1) / math.sqrt(len(diffs)) + 1e-3
    assert np.all(np.abs(diffs) < 0.1)
