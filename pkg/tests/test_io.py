import numpy as np
import pytest
from PIL import Image

from cloudindex.errors import IoError, UnsupportedImage
from cloudindex.io import (
    load_image,
    read_pgm,
    read_radial_csv,
    read_raster,
    write_pgm,
    write_radial_csv,
    write_raster,
)
from cloudindex.spectral import RadialSpectrum


@pytest.mark.parametrize("maxval,dtype", [(255, np.uint8), (65535, np.uint16)])
def test_pgm_roundtrip(tmp_path, maxval, dtype):
    rng = np.random.default_rng(0)
    v = rng.integers(1, maxval, size=(7, 11)).astype(dtype)
    p = tmp_path / "a.pgm"
    write_pgm(p, v, maxval=maxval)
    back, mv = read_pgm(p)
    assert mv == maxval and back.dtype == dtype
    assert np.array_equal(back, v)


def test_plain_pgm_with_comments(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P2\n# a comment\n3 2\n# another\n15\n1 2 3\n4 5 15\n")
    img = load_image(p, 6.734)
    assert img.values.tolist() == [[1, 2, 3], [4, 5, 15]]
    assert img.pixel_size == 6.734
    # maxval is the white point of the file, so 15 counts as saturated
    assert img.max_value == 15 and img.saturated == 1


def test_png_8_and_16_bit(tmp_path):
    a8 = np.arange(12, dtype=np.uint8).reshape(3, 4) + 1
    Image.fromarray(a8, mode="L").save(tmp_path / "a.png")
    img = load_image(tmp_path / "a.png", 1.0)
    assert np.array_equal(img.values, a8) and img.max_value == 255
    a16 = (np.arange(12, dtype=np.uint16).reshape(3, 4) + 1) * 5000
    Image.fromarray(a16).save(tmp_path / "b.png")
    img = load_image(tmp_path / "b.png", 1.0)
    assert np.array_equal(img.values, a16) and img.max_value == 65535


def test_rgb_png_rejected(tmp_path):
    Image.new("RGB", (4, 4)).save(tmp_path / "c.png")
    with pytest.raises(UnsupportedImage):
        load_image(tmp_path / "c.png", 1.0)


def test_unknown_format_and_missing_file(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"hello world")
    with pytest.raises(UnsupportedImage):
        load_image(tmp_path / "x.bin", 1.0)
    with pytest.raises(IoError, match="nope.pgm"):
        load_image(tmp_path / "nope.pgm", 1.0)


def test_raster_roundtrip(tmp_path):
    v = np.random.default_rng(1).standard_normal((5, 9))
    p = tmp_path / "r.f32"
    write_raster(p, v, freq_step=0.25, layout="test")
    back, meta = read_raster(p)
    np.testing.assert_allclose(back, v.astype(np.float32))
    assert meta["width"] == "9" and meta["height"] == "5" and meta["layout"] == "test"


def test_radial_csv_roundtrip(tmp_path):
    rs = RadialSpectrum(np.array([0.1, 0.2, 0.3]), np.array([1.5, 0.25, 1e-7]), np.array([4, 8, 12]))
    p = tmp_path / "s.csv"
    write_radial_csv(p, rs)
    assert p.read_text().splitlines()[0] == "rho_per_um,k1_um2,count"
    back = read_radial_csv(p)
    assert np.array_equal(back.bin_centers, rs.bin_centers)
    assert np.array_equal(back.values, rs.values)
    assert np.array_equal(back.counts, rs.counts)
