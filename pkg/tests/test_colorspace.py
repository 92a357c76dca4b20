import numpy as np
import pytest

from rvpose.colorspace import ciede2000, srgb_decode, srgb_encode, srgb_to_lab
from rvpose.errors import OutOfGamutInput
from rvpose.selftest_data import CIEDE2000_VECTORS, SRGB_LAB_VECTOR


def test_white_point():
    lab = srgb_to_lab(np.array([1.0, 1.0, 1.0]))
    assert abs(lab[0] - 100.0) < 0.01
    assert abs(lab[1]) < 0.01
    assert abs(lab[2]) < 0.01


def test_black():
    assert np.allclose(srgb_to_lab(np.zeros(3)), np.zeros(3), atol=1e-9)


def test_reference_vector():
    rgb, expected = SRGB_LAB_VECTOR
    lab = srgb_to_lab(np.array(rgb))
    assert np.abs(lab - np.array(expected)).max() < 0.01


def test_out_of_gamut_raises():
    with pytest.raises(OutOfGamutInput):
        srgb_to_lab(np.array([1.2, 0.0, 0.0]))
    with pytest.raises(OutOfGamutInput):
        srgb_to_lab(np.array([0.0, -0.1, 0.0]))


def test_decode_encode_roundtrip():
    rng = np.random.default_rng(0)
    c = rng.uniform(0, 1, (100, 3))
    assert np.abs(srgb_encode(srgb_decode(c)) - c).max() < 1e-12


def test_ciede2000_published_suite():
    worst = 0.0
    for l1, a1, b1, l2, a2, b2, expected in CIEDE2000_VECTORS:
        got = ciede2000(np.array([l1, a1, b1]), np.array([l2, a2, b2]))
        worst = max(worst, abs(got - expected))
    assert worst < 1e-4


def test_ciede2000_zero_on_identical():
    rng = np.random.default_rng(1)
    labs = np.column_stack([rng.uniform(0, 100, 50),
                            rng.uniform(-100, 100, (50, 2))])
    assert np.abs(ciede2000(labs, labs)).max() < 1e-12


def test_ciede2000_symmetric():
    rng = np.random.default_rng(2)
    a = np.column_stack([rng.uniform(0, 100, 200),
                         rng.uniform(-100, 100, (200, 2))])
    b = np.column_stack([rng.uniform(0, 100, 200),
                         rng.uniform(-100, 100, (200, 2))])
    assert np.abs(ciede2000(a, b) - ciede2000(b, a)).max() < 1e-12


def test_srgb_quantization_continuity():
    """One 8-bit step in any channel moves dE by less than 3."""
    rng = np.random.default_rng(3)
    rgb = rng.uniform(1 / 255, 254 / 255, (300, 3))
    base = srgb_to_lab(rgb)
    for ch in range(3):
        bumped = rgb.copy()
        bumped[:, ch] += 1.0 / 255.0
        de = ciede2000(base, srgb_to_lab(bumped))
        assert float(np.max(de)) < 3.0


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(4)
    a = np.column_stack([rng.uniform(0, 100, 20),
                         rng.uniform(-80, 80, (20, 2))])
    b = np.column_stack([rng.uniform(0, 100, 20),
                         rng.uniform(-80, 80, (20, 2))])
    vec = ciede2000(a, b)
    for i in range(20):
        assert vec[i] == pytest.approx(ciede2000(a[i], b[i]), abs=1e-12)


@pytest.mark.skipif(not pytest.importorskip("skimage", reason="no skimage"),
                    reason="scikit-image unavailable")
def test_against_independent_implementation():
    from skimage.color import deltaE_ciede2000

    rng = np.random.default_rng(5)
    a = np.column_stack([rng.uniform(0, 100, 100),
                         rng.uniform(-80, 80, (100, 2))])
    b = np.column_stack([rng.uniform(0, 100, 100),
                         rng.uniform(-80, 80, (100, 2))])
    ours = ciede2000(a, b)
    theirs = deltaE_ciede2000(a, b)
    assert np.abs(ours - theirs).max() < 1e-6
