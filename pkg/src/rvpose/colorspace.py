"""sRGB to CIELAB conversion and the CIEDE2000 color difference.

Pipeline: IEC 61966-2-1 piecewise sRGB decode -> linear RGB -> XYZ (D65,
2 degree observer) -> CIELAB with the D65 reference white.  CIEDE2000 is
the full formula with the G chroma correction, hue rotation term, and
S_L/S_C/S_H weights at k_L = k_C = k_H = 1.
"""

from __future__ import annotations

import numpy as np

from .errors import OutOfGamutInput

# Linear sRGB -> XYZ for D65 white, 2 degree observer.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])

_DELTA = 6.0 / 29.0
_POW7_25 = 25.0**7


def srgb_decode(rgb) -> np.ndarray:
    """sRGB [0, 1] to linear-light RGB (no gamut check)."""
    c = np.asarray(rgb, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def srgb_encode(linear) -> np.ndarray:
    """Linear-light RGB back to sRGB, clipped to [0, 1]."""
    c = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1.0 / 2.4) - 0.055)


def srgb_to_lab(rgb) -> np.ndarray:
    """Convert sRGB triples in [0, 1] to CIELAB; shape (..., 3) preserved."""
    c = np.asarray(rgb, dtype=np.float64)
    if c.shape[-1] != 3:
        raise ValueError("expected (..., 3) sRGB input")
    if c.size and (c.min() < 0.0 or c.max() > 1.0):
        raise OutOfGamutInput("sRGB components must lie in [0, 1]")
    xyz = srgb_decode(c) @ _RGB_TO_XYZ.T
    t = xyz / _WHITE_D65
    f = np.where(t > _DELTA**3, np.cbrt(t), t / (3.0 * _DELTA * _DELTA) + 4.0 / 29.0)
    lab = np.empty_like(c)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def ciede2000(lab1, lab2) -> np.ndarray | float:
    """CIEDE2000 difference between Lab triples; broadcasts over (..., 3)."""
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    scalar = lab1.ndim == 1 and lab2.ndim == 1
    L1, a1, b1 = lab1[..., 0], lab1[..., 1], lab1[..., 2]
    L2, a2, b2 = lab2[..., 0], lab2[..., 1], lab2[..., 2]

    c1 = np.hypot(a1, b1)
    c2 = np.hypot(a2, b2)
    c_bar = 0.5 * (c1 + c2)
    c_bar7 = c_bar**7
    g = 0.5 * (1.0 - np.sqrt(c_bar7 / (c_bar7 + _POW7_25)))
    a1p = (1.0 + g) * a1
    a2p = (1.0 + g) * a2
    c1p = np.hypot(a1p, b1)
    c2p = np.hypot(a2p, b2)

    h1p = np.degrees(np.arctan2(b1, a1p)) % 360.0
    h2p = np.degrees(np.arctan2(b2, a2p)) % 360.0
    h1p = np.where((a1p == 0.0) & (b1 == 0.0), 0.0, h1p)
    h2p = np.where((a2p == 0.0) & (b2 == 0.0), 0.0, h2p)

    dLp = L2 - L1
    dCp = c2p - c1p

    zero_chroma = (c1p * c2p) == 0.0
    dh = h2p - h1p
    dh = np.where(dh > 180.0, dh - 360.0, dh)
    dh = np.where(dh < -180.0, dh + 360.0, dh)
    dh = np.where(zero_chroma, 0.0, dh)
    dHp = 2.0 * np.sqrt(c1p * c2p) * np.sin(np.radians(0.5 * dh))

    L_bar = 0.5 * (L1 + L2)
    C_bar = 0.5 * (c1p + c2p)

    h_sum = h1p + h2p
    h_diff = np.abs(h1p - h2p)
    h_bar = np.where(
        h_diff <= 180.0,
        0.5 * h_sum,
        np.where(h_sum < 360.0, 0.5 * (h_sum + 360.0), 0.5 * (h_sum - 360.0)),
    )
    h_bar = np.where(zero_chroma, h_sum, h_bar)

    t = (
        1.0
        - 0.17 * np.cos(np.radians(h_bar - 30.0))
        + 0.24 * np.cos(np.radians(2.0 * h_bar))
        + 0.32 * np.cos(np.radians(3.0 * h_bar + 6.0))
        - 0.20 * np.cos(np.radians(4.0 * h_bar - 63.0))
    )
    d_theta = 30.0 * np.exp(-(((h_bar - 275.0) / 25.0) ** 2))
    C_bar7 = C_bar**7
    r_c = 2.0 * np.sqrt(C_bar7 / (C_bar7 + _POW7_25))
    s_l = 1.0 + 0.015 * (L_bar - 50.0) ** 2 / np.sqrt(20.0 + (L_bar - 50.0) ** 2)
    s_c = 1.0 + 0.045 * C_bar
    s_h = 1.0 + 0.015 * C_bar * t
    r_t = -np.sin(np.radians(2.0 * d_theta)) * r_c

    de = np.sqrt(
        (dLp / s_l) ** 2
        + (dCp / s_c) ** 2
        + (dHp / s_h) ** 2
        + r_t * (dCp / s_c) * (dHp / s_h)
    )
    return float(de) if scalar else de
