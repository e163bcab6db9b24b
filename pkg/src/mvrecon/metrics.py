"""PSNR and SSIM, written out from first principles.

Both metrics accept :class:`~mvrecon.core.Frame` or bare arrays in the
[-1, 1] pixel convention and convert to [0, 1] internally, so MAX = 1.
SSIM uses the original parameters: 11x11 Gaussian window (sigma 1.5),
C1 = 0.01^2, C2 = 0.03^2, computed per channel and averaged.
"""

from __future__ import annotations

from typing import Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import Frame, to_unit
from .errors import DimensionMismatch, FrameTooSmall

PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

ArrayLike = Union[Frame, np.ndarray]


def _unit_pixels(a: ArrayLike) -> np.ndarray:
    pixels = a.pixels if isinstance(a, Frame) else np.asarray(a)
    unit = to_unit(pixels)
    if unit.ndim == 2:
        unit = unit[:, :, np.newaxis]
    return unit


def _paired(a: ArrayLike, b: ArrayLike, op: str) -> tuple[np.ndarray, np.ndarray]:
    x, y = _unit_pixels(a), _unit_pixels(b)
    if x.shape != y.shape:
        raise DimensionMismatch(f"metrics.{op}: shapes {x.shape} vs {y.shape}")
    return x, y


def psnr(a: ArrayLike, b: ArrayLike, cap: float = PSNR_CAP_DB) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs return ``cap``.

    The cap keeps averages and argmaxes well-defined where MSE = 0.
    """
    x, y = _paired(a, b, "psnr")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return cap
    return float(min(cap, 10.0 * np.log10(1.0 / mse)))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    window = np.outer(g, g)
    return window / window.sum()


def ssim(
    a: ArrayLike,
    b: ArrayLike,
    window_size: int = SSIM_WINDOW,
    sigma: float = SSIM_SIGMA,
) -> float:
    """Mean structural similarity over sliding Gaussian windows, in [-1, 1]."""
    x, y = _paired(a, b, "ssim")
    h, w = x.shape[:2]
    if min(h, w) < window_size:
        raise FrameTooSmall(
            f"metrics.ssim: frame {h}x{w} smaller than {window_size}x{window_size} window"
        )
    window = _gaussian_window(window_size, sigma)
    axes = ([-2, -1], [0, 1])

    channel_means = []
    for c in range(x.shape[2]):
        xc, yc = x[:, :, c], y[:, :, c]
        wx = sliding_window_view(xc, (window_size, window_size))
        wy = sliding_window_view(yc, (window_size, window_size))
        mu_x = np.tensordot(wx, window, axes=axes)
        mu_y = np.tensordot(wy, window, axes=axes)
        e_xx = np.tensordot(wx * wx, window, axes=axes)
        e_yy = np.tensordot(wy * wy, window, axes=axes)
        e_xy = np.tensordot(wx * wy, window, axes=axes)
        var_x = e_xx - mu_x ** 2
        var_y = e_yy - mu_y ** 2
        cov_xy = e_xy - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov_xy + SSIM_C2)
        den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
        channel_means.append(np.mean(num / den))
    # clip away <=1-ulp excursions from the moment arithmetic
    return float(np.clip(np.mean(channel_means), -1.0, 1.0))
