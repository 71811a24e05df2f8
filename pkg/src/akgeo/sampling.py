"""Seeded band-limited random fields for tests and verification runs.

Test fields keep only modes with |m_a| <= N_a/3 along every axis so that
spectral differentiation and moderate pointwise products stay alias-free.
This is a harness convention, not a library restriction.
"""

from __future__ import annotations

import numpy as np

from . import _tables as T
from .grid import FormField, GridSpec, ScalarField
from .spectral import _irfftn, _rfftn


def _band_mask(grid: GridSpec, band_fraction: float):
    masks = []
    for a in range(4):
        n = grid.resolutions[a]
        if a < 3:
            m = np.abs(np.fft.fftfreq(n) * n)
        else:
            m = np.fft.rfftfreq(n) * n
        shape = [1, 1, 1, 1]
        shape[a] = len(m)
        masks.append((m <= band_fraction * (n / 2)).reshape(shape))
    return masks[0] & masks[1] & masks[2] & masks[3]


def _band_limit(grid: GridSpec, values: np.ndarray, band_fraction: float) -> np.ndarray:
    hat = _rfftn(values)
    hat *= _band_mask(grid, band_fraction)
    return _irfftn(hat, grid.shape)


def random_scalar(
    grid: GridSpec,
    rng,
    band_fraction: float = 2.0 / 3.0,
    zero_mean: bool = True,
) -> ScalarField:
    """Band-limited random function with unit sup-norm."""
    rng = np.random.default_rng(rng)
    vals = _band_limit(grid, rng.standard_normal(grid.shape), band_fraction)
    if zero_mean:
        vals = vals - vals.mean()
    sup = np.max(np.abs(vals))
    if sup > 0:
        vals = vals / sup
    return ScalarField(grid, vals, zero_mean=zero_mean)


def random_form(
    grid: GridSpec,
    degree: int,
    rng,
    band_fraction: float = 2.0 / 3.0,
) -> FormField:
    """Band-limited random p-form with unit sup-norm."""
    rng = np.random.default_rng(rng)
    comps = rng.standard_normal((T.NCOMP[degree],) + grid.shape)
    comps = _band_limit(grid, comps, band_fraction)
    sup = np.max(np.abs(comps))
    if sup > 0:
        comps = comps / sup
    return FormField(grid, degree, comps)
