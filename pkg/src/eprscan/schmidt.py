"""Schmidt-number estimate from near- and far-field single-photon intensities.

The reduced single-photon state's mixedness is read off from how much the
near-field and far-field intensity distributions together exceed a
minimum-uncertainty beam:

    K ~ 1/(2 pi)**2 * [sum I_NF]**2 / sum I_NF**2 * [sum I_FF]**2 / sum I_FF**2

with the sums taken as midpoint Riemann integrals over physical coordinates
(mm in the near field, mm^-1 in the far field).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .optics import LensConfig, Mode, detector_to_physical
from .scansim import ScanDataset

BORDER_POINTS = 12


@dataclass(frozen=True, eq=False)
class IntensityGrid:
    """Non-negative intensities on a uniform grid, ``values[ix, iy]``.

    ``raw``/``exposures`` are kept when the grid came from averaged counts so that
    a Poisson bootstrap can resample the underlying counts.
    """

    values: np.ndarray
    x: np.ndarray
    y: np.ndarray
    mode: Mode
    raw: np.ndarray | None = None
    exposures: int = 1
    floor: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        x, y = np.asarray(self.x, dtype=float), np.asarray(self.y, dtype=float)
        if values.shape != (x.size, y.size):
            raise InputError(f"values shape {values.shape} does not match axes ({x.size}, {y.size})")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise InputError("intensities must be finite and >= 0")
        if not np.any(values > 0):
            raise InputError("intensity grid is all zero")
        for name, axis in (("x", x), ("y", y)):
            if axis.size < 2:
                raise InputError(f"{name} axis needs at least two points")
            d = np.diff(axis)
            if np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-9, atol=0):
                raise InputError(f"{name} axis is not uniformly spaced")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "mode", Mode.parse(self.mode))

    @property
    def cell(self):
        return (self.x[1] - self.x[0]) * (self.y[1] - self.y[0])

    def scaled(self, factor):
        raw = None if self.raw is None else self.raw * factor
        return IntensityGrid(self.values * factor, self.x, self.y, self.mode, raw, self.exposures, self.floor * factor)


def participation_area(grid: IntensityGrid):
    """``[integral I]**2 / integral I**2`` in physical units squared."""
    v = grid.values
    return float(v.sum() ** 2 / np.sum(v * v) * grid.cell)


def schmidt_number(nf: IntensityGrid, ff: IntensityGrid):
    if nf.mode is not Mode.NEAR_FIELD or ff.mode is not Mode.FAR_FIELD:
        raise InputError("estimate needs a near-field and a far-field grid, in that order")
    return participation_area(nf) * participation_area(ff) / (2.0 * math.pi) ** 2


def border_floor(values, n_lowest=BORDER_POINTS):
    """Median of the ``n_lowest`` smallest values on the grid border."""
    v = np.asarray(values, dtype=float)
    border = np.concatenate([v[0, :], v[-1, :], v[1:-1, 0], v[1:-1, -1]])
    return float(np.median(np.sort(border)[:n_lowest]))


def _corrected(raw):
    floor = border_floor(raw)
    return np.clip(raw - floor, 0.0, None), floor


def singles_to_intensity(ds: ScanDataset, arm, cfg: LensConfig | None = None, subtract_floor=True):
    """Averaged singles of one arm as an intensity grid in physical coordinates.

    The singles are averaged over all positions of the other stage.  With
    ``subtract_floor`` the border-median floor (dark counts, uniform background)
    is removed and negatives are clamped to zero.
    """
    if ds.s1 is None or ds.s2 is None:
        raise InputError("dataset has no singles")
    cfg = cfg or ds.lens or LensConfig(mode=ds.mode)
    if cfg.mode is not ds.mode:
        raise InputError(f"dataset is {ds.mode.name} but lens configuration is {cfg.mode.name}")
    raw = ds.averaged_singles(arm)
    if subtract_floor:
        values, floor = _corrected(raw)
    else:
        values, floor = raw, 0.0
    x = detector_to_physical(ds.axis(arm, 0) * 1e-3, cfg)
    y = detector_to_physical(ds.axis(arm, 1) * 1e-3, cfg)
    n = ds.grid.n_steps
    return IntensityGrid(values, x, y, ds.mode, raw=raw, exposures=n * n, floor=floor)


@dataclass(frozen=True)
class SchmidtEstimate:
    K: float
    error: float
    K_uncorrected: float | None = None
    error_uncorrected: float | None = None

    def to_dict(self):
        return {
            "K": self.K,
            "error": self.error,
            "K_uncorrected": self.K_uncorrected,
            "error_uncorrected": self.error_uncorrected,
        }


def _resample(grid, rng, correct):
    counts = rng.poisson(grid.raw * grid.exposures) / grid.exposures
    if correct:
        counts, _ = _corrected(counts)
    if not np.any(counts > 0):
        return None
    return IntensityGrid(counts, grid.x, grid.y, grid.mode)


def _uncorrected(grid):
    return IntensityGrid(grid.raw, grid.x, grid.y, grid.mode, raw=grid.raw, exposures=grid.exposures)


def estimate_schmidt(nf: IntensityGrid, ff: IntensityGrid, n_boot=200, seed=0):
    """Schmidt number with a Poisson-bootstrap error.

    The bootstrap needs the raw averaged counts (present on grids built by
    :func:`singles_to_intensity`); for other grids the error is reported as 0.
    When raw counts are present the estimate without floor subtraction is
    reported as well.
    """
    k = schmidt_number(nf, ff)
    has_raw = nf.raw is not None and ff.raw is not None
    if not has_raw:
        return SchmidtEstimate(k, 0.0)
    k_raw = schmidt_number(_uncorrected(nf), _uncorrected(ff))
    rng = np.random.default_rng(seed)
    boot, boot_raw = [], []
    for _ in range(n_boot):
        a, b = _resample(nf, rng, True), _resample(ff, rng, True)
        if a is not None and b is not None:
            boot.append(schmidt_number(a, b))
        boot_raw.append(schmidt_number(_resample(nf, rng, False), _resample(ff, rng, False)))
    err = float(np.std(boot, ddof=1)) if len(boot) > 1 else math.nan
    err_raw = float(np.std(boot_raw, ddof=1)) if n_boot > 1 else math.nan
    return SchmidtEstimate(k, err, k_raw, err_raw)


def model_intensity_grids(p, n=401, nf_extent=None, ff_extent=None):
    """Dense noiseless single-photon intensities of the model (for validation).

    Extents are half-widths in mm and mm^-1; defaults cover 8 marginal standard
    deviations.
    """
    from . import model

    nf_sd = math.sqrt(model.marginal_position_variance(p))
    ff_sd = math.sqrt(model.marginal_momentum_variance(p)) + p.q_ring
    nf_extent = nf_extent or 8.0 * nf_sd
    ff_extent = ff_extent or 8.0 * ff_sd
    x = np.linspace(-nf_extent, nf_extent, n)
    q = np.linspace(-ff_extent, ff_extent, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    QX, QY = np.meshgrid(q, q, indexing="ij")
    nf = model.position_marginal(np.stack([X, Y], axis=-1), p)
    ff = model.momentum_marginal(np.stack([QX, QY], axis=-1), p)
    return IntensityGrid(nf, x, x, Mode.NEAR_FIELD), IntensityGrid(ff, q, q, Mode.FAR_FIELD)
