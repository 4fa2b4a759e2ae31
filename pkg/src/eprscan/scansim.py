"""Synthetic dual-fiber raster scans and time-tag streams.

Two single-mode fibers are stepped over a square grid in the detection plane;
at every 4D point (x1, y1, x2, y2) the singles of both detectors and their
coincidences are recorded for one dwell time.  Expected rates come from the
biphoton model mapped through the lens configuration and blurred by a Gaussian
fiber-collection kernel; realized counts are Poisson draws.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import model
from .coincidence import TagStream
from .errors import ParameterError, SimulationError, SizeError
from .model import SourceParams
from .optics import LensConfig, Mode

MAX_TAGS = 100_000_000
MAX_EXPECTATION = 1e15


@dataclass(frozen=True)
class ScanGrid:
    """Square raster per arm; ``step`` and centres in um."""

    n_steps: int = 17
    step: float = 10.0
    center1: tuple = (0.0, 0.0)
    center2: tuple = (0.0, 0.0)

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ParameterError(f"n_steps must be an integer >= 2, got {self.n_steps}")
        if not (math.isfinite(self.step) and self.step > 0):
            raise ParameterError(f"step must be > 0, got {self.step}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "center1", tuple(float(c) for c in self.center1))
        object.__setattr__(self, "center2", tuple(float(c) for c in self.center2))

    @property
    def n_points(self):
        return self.n_steps**4

    def axis(self, arm, component):
        """Stage positions (um) of ``arm`` (1 or 2) along ``component`` (0=x, 1=y)."""
        center = (self.center1, self.center2)[_arm_index(arm)]
        offsets = (np.arange(self.n_steps) - (self.n_steps - 1) / 2.0) * self.step
        return center[component] + offsets


@dataclass(frozen=True)
class NoiseModel:
    """Acquisition parameters.

    ``dwell`` in s, ``window`` in ps, dark rates in Hz, ``collection_sigma`` in um
    (Gaussian std of the fiber-collection kernel in the detection plane).  The fiber
    mode size is not known for the modelled setup; 5 um is a tunable placeholder.
    """

    dwell: float = 1.0
    window: float = 300.0
    dark1: float = 100.0
    dark2: float = 100.0
    collection_sigma: float = 5.0
    efficiency1: float = 0.0075
    efficiency2: float = 0.0125

    def __post_init__(self):
        if not self.window > 0:
            raise ParameterError(f"window must be > 0, got {self.window}")
        if not self.dwell > 0:
            raise ParameterError(f"dwell must be > 0, got {self.dwell}")
        if not self.collection_sigma > 0:
            raise ParameterError(f"collection_sigma must be > 0, got {self.collection_sigma}")
        for name in ("efficiency1", "efficiency2"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ParameterError(f"{name} must lie in (0, 1], got {value}")
        for name in ("dark1", "dark2"):
            if not getattr(self, name) >= 0:
                raise ParameterError(f"{name} must be >= 0")

    def swapped(self):
        """The same noise model with the two detection arms exchanged."""
        return replace(
            self, dark1=self.dark2, dark2=self.dark1, efficiency1=self.efficiency2, efficiency2=self.efficiency1
        )


def reference_setup(mode):
    """Source, lenses, grid and noise tuned to the reference experiment's rates.

    Near field: peak singles 150 / 250 kHz, peak coincidences 500 Hz.  Far field:
    peak singles 240 / 400 kHz, peak coincidences 3 kHz.  Both keep a 0.6
    signal/idler efficiency ratio.
    """
    mode = Mode.parse(mode)
    if mode is Mode.NEAR_FIELD:
        source = SourceParams(pair_rate=7.5e7)
        noise = NoiseModel(efficiency1=0.002, efficiency2=0.002 / 0.6)
    else:
        source = SourceParams(pair_rate=3.2e7)
        noise = NoiseModel(efficiency1=0.0075, efficiency2=0.0075 / 0.6)
    return source, LensConfig(mode=mode), ScanGrid(), noise


@dataclass(frozen=True, eq=False)
class ScanDataset:
    """Counts of a 4D raster scan, arrays indexed ``[i1, j1, i2, j2]``.

    ``i`` indexes x and ``j`` indexes y of the respective stage.
    """

    grid: ScanGrid
    mode: Mode
    s1: np.ndarray
    s2: np.ndarray
    cc: np.ndarray
    dwell: float
    source: SourceParams | None = None
    lens: LensConfig | None = None
    noise: NoiseModel | None = None
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.grid.n_steps
        shape = (n, n, n, n)
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        for name in ("s1", "s2", "cc"):
            arr = np.array(getattr(self, name), dtype=np.int64)
            if arr.shape != shape:
                raise ParameterError(f"{name} has shape {arr.shape}, expected {shape}")
            if np.any(arr < 0):
                raise ParameterError(f"{name} contains negative counts")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def axis(self, arm, component):
        return self.grid.axis(arm, component)

    def averaged_singles(self, arm):
        """Singles of ``arm`` averaged over every position of the other stage, shape (n, n)."""
        if _arm_index(arm) == 0:
            return self.s1.mean(axis=(2, 3))
        return self.s2.mean(axis=(0, 1))

    def max_coincidences(self, arm):
        """Largest coincidence count seen at each position of ``arm``, shape (n, n)."""
        if _arm_index(arm) == 0:
            return self.cc.max(axis=(2, 3))
        return self.cc.max(axis=(0, 1))

    def same_counts(self, other):
        return (
            np.array_equal(self.s1, other.s1)
            and np.array_equal(self.s2, other.s2)
            and np.array_equal(self.cc, other.cc)
        )


def _arm_index(arm):
    if arm in (1, "1"):
        return 0
    if arm in (2, "2"):
        return 1
    raise ParameterError(f"arm must be 1 or 2, got {arm!r}")


def _kernel_std(noise: NoiseModel, cfg: LensConfig):
    """Collection-kernel std in physical units (mm or mm^-1)."""
    c = noise.collection_sigma * 1e-3
    return c / cfg.m_nf if cfg.mode is Mode.NEAR_FIELD else c * cfg.momentum_scale


def _physical_axes(grid: ScanGrid, cfg: LensConfig):
    conv = 1e-3 / cfg.m_nf if cfg.mode is Mode.NEAR_FIELD else 1e-3 * cfg.momentum_scale
    return [[grid.axis(arm, comp) * conv for comp in (0, 1)] for arm in (1, 2)]


def _gaussian_shape(p: SourceParams, cfg: LensConfig, k):
    """Per-axis covariance (var, cov) of the blurred joint density."""
    if cfg.mode is Mode.NEAR_FIELD:
        sp, sm = p.sigma_plus, p.sigma_minus
    else:
        sp, sm = p.momentum_sigma_plus, p.momentum_sigma_minus
    var = 0.5 * (sp**2 + sm**2) + k * k
    cov = 0.5 * (sp**2 - sm**2)
    return var, cov


def expected_rates(p: SourceParams, cfg: LensConfig, grid: ScanGrid, noise: NoiseModel):
    """Expected singles and coincidence rates (Hz).

    Returns ``(r1, r2, rcc)`` with shapes ``(n, n)``, ``(n, n)`` and ``(n, n, n, n)``.
    Detection probabilities are normalized to 1 at perfect alignment, so peak
    singles equal ``pair_rate * efficiency`` plus dark counts and peak true
    coincidences equal ``pair_rate * efficiency1 * efficiency2``.  Accidentals
    ``r1 * r2 * window`` are added to the coincidences.
    """
    (x1, y1), (x2, y2) = _physical_axes(grid, cfg)
    k = _kernel_std(noise, cfg)
    X1, Y1, X2, Y2 = np.meshgrid(x1, y1, x2, y2, indexing="ij")
    if cfg.mode is Mode.FAR_FIELD and p.q_ring > 0:
        pair, single1, single2 = _ring_shapes(p, k, (x1, y1), (x2, y2), (X1, Y1, X2, Y2))
    else:
        var, cov = _gaussian_shape(p, cfg, k)
        det = var * var - cov * cov

        def axis_pair(a, b):
            return np.exp(-0.5 * (var * a * a - 2.0 * cov * a * b + var * b * b) / det)

        pair = axis_pair(X1, X2) * axis_pair(Y1, Y2)
        single1 = np.exp(-0.5 * (x1[:, None] ** 2 + y1[None, :] ** 2) / var)
        single2 = np.exp(-0.5 * (x2[:, None] ** 2 + y2[None, :] ** 2) / var)
    r1 = p.pair_rate * noise.efficiency1 * single1 + noise.dark1
    r2 = p.pair_rate * noise.efficiency2 * single2 + noise.dark2
    accidental = r1[:, :, None, None] * r2[None, None, :, :] * (noise.window * 1e-12)
    rcc = p.pair_rate * noise.efficiency1 * noise.efficiency2 * pair + accidental
    return r1, r2, rcc


def _ring_shapes(p, k, arm1, arm2, mesh):
    X1, Y1, X2, Y2 = mesh
    s_plus, s_minus = p.momentum_sigma_plus, p.momentum_sigma_minus
    radius = math.sqrt(2.0) * p.q_ring
    root2 = math.sqrt(2.0)
    qp2 = ((X1 + X2) ** 2 + (Y1 + Y2) ** 2) / 2.0
    qm = np.hypot(X1 - X2, Y1 - Y2) / root2
    table_r = np.linspace(0.0, max(float(qm.max()), radius) + 10.0 * (s_minus + k), 2048)
    pair_profile = model.blurred_ring_profile(table_r, radius, s_minus, k)
    pair = np.exp(-0.5 * qp2 / (s_plus**2 + k * k)) * np.interp(qm, table_r, pair_profile) / pair_profile.max()

    single_blur = math.sqrt(s_plus**2 + 2.0 * k * k)
    singles = []
    for xs, ys in (arm1, arm2):
        w = root2 * np.hypot(xs[:, None], ys[None, :])
        table_w = np.linspace(0.0, max(float(w.max()), radius) + 10.0 * (s_minus + single_blur), 2048)
        prof = model.blurred_ring_profile(table_w, radius, s_minus, single_blur)
        singles.append(np.interp(w, table_w, prof) / prof.max())
    return pair, singles[0], singles[1]


def _check_finite(name, arr):
    bad = ~np.isfinite(arr) | (arr > MAX_EXPECTATION) | (arr < 0)
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SimulationError(f"{name} expectation invalid at grid index {idx}: {arr[idx]!r}")


def simulate_scan(p: SourceParams, cfg: LensConfig, grid: ScanGrid, noise: NoiseModel, seed, workers=1,
                  noiseless=False):
    """Simulate a full raster scan and return a :class:`ScanDataset`.

    With ``noiseless`` the counts are the rounded expectations instead of Poisson
    draws.  Otherwise randomness is drawn block-wise: the block belonging to stage-1 position
    ``(i1, j1)`` uses a generator spawned from ``(seed, i1, j1)``, so the result
    does not depend on ``workers`` or on the order in which blocks are evaluated.
    """
    r1, r2, rcc = expected_rates(p, cfg, grid, noise)
    n = grid.n_steps
    mu1 = np.broadcast_to((r1 * noise.dwell)[:, :, None, None], (n, n, n, n))
    mu2 = np.broadcast_to((r2 * noise.dwell)[None, None, :, :], (n, n, n, n))
    mucc = rcc * noise.dwell
    for name, arr in (("singles 1", mu1), ("singles 2", mu2), ("coincidence", mucc)):
        _check_finite(name, arr)

    if noiseless:
        s1, s2, cc = (np.rint(m).astype(np.int64) for m in (mu1, mu2, mucc))
        return ScanDataset(grid, cfg.mode, s1, s2, cc, noise.dwell, p, cfg, noise, int(seed), {"noiseless": True})

    s1 = np.empty((n, n, n, n), dtype=np.int64)
    s2 = np.empty_like(s1)
    cc = np.empty_like(s1)

    def draw(block):
        i1, j1 = block
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(i1, j1)))
        s1[i1, j1] = rng.poisson(mu1[i1, j1])
        s2[i1, j1] = rng.poisson(mu2[i1, j1])
        cc[i1, j1] = rng.poisson(mucc[i1, j1])

    blocks = [(i, j) for i in range(n) for j in range(n)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(draw, blocks))
    else:
        for b in blocks:
            draw(b)
    return ScanDataset(
        grid=grid,
        mode=cfg.mode,
        s1=s1,
        s2=s2,
        cc=cc,
        dwell=noise.dwell,
        source=p,
        lens=cfg,
        noise=noise,
        seed=int(seed),
    )


def generate_timetags(rate1, rate2, pair_rate, jitter, duration, seed):
    """Two sorted picosecond tag streams with ``pair_rate`` correlated pairs.

    ``rate1`` and ``rate2`` are the total singles rates (Hz) of each channel; the
    part not explained by pairs is an uncorrelated homogeneous Poisson process.
    Pair members share a uniform birth time and receive independent Gaussian
    jitter of std ``jitter`` ps.  All tags are offset by ``ceil(6 * jitter)`` ps so
    they stay non-negative.
    """
    if min(rate1, rate2, pair_rate, jitter) < 0 or duration <= 0:
        raise ParameterError("rates and jitter must be >= 0, duration > 0")
    if pair_rate > min(rate1, rate2):
        raise ParameterError(f"pair_rate {pair_rate} exceeds a singles rate ({rate1}, {rate2})")
    if duration * (rate1 + rate2) > MAX_TAGS:
        raise SizeError(f"expected {duration * (rate1 + rate2):.3g} tags exceeds guard of {MAX_TAGS}")
    rng = np.random.default_rng(seed)
    span = duration * 1e12
    offset = math.ceil(6.0 * jitter)
    n_pairs = rng.poisson(pair_rate * duration)
    birth = rng.uniform(0.0, span, n_pairs)
    streams = []
    for chan, rate in enumerate((rate1, rate2), start=1):
        jit = rng.normal(0.0, jitter, n_pairs) if jitter > 0 else 0.0
        background = rng.uniform(0.0, span, rng.poisson((rate - pair_rate) * duration))
        tags = np.concatenate([birth + jit, background]) + offset
        streams.append(TagStream(np.sort(np.rint(tags).astype(np.int64)), channel=chan))
    return streams[0], streams[1]
