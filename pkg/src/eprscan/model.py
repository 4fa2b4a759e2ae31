"""Double-Gaussian biphoton model in position and momentum space.

Each transverse axis carries the pure two-photon amplitude

    psi(x1, x2) ~ exp(-u**2 / (4 sigma_plus**2)) * exp(-v**2 / (4 sigma_minus**2))

with rotated coordinates ``u = (x1 + x2) / sqrt(2)`` and ``v = (x1 - x2) / sqrt(2)``,
so that ``|psi|**2`` gives ``u`` a standard deviation of ``sigma_plus`` and ``v`` one
of ``sigma_minus``.  The momentum picture is the Fourier dual with widths
``1 / (2 sigma_plus)`` and ``1 / (2 sigma_minus)`` for the rotated wave vectors.
Optionally the far-field difference coordinate is replaced by a Gaussian ring, a
phenomenological stand-in for non-collinear emission.

Units: positions in mm, transverse wave vectors in rad/mm (written mm^-1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from .errors import ParameterError, ResolutionError

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def fwhm_to_sigma(fwhm):
    return fwhm / FWHM_PER_SIGMA


def sigma_to_fwhm(sigma):
    return sigma * FWHM_PER_SIGMA


@dataclass(frozen=True)
class SourceParams:
    """Physical description of the photon-pair source.

    Attributes
    ----------
    lambda_pump, lambda_signal : float
        Wavelengths in nm.
    pump_waist_fwhm : float
        Pump intensity FWHM at the crystal centre, in um.  Informational unless
        the source is built with :meth:`from_pump_waist`.
    sigma_plus, sigma_minus : float
        Standard deviations (mm) of ``(x1 + x2)/sqrt(2)`` and ``(x1 - x2)/sqrt(2)``.
    q_ring : float
        Far-field single-photon ring radius in mm^-1; 0 gives a pure Gaussian.
    pair_rate : float
        Detected pair rate at peak alignment, in Hz.

    The default widths are tuned so that a simulated scan lands on the
    conditional variances of a 1550 nm type-0 source measured with a
    17 x 17 raster; see the README for the derivation.
    """

    lambda_pump: float = 775.078
    lambda_signal: float = 1550.156
    pump_waist_fwhm: float = 83.5
    sigma_plus: float = 0.095
    sigma_minus: float = 0.019
    q_ring: float = 27.0
    pair_rate: float = 3.2e7

    def __post_init__(self):
        for name in ("lambda_pump", "lambda_signal", "pump_waist_fwhm", "sigma_plus", "sigma_minus"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be finite and > 0, got {value!r}")
        for name in ("q_ring", "pair_rate"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ParameterError(f"{name} must be finite and >= 0, got {value!r}")

    @classmethod
    def from_pump_waist(cls, pump_waist_fwhm=83.5, width_ratio=12.0, **kwargs):
        """Source whose near-field singles reproduce the pump intensity profile.

        The marginal of ``|psi|**2`` has variance ``(sigma_plus**2 + sigma_minus**2)/2``;
        choosing ``sigma_plus = sqrt(2) * sigma_pump`` (``sigma_minus`` small) makes
        it match the pump intensity standard deviation.
        """
        sigma_pump = fwhm_to_sigma(pump_waist_fwhm) * 1e-3
        sigma_plus = math.sqrt(2.0) * sigma_pump
        return cls(
            pump_waist_fwhm=pump_waist_fwhm,
            sigma_plus=sigma_plus,
            sigma_minus=sigma_plus / width_ratio,
            **kwargs,
        )

    def with_(self, **changes):
        return replace(self, **changes)

    @property
    def momentum_sigma_plus(self):
        """Std of ``(q1 + q2)/sqrt(2)`` in mm^-1."""
        return 1.0 / (2.0 * self.sigma_plus)

    @property
    def momentum_sigma_minus(self):
        """Std of ``(q1 - q2)/sqrt(2)`` in mm^-1."""
        return 1.0 / (2.0 * self.sigma_minus)


def _as_pair(r):
    r = np.asarray(r, dtype=float)
    if r.shape[-1:] != (2,):
        raise ParameterError(f"expected trailing dimension 2, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ParameterError("non-finite coordinate")
    return r


def _gauss_pair_1d(a, b, s_plus, s_minus):
    u = (a + b) / math.sqrt(2.0)
    v = (a - b) / math.sqrt(2.0)
    norm = 1.0 / (2.0 * math.pi * s_plus * s_minus)
    return norm * np.exp(-0.5 * (u / s_plus) ** 2 - 0.5 * (v / s_minus) ** 2)


def position_density_1d(x1, x2, p: SourceParams):
    """Per-axis factor of the position density (mm^-2)."""
    return _gauss_pair_1d(np.asarray(x1, float), np.asarray(x2, float), p.sigma_plus, p.sigma_minus)


def momentum_density_1d(q1, q2, p: SourceParams):
    """Per-axis factor of the momentum density for ``q_ring == 0`` (mm^2)."""
    return _gauss_pair_1d(
        np.asarray(q1, float), np.asarray(q2, float), p.momentum_sigma_plus, p.momentum_sigma_minus
    )


def joint_position_density(r1, r2, p: SourceParams):
    """Joint density of the two photons' transverse positions, in mm^-4.

    ``r1`` and ``r2`` broadcast against each other and carry (x, y) in the
    last dimension.
    """
    r1, r2 = _as_pair(r1), _as_pair(r2)
    return position_density_1d(r1[..., 0], r2[..., 0], p) * position_density_1d(r1[..., 1], r2[..., 1], p)


def ring_normalization(radius, width):
    """Integral of ``exp(-(rho - radius)**2 / (2 width**2))`` over the plane."""
    a, w = float(radius), float(width)
    tail = a * w * math.sqrt(math.pi / 2.0) * (1.0 + math.erf(a / (math.sqrt(2.0) * w)))
    return 2.0 * math.pi * (w * w * math.exp(-a * a / (2.0 * w * w)) + tail)


def ring_profile(rho, radius, width):
    return np.exp(-0.5 * ((np.asarray(rho, float) - radius) / width) ** 2)


def blurred_ring_profile(rho, radius, width, blur, n_nodes=4000):
    """Ring profile convolved with an isotropic 2D Gaussian of std ``blur``.

    Evaluated by radial quadrature of the angle-integrated kernel
    ``exp(-(rho - r)**2 / (2 t**2)) * i0e(rho r / t**2) / t**2``.
    """
    rho = np.asarray(rho, dtype=float)
    if blur <= 0:
        return ring_profile(rho, radius, width)
    t = float(blur)
    r_max = max(radius + 12.0 * (width + t), float(np.max(rho, initial=0.0)) + 12.0 * t)
    r = np.linspace(0.0, r_max, n_nodes)
    ring = r * ring_profile(r, radius, width)
    flat = rho.reshape(-1)
    out = np.empty_like(flat)
    chunk = 512
    for start in range(0, flat.size, chunk):
        rr = flat[start : start + chunk, None]
        kern = np.exp(-0.5 * ((rr - r[None, :]) / t) ** 2) * special.i0e(rr * r[None, :] / t**2)
        out[start : start + chunk] = np.trapezoid(kern * ring[None, :], r, axis=1) / t**2
    return out.reshape(rho.shape)


def joint_momentum_density(q1, q2, p: SourceParams):
    """Joint density of the two transverse wave vectors, in mm^4.

    For ``q_ring == 0`` this is the Fourier dual of :func:`joint_position_density`.
    Otherwise the difference coordinate ``(q1 - q2)/sqrt(2)`` follows a Gaussian ring
    of radius ``sqrt(2) * q_ring`` and radial width ``1/(2 sigma_minus)``, which puts
    the single-photon ring at ``|q| = q_ring`` when ``q1 = -q2``.
    """
    q1, q2 = _as_pair(q1), _as_pair(q2)
    if p.q_ring == 0:
        return momentum_density_1d(q1[..., 0], q2[..., 0], p) * momentum_density_1d(q1[..., 1], q2[..., 1], p)
    s_plus, s_minus = p.momentum_sigma_plus, p.momentum_sigma_minus
    qp = (q1 + q2) / math.sqrt(2.0)
    qm = (q1 - q2) / math.sqrt(2.0)
    gauss = np.exp(-0.5 * np.sum(qp**2, axis=-1) / s_plus**2) / (2.0 * math.pi * s_plus**2)
    radius = math.sqrt(2.0) * p.q_ring
    ring = ring_profile(np.linalg.norm(qm, axis=-1), radius, s_minus)
    return gauss * ring / ring_normalization(radius, s_minus)


def conditional_position_variance(p: SourceParams):
    """Closed-form Var(x1 | x2) per axis, in mm^2."""
    sp2, sm2 = p.sigma_plus**2, p.sigma_minus**2
    return 2.0 * sp2 * sm2 / (sp2 + sm2)


def conditional_momentum_variance(p: SourceParams):
    """Closed-form Var(q_x1 | q_x2) per axis for ``q_ring == 0``, in mm^-2."""
    return 1.0 / (2.0 * (p.sigma_plus**2 + p.sigma_minus**2))


def marginal_position_variance(p: SourceParams):
    return 0.5 * (p.sigma_plus**2 + p.sigma_minus**2)


def marginal_momentum_variance(p: SourceParams):
    return 0.5 * (p.momentum_sigma_plus**2 + p.momentum_sigma_minus**2)


def position_marginal(r, p: SourceParams):
    """Single-photon position density (mm^-2) at ``r = (x, y)``."""
    r = _as_pair(r)
    var = marginal_position_variance(p)
    return np.exp(-0.5 * np.sum(r**2, axis=-1) / var) / (2.0 * math.pi * var)


def momentum_marginal(q, p: SourceParams):
    """Single-photon momentum density (mm^2) at ``q = (qx, qy)``."""
    q = _as_pair(q)
    if p.q_ring == 0:
        var = marginal_momentum_variance(p)
        return np.exp(-0.5 * np.sum(q**2, axis=-1) / var) / (2.0 * math.pi * var)
    # sqrt(2) q1 = Q+ + Q-: a ring blurred by the Q+ Gaussian, then rescaled.
    radius = math.sqrt(2.0) * p.q_ring
    w = math.sqrt(2.0) * np.linalg.norm(q, axis=-1)
    prof = blurred_ring_profile(w, radius, p.momentum_sigma_minus, p.momentum_sigma_plus)
    return 2.0 * prof / ring_normalization(radius, p.momentum_sigma_minus)


def schmidt_number_analytic(p: SourceParams):
    """Exact Schmidt number of the 2D double-Gaussian state."""
    k1 = (p.sigma_plus**2 + p.sigma_minus**2) / (2.0 * p.sigma_plus * p.sigma_minus)
    return k1 * k1


def _svd_schmidt_1d(sp, sm, grid_n, extent):
    x = np.linspace(-extent, extent, grid_n)
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    u = (x1 + x2) / math.sqrt(2.0)
    v = (x1 - x2) / math.sqrt(2.0)
    amp = np.exp(-(u**2) / (4.0 * sp**2) - v**2 / (4.0 * sm**2))
    lam = np.linalg.svd(amp, compute_uv=False)
    lam2 = lam**2
    return lam2.sum() ** 2 / np.sum(lam2**2)


def schmidt_oracle(p: SourceParams, grid_n=256, extent=None, check=True):
    """Schmidt number from the singular values of the discretized amplitude.

    The 1D amplitude is sampled on ``grid_n x grid_n`` points over
    ``[-extent, extent]`` (mm); x and y factorize identically so the 2D value is
    the square of the 1D one.  With ``check`` the computation is repeated at
    twice the resolution and a :class:`ResolutionError` is raised when the two
    differ by more than 1 %.
    """
    if p.q_ring != 0:
        raise ParameterError("schmidt_oracle needs the pure double-Gaussian model (q_ring == 0)")
    if grid_n < 64:
        raise ParameterError(f"grid_n must be >= 64, got {grid_n}")
    widest = max(p.sigma_plus, p.sigma_minus)
    if extent is None:
        extent = 6.0 * widest
    if extent < 5.0 * widest:
        raise ParameterError(f"extent {extent} mm does not cover 5 sigma ({5 * widest} mm)")
    k1 = _svd_schmidt_1d(p.sigma_plus, p.sigma_minus, grid_n, extent)
    if check:
        k1_fine = _svd_schmidt_1d(p.sigma_plus, p.sigma_minus, 2 * grid_n, extent)
        if abs(k1_fine**2 - k1**2) > 0.01 * k1_fine**2:
            raise ResolutionError(
                f"grid_n={grid_n} too coarse: K={k1**2:.4g} vs {k1_fine**2:.4g} at double resolution"
            )
    return k1 * k1
