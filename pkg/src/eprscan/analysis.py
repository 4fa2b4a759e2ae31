"""EPR certification from near- and far-field raster scans.

Pipeline: normalize coincidences by the geometric mean of the singles, fit a
Gaussian to every conditional slice, convert the fitted widths to physical
conditional variances, average them weighted by how often each conditioning
value occurred, and test the product of position and momentum inferred variances
against the 1/4 bound.

The fitted profile is the intensity ``N exp(-(x - mu)**2 / (2 sigma**2))``; coincidence
counts are probabilities, i.e. squared amplitudes, so ``sigma`` is the standard
deviation of the conditional distribution itself.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .errors import FitError, InsufficientDataError, ModeError, NormalizationError, ParameterError
from .model import FWHM_PER_SIGMA
from .optics import LensConfig, Mode, conditional_variance
from .scansim import ScanDataset

EPR_BOUND = 0.25
POSITION_UNIT = "mm^2"
MOMENTUM_UNIT = "mm^-2"
AXES = ("x", "y")
DIRECTIONS = ("1|2", "2|1")


def normalize(cc, s1, s2):
    """``cc / sqrt(s1 s2)``; raises :class:`NormalizationError` on zero singles."""
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if np.any(s1 <= 0) or np.any(s2 <= 0):
        raise NormalizationError("singles must be > 0 to normalize coincidences")
    out = np.asarray(cc, dtype=float) / np.sqrt(s1 * s2)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FitResult:
    amplitude: float
    mean: float
    sigma: float
    covariance: np.ndarray
    residual_norm: float
    n_points: int
    converged: bool = True

    @property
    def errors(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def sigma_error(self):
        return float(self.errors[2])


def _gauss(params, x):
    n, mu, s = params
    return n * np.exp(-0.5 * ((x - mu) / s) ** 2)


def fit_gaussian_slice(xs, ys, y_err, raw_total=None, floor=50, max_iter=200, max_reweight=20):
    """Weighted least-squares fit of ``N exp(-(x - mu)**2 / (2 sigma**2))``.

    Parameters
    ----------
    xs, ys : array_like
        Positions and values.
    y_err : array_like or callable
        Standard errors of ``ys``.  A callable receives the model values and
        returns their standard errors; the fit is then repeated with errors taken
        from the previous optimum until the parameters settle (at most
        ``max_reweight`` rounds).  For pure Poisson data this lands on the
        maximum-likelihood estimate; errors taken from the observed counts pull
        sigma low by a fraction of a percent.
    raw_total : float, optional
        Raw coincidences behind the slice; slices below ``floor`` are refused.
    max_iter : int
        Bound on function evaluations of the optimizer.

    The covariance of ``(N, mu, sigma)`` comes from the Jacobian at the optimum
    scaled by the reduced chi-square.  Raises :class:`FitError` with ``reason``
    one of ``too-few-points``, ``below-floor``, ``no-signal``, ``no-convergence``,
    ``at-bound``.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    err_model = y_err if callable(y_err) else None
    y_err = np.asarray(err_model(ys) if err_model else y_err, dtype=float)
    if xs.size < 5:
        raise FitError(f"need >= 5 points, got {xs.size}", reason="too-few-points")
    if raw_total is not None and raw_total < floor:
        raise FitError(f"slice holds {raw_total} counts, floor is {floor}", reason="below-floor")
    if np.any(y_err <= 0) or not np.all(np.isfinite(y_err)):
        raise ParameterError("y_err must be finite and > 0")
    w = np.clip(ys, 0.0, None)
    if w.sum() <= 0:
        raise FitError("slice has no positive signal", reason="no-signal")
    mu0 = np.sum(w * xs) / w.sum()
    s0 = math.sqrt(max(np.sum(w * (xs - mu0) ** 2) / w.sum(), 0.0))
    span = xs.max() - xs.min()
    dx = np.min(np.diff(np.unique(xs))) if xs.size > 1 else span
    lower = np.array([0.0, xs.min() - span, dx / 20.0])
    upper = np.array([np.inf, xs.max() + span, 5.0 * span])
    p0 = np.array([w.max(), mu0, min(max(s0, 2.0 * lower[2]), 0.5 * upper[2])])

    def solve(p_start, err):
        def resid(p):
            return (_gauss(p, xs) - ys) / err

        def jac(p):
            n, mu, s = p
            e = np.exp(-0.5 * ((xs - mu) / s) ** 2)
            cols = [e, n * e * (xs - mu) / s**2, n * e * (xs - mu) ** 2 / s**3]
            return np.stack(cols, axis=1) / err[:, None]

        res = optimize.least_squares(
            resid, p_start, jac=jac, bounds=(lower, upper), method="trf", x_scale="jac",
            ftol=1e-14, xtol=1e-14, gtol=1e-14, max_nfev=max_iter,
        )
        if res.status <= 0:
            raise FitError(f"fit did not converge: {res.message}", reason="no-convergence")
        return res

    res = solve(p0, y_err)
    for _ in range(max_reweight if err_model else 0):
        y_err = np.asarray(err_model(_gauss(res.x, xs)), dtype=float)
        prev = res.x
        res = solve(prev, y_err)
        if np.allclose(res.x, prev, rtol=1e-9, atol=0):
            break
    n, mu, s = res.x
    if s <= lower[2] * (1 + 1e-6) or s >= upper[2] * (1 - 1e-6):
        raise FitError(f"sigma hit its bound ({s:.4g})", reason="at-bound")
    dof = xs.size - 3
    chi2 = float(np.sum(res.fun**2))
    jtj = res.jac.T @ res.jac
    try:
        cov = np.linalg.inv(jtj) * (chi2 / dof)
    except np.linalg.LinAlgError:
        raise FitError("singular Jacobian at optimum", reason="no-convergence") from None
    cov = 0.5 * (cov + cov.T)
    return FitResult(
        amplitude=float(n), mean=float(mu), sigma=float(abs(s)), covariance=cov,
        residual_norm=math.sqrt(chi2), n_points=int(xs.size),
    )


@dataclass(frozen=True)
class SliceFit:
    index: int
    position: float  # detector-plane conditioning coordinate, mm
    raw_total: int
    fit: FitResult | None = None
    reason: str | None = None
    variance: float = math.nan
    variance_error: float = math.nan


@dataclass(frozen=True)
class InferredVariance:
    """A minimum inferred variance with its unit tag."""

    value: float
    error: float
    unit: str
    label: str = ""
    slices: tuple = field(default=(), repr=False)

    @property
    def n_fitted(self):
        return sum(1 for s in self.slices if s.fit is not None)


def _value_error(v):
    if isinstance(v, InferredVariance):
        return v.value, v.error, v.unit
    value, error = v
    return float(value), float(error), None


def _select_plane(cc, axis):
    """Indices fixing the orthogonal coordinates at the coincidence maximum."""
    if axis == "x":
        totals = cc.sum(axis=(0, 2))  # over i1, i2 -> (j1, j2)
    else:
        totals = cc.sum(axis=(1, 3))  # over j1, j2 -> (i1, i2)
    a, b = np.unravel_index(int(np.argmax(totals)), totals.shape)
    return int(a), int(b)


def _plane(arr, axis, fixed):
    a, b = fixed
    return arr[:, a, :, b] if axis == "x" else arr[a, :, b, :]


def min_inferred_variance(ds: ScanDataset, cfg: LensConfig | None = None, axis="x", direction="1|2",
                          floor=50, min_slices=3):
    """Minimum inferred variance along one axis for one conditioning direction.

    For ``direction="1|2"`` photon 1 is inferred from photon 2: for each stage-2
    position along ``axis`` a Gaussian is fitted across stage-1 positions, with
    the orthogonal coordinates fixed where the total coincidences peak.  The
    physical variances are averaged with weights proportional to the raw
    coincidences in each successfully fitted slice.

    The returned error combines the fit errors of every slice with the Poisson
    uncertainty of the weights.
    """
    if axis not in AXES:
        raise ParameterError(f"axis must be 'x' or 'y', got {axis!r}")
    if direction not in DIRECTIONS:
        raise ParameterError(f"direction must be '1|2' or '2|1', got {direction!r}")
    cfg = cfg or ds.lens or LensConfig(mode=ds.mode)
    if cfg.mode is not ds.mode:
        raise ModeError(f"dataset is {ds.mode.name} but lens configuration is {cfg.mode.name}")

    fixed = _select_plane(ds.cc, axis)
    cc, s1, s2 = (_plane(a, axis, fixed).astype(float) for a in (ds.cc, ds.s1, ds.s2))
    if direction == "2|1":
        cc, s1, s2 = cc.T, s1.T, s2.T
    scanned_arm, cond_arm = (1, 2) if direction == "1|2" else (2, 1)
    comp = AXES.index(axis)
    xs_all = ds.axis(scanned_arm, comp) * 1e-3
    cond_pos = ds.axis(cond_arm, comp) * 1e-3

    slices = []
    for k in range(cc.shape[1]):
        c, a, b = cc[:, k], s1[:, k], s2[:, k]
        raw = int(c.sum())
        ok = (a > 0) & (b > 0)
        try:
            if ok.sum() < 5:
                raise FitError("fewer than 5 points with non-zero singles", reason="too-few-points")
            ys = c[ok] / np.sqrt(a[ok] * b[ok])
            # observed-count errors: accidentals and dark counts in the tails are
            # not in the Gaussian model, and model-based weights would let them dominate
            rel = np.sqrt(1.0 / np.maximum(c[ok], 1.0) + 0.25 / a[ok] + 0.25 / b[ok])
            y_err = np.maximum(c[ok], 1.0) / np.sqrt(a[ok] * b[ok]) * rel
            fit = fit_gaussian_slice(xs_all[ok], ys, y_err, raw_total=raw, floor=floor)
        except FitError as exc:
            slices.append(SliceFit(k, float(cond_pos[k]), raw, reason=exc.reason))
            continue
        var = float(conditional_variance(fit.sigma, cfg))
        var_err = 2.0 * var * fit.sigma_error / fit.sigma
        slices.append(SliceFit(k, float(cond_pos[k]), raw, fit=fit, variance=var, variance_error=var_err))

    good = [s for s in slices if s.fit is not None]
    label = _label(ds.mode, axis, direction)
    if len(good) < min_slices:
        raise InsufficientDataError(f"{label}: only {len(good)} fittable slices (need {min_slices})")
    counts = np.array([s.raw_total for s in good], dtype=float)
    variances = np.array([s.variance for s in good])
    var_errs = np.array([s.variance_error for s in good])
    total = counts.sum()
    weights = counts / total
    value = float(np.sum(weights * variances))
    fit_part = np.sum((weights * var_errs) ** 2)
    weight_part = np.sum(counts * (variances - value) ** 2) / total**2
    unit = POSITION_UNIT if ds.mode is Mode.NEAR_FIELD else MOMENTUM_UNIT
    return InferredVariance(value, float(math.sqrt(fit_part + weight_part)), unit, label, tuple(slices))


def _label(mode, axis, direction):
    i, j = direction.split("|")
    if mode is Mode.NEAR_FIELD:
        return f"{axis}{i}|{axis}{j}"
    return f"q_{axis}{i}|q_{axis}{j}"


@dataclass(frozen=True)
class EprEntry:
    position: float
    position_error: float
    momentum: float
    momentum_error: float
    product: float
    product_error: float
    violation: bool
    significance: float
    label: str = ""


def epr_test(pos, mom, label=""):
    """Test ``pos * mom < 1/4`` for one axis and direction.

    ``pos`` and ``mom`` are :class:`InferredVariance` objects or ``(value, error)``
    pairs.  Unit-tagged inputs must be a position variance (mm^2) and a momentum
    variance (mm^-2).  The product error follows Gaussian propagation of relative
    errors; significance is ``(1/4 - product) / error``.
    """
    p, dp, pu = _value_error(pos)
    m, dm, mu = _value_error(mom)
    if pu is not None and pu != POSITION_UNIT:
        raise ParameterError(f"position variance must be in {POSITION_UNIT}, got {pu}")
    if mu is not None and mu != MOMENTUM_UNIT:
        raise ParameterError(f"momentum variance must be in {MOMENTUM_UNIT}, got {mu}")
    if not (p > 0 and m > 0):
        raise ParameterError("variances must be positive")
    product = p * m
    err = product * math.hypot(dp / p, dm / m)
    gap = EPR_BOUND - product
    if err > 0:
        significance = gap / err
    else:
        significance = 0.0 if gap == 0 else math.copysign(math.inf, gap)
    return EprEntry(p, dp, m, dm, product, err, product < EPR_BOUND, significance, label)


ROWS = (("x", "1|2"), ("y", "1|2"), ("x", "2|1"), ("y", "2|1"))


@dataclass(frozen=True)
class EprReport:
    entries: tuple

    @property
    def all_violated(self):
        return all(e.violation for e in self.entries)

    @property
    def max_significance(self):
        return max(e.significance for e in self.entries)

    def to_dict(self):
        return {
            "bound": EPR_BOUND,
            "units": {"position": POSITION_UNIT, "momentum": MOMENTUM_UNIT},
            "rows": [asdict(e) for e in self.entries],
            "all_violated": self.all_violated,
            "max_significance": self.max_significance,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    def table(self):
        """Plain-text table: each position/momentum pair followed by its product."""
        lines = [
            f"{'minimum variance':<22}{'value':>26}{'uncertainty product':>30}",
            "=" * 78,
        ]
        for e in self.entries:
            pos_label, mom_label = e.label.split(" * ") if " * " in e.label else (e.label, "")
            product = f"({e.product * 1e2:.1f} +- {e.product_error * 1e2:.1f}) x 1e-2"
            lines.append(f"{pos_label:<22}{f'({e.position * 1e4:.1f} +- {e.position_error * 1e4:.1f}) x 1e-4 mm^2':>26}{product:>30}")
            lines.append(
                f"{mom_label:<22}{f'({e.momentum:.1f} +- {e.momentum_error:.1f}) mm^-2':>26}"
                f"{f'{e.significance:.1f} sigma' + (' VIOLATED' if e.violation else ''):>30}"
            )
            lines.append("-" * 78)
        return "\n".join(lines)


def epr_report(nf: ScanDataset, ff: ScanDataset, nf_cfg=None, ff_cfg=None, floor=50):
    """All four axis/direction rows from a near-field and a far-field scan."""
    if nf.mode is not Mode.NEAR_FIELD or ff.mode is not Mode.FAR_FIELD:
        raise ModeError("epr_report needs a near-field and a far-field dataset, in that order")
    entries = []
    for axis, direction in ROWS:
        pos = min_inferred_variance(nf, nf_cfg, axis, direction, floor=floor)
        mom = min_inferred_variance(ff, ff_cfg, axis, direction, floor=floor)
        entries.append(epr_test(pos, mom, label=f"{pos.label} * {mom.label}"))
    return EprReport(tuple(entries))


@dataclass(frozen=True)
class BirthRegion:
    diameter: float  # um, mean over both arms
    error: float
    per_arm: tuple  # ((diameter, error), (diameter, error))


def _fit_gaussian_2d(x, y, img):
    X, Y = np.meshgrid(x, y, indexing="ij")
    coords = np.vstack([X.ravel(), Y.ravel()])

    def f(c, n, x0, y0, sx, sy, b):
        return n * np.exp(-0.5 * (((c[0] - x0) / sx) ** 2 + ((c[1] - y0) / sy) ** 2)) + b

    z = img.ravel().astype(float)
    w = np.clip(z - z.min(), 0, None)
    if w.sum() <= 0:
        raise FitError("flat singles image", reason="no-signal")
    x0 = np.sum(w * coords[0]) / w.sum()
    y0 = np.sum(w * coords[1]) / w.sum()
    span = max(np.ptp(x), np.ptp(y))
    s0 = span / 4.0
    p0 = [z.max() - z.min(), x0, y0, s0, s0, z.min()]
    lower = [0.0, x.min() - span, y.min() - span, span / 1e4, span / 1e4, -np.inf]
    upper = [np.inf, x.max() + span, y.max() + span, 10 * span, 10 * span, np.inf]
    try:
        popt, pcov = optimize.curve_fit(f, coords, z, p0=p0, bounds=(lower, upper), maxfev=2000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"2D Gaussian fit failed: {exc}", reason="no-convergence") from None
    return popt, pcov


def birth_region(ds: ScanDataset, cfg: LensConfig | None = None):
    """Diameter (FWHM, um) of the pair birth region from near-field singles.

    A 2D Gaussian with offset is fitted to the averaged singles of each arm; the
    mean FWHM of the two axes is mapped back to the crystal plane and the two
    arms are averaged.
    """
    if ds.mode is not Mode.NEAR_FIELD:
        raise ModeError("birth_region needs a near-field dataset")
    cfg = cfg or ds.lens or LensConfig(mode=Mode.NEAR_FIELD)
    cfg.require(Mode.NEAR_FIELD)
    per_arm = []
    for arm in (1, 2):
        img = ds.averaged_singles(arm)
        popt, pcov = _fit_gaussian_2d(ds.axis(arm, 0), ds.axis(arm, 1), img)
        sx, sy = abs(popt[3]), abs(popt[4])
        dsx, dsy = np.sqrt(np.clip(np.diag(pcov)[3:5], 0, None))
        scale = FWHM_PER_SIGMA / cfg.m_nf
        per_arm.append((0.5 * (sx + sy) * scale, 0.5 * math.hypot(dsx, dsy) * scale))
    d = 0.5 * (per_arm[0][0] + per_arm[1][0])
    err = 0.5 * math.hypot(per_arm[0][1], per_arm[1][1])
    return BirthRegion(float(d), float(err), tuple(per_arm))
