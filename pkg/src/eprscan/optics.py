"""Lens configurations mapping fiber positions to crystal positions or momenta.

Near field: the crystal plane is imaged onto the fibers with magnification
``M_NF = f2 / f1``.  Far field: lens f1 is a Fourier lens and the Fourier plane is
demagnified by ``M_FF = f3 / f2``, so a fiber displacement ``x`` corresponds to the
transverse wave vector ``q = 2 pi x / (lambda f1 M_FF)``.

The default focal lengths (200, 150, 4.5 mm) give M_NF = 0.75, M_FF = 0.03 and an
effective Fourier focal length of 6 mm.  A figure caption in the source material
lists f1 = 250 mm and f2 = 200 mm instead; those values do not reproduce the
quoted magnifications and are not used.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ModeError, ParameterError


class Mode(str, enum.Enum):
    NEAR_FIELD = "nf"
    FAR_FIELD = "ff"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"nf": cls.NEAR_FIELD, "nearfield": cls.NEAR_FIELD, "ff": cls.FAR_FIELD, "farfield": cls.FAR_FIELD}
        try:
            return aliases[text]
        except KeyError:
            raise ModeError(f"unknown mode {value!r}; expected 'nf' or 'ff'") from None


@dataclass(frozen=True)
class LensConfig:
    """Focal lengths in mm, signal wavelength in nm."""

    f1: float = 200.0
    f2: float = 150.0
    f3: float = 4.5
    mode: Mode = Mode.FAR_FIELD
    lambda_signal: float = 1550.156

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        for name in ("f1", "f2", "f3", "lambda_signal"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be finite and > 0, got {value!r}")

    @property
    def m_nf(self):
        return self.f2 / self.f1

    @property
    def m_ff(self):
        return self.f3 / self.f2

    @property
    def f_eff(self):
        """Effective focal length of the Fourier lens, mm."""
        return self.f1 * self.m_ff

    @property
    def momentum_scale(self):
        """Wave vector per unit fiber displacement, mm^-1 per mm."""
        return 2.0 * math.pi / (self.lambda_signal * 1e-6 * self.f_eff)

    def with_mode(self, mode):
        return replace(self, mode=Mode.parse(mode))

    def require(self, mode):
        mode = Mode.parse(mode)
        if self.mode is not mode:
            raise ModeError(f"lens configuration is {self.mode.name}, operation needs {mode.name}")


def detector_to_object(x_det, cfg: LensConfig):
    """Fiber coordinate (mm) -> crystal-plane coordinate (mm).

    Works elementwise, so (x, y) pairs and whole grids convert in one call.
    """
    cfg.require(Mode.NEAR_FIELD)
    return np.asarray(x_det, dtype=float) / cfg.m_nf


def object_to_detector(x_obj, cfg: LensConfig):
    cfg.require(Mode.NEAR_FIELD)
    return np.asarray(x_obj, dtype=float) * cfg.m_nf


def detector_to_momentum(x_det, cfg: LensConfig):
    """Fiber coordinate (mm) -> transverse wave vector (mm^-1)."""
    cfg.require(Mode.FAR_FIELD)
    return np.asarray(x_det, dtype=float) * cfg.momentum_scale


def momentum_to_detector(q, cfg: LensConfig):
    cfg.require(Mode.FAR_FIELD)
    return np.asarray(q, dtype=float) / cfg.momentum_scale


def detector_to_physical(x_det, cfg: LensConfig):
    """Dispatch on ``cfg.mode``: crystal position in NF, wave vector in FF."""
    if cfg.mode is Mode.NEAR_FIELD:
        return detector_to_object(x_det, cfg)
    return detector_to_momentum(x_det, cfg)


def physical_to_detector(value, cfg: LensConfig):
    if cfg.mode is Mode.NEAR_FIELD:
        return object_to_detector(value, cfg)
    return momentum_to_detector(value, cfg)


def conditional_variance(sigma_det, cfg: LensConfig):
    """Physical conditional variance from a fitted detector-plane std (mm).

    Near field: ``(sigma / M_NF)**2`` in mm^2.  Far field:
    ``(2 pi sigma / (lambda f1 M_FF))**2`` in mm^-2.
    """
    return detector_to_physical(sigma_det, cfg) ** 2
