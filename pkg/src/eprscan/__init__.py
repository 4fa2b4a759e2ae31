"""Simulation and analysis of position-momentum EPR correlations in photon pairs."""
from .analysis import (
    EprReport,
    FitResult,
    InferredVariance,
    birth_region,
    epr_report,
    epr_test,
    fit_gaussian_slice,
    min_inferred_variance,
    normalize,
)
from .coincidence import TagStream, coincidence_histogram, count_coincidences
from .model import SourceParams, joint_momentum_density, joint_position_density, schmidt_oracle
from .optics import LensConfig, Mode, detector_to_momentum, detector_to_object
from .scansim import NoiseModel, ScanDataset, ScanGrid, generate_timetags, reference_setup, simulate_scan
from .schmidt import IntensityGrid, estimate_schmidt, singles_to_intensity

__version__ = "0.1.0"
