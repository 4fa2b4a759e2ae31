"""How far the intensity-based Schmidt estimate can be trusted.

On dense noiseless grids of the double-Gaussian model the estimate agrees with
the singular-value decomposition of the two-photon amplitude.  On the coarse
17 x 17 raster the answer is capped by the scanned area.
"""
import numpy as np

from eprscan import model
from eprscan.model import SourceParams
from eprscan.optics import LensConfig, detector_to_physical
from eprscan.schmidt import IntensityGrid, model_intensity_grids, schmidt_number

print(f"{'ratio':>6} {'closed form':>12} {'SVD':>10} {'intensity':>10}")
for ratio in (1, 2, 5, 10, 20):
    p = SourceParams(sigma_plus=0.1, sigma_minus=0.1 / ratio, q_ring=0)
    k = schmidt_number(*model_intensity_grids(p))
    print(f"{ratio:>6} {model.schmidt_number_analytic(p):>12.3f} {model.schmidt_oracle(p, grid_n=512):>10.3f} {k:>10.3f}")

ax = (np.arange(17) - 8) * 0.01
x = detector_to_physical(ax, LensConfig(mode="nf"))
q = detector_to_physical(ax, LensConfig(mode="ff"))
flat = np.ones((17, 17))
cap = schmidt_number(IntensityGrid(flat, x, x, "nf"), IntensityGrid(flat, q, q, "ff"))
print(f"\nlargest K a 17 x 17 raster with 10 um steps can report: {cap:.1f}")
