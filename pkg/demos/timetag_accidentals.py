"""Time tags, coincidence windows and accidentals.

Two detectors at 300 kHz with 20 kHz of true pairs and 50 ps jitter: the true
pairs saturate once the window exceeds a few jitter widths, the accidental
background keeps growing linearly.
"""
import numpy as np

from eprscan.coincidence import coincidence_histogram, count_coincidences
from eprscan.scansim import generate_timetags

rate, pairs, jitter, duration = 3e5, 2e4, 50.0, 1.0
a, b = generate_timetags(rate, rate, pairs, jitter, duration, seed=3)
print(f"{len(a)} + {len(b)} tags")

print(f"{'window ps':>10} {'counted':>9} {'accidentals':>12}")
for w in (25, 50, 100, 150, 300, 600, 1200):
    acc = len(a) * len(b) / (duration * 1e12) * 2 * w
    print(f"{w:>10} {count_coincidences(a, b, w):>9} {acc:>12.0f}")

h = coincidence_histogram(a, b, 10, 500)
peak = h.counts - np.median(h.counts)
sd = np.sqrt(np.sum(peak * h.centers**2) / peak.sum())
print(f"\ndelay peak std {sd:.1f} ps (sqrt(2) x jitter = {np.sqrt(2) * jitter:.1f} ps)")
