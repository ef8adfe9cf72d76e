"""The excess is controlled by a power of the distance to the pair of planes.

Graphs of small exact 1-forms over the canonical pair are scaled to hit
target distances D_V; the excess A scales like D_V^2 and stays below D_V^1.1.
"""

from lmcflab.lab.scenarios import excess_distance_sweep, sweep_slope

rows = excess_distance_sweep(seed=0)
print(f"{'D_V':>10} {'|A|':>12} {'|A| / D_V^1.1':>15}")
for r in rows:
    print(f"{r['d']:>10.3e} {abs(r['A']):>12.3e} {abs(r['A']) / r['d'] ** 1.1:>15.4f}")
print(f"log-log slope {sweep_slope(rows):.4f}")
