# %% [markdown]
# # Bifurcation of geodesics over a parameter plane
#
# Take the equator of a spheroid with polar semi-axis `c` and shoot it to
# length `L`.  The equator has curvature `1/c^2`, so its endpoint becomes
# conjugate when `L = k pi c`.  Scanning the `(c, L)` plane, the spectral
# index jumps by one across each such curve, and each curve separates the
# plane.

# %%
import math
from pathlib import Path

import numpy as np

from specflow import geodesic_family_scan
from specflow.geodesics import ellipsoid_spec
from specflow.output import write_scan

spec = ellipsoid_spec(24, 24)
scan = geodesic_family_scan(spec)
print("components:", scan.stats["n_components"])
print("spectral indices present:", scan.extra["distinct_spectral_indices"])

# %%
cs, Ls = spec.chart.axis_values(0), spec.chart.axis_values(1)
for i in range(0, 24, 6):
    row = "".join("#" if scan.bif_mask[i, j] else str(scan.index_grid[i, j]) for j in range(24))
    print(f"c={cs[i]:.2f} {row}")

# %% [markdown]
# The heatmap and the grids go to `out/ellipsoid-notebook/`.

# %%
write_scan(Path("out/ellipsoid-notebook"), scan)
