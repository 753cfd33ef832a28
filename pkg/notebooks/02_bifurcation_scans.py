# %% [markdown]
# # Bifurcation points and the components they cut out
#
# A family of functionals with `0` as a critical point for every parameter
# bifurcates where the Hessian at `0` degenerates *and* the spectral flow
# across that parameter is nonzero.  We certify such points by Newton
# continuation and then map them over a parameter grid.

# %%
import numpy as np

from specflow import ParameterChart, find_bifurcation_on_path, registry, scan_family
from specflow.demos import torus_chart
from specflow.functional_family import segment

# %% [markdown]
# `f(lam, u) = 1/2 <(I - lam K) u, u> + 1/4 |u|^4` with
# `K = diag(1, 1/2, 1/3, 1/4)`: the Hessian degenerates at `lam = 1, 2, 3, 4`
# and nontrivial critical points `|u|^2 = lam k - 1` branch off there.

# %%
F = registry("krasnoselskii")
for rec in find_bifurcation_on_path(F, segment([0.5], [4.5])):
    norms = [float(np.linalg.norm(u)) for _, u, _ in rec.witnesses]
    print(f"lambda* = {rec.lambda_star[0]:.6f}  status = {rec.status}  witness norms = {norms}")

# %% [markdown]
# On a 1-D grid the four points split the line into five pieces, labelled
# by the spectral flow accumulated from the left end.

# %%
scan = scan_family(F, ParameterChart([(0.5, 4.5)], [65]), (0,))
print(scan.stats["n_components"], scan.stats["distinct_labels"])

# %% [markdown]
# ## A torus that is not disconnected
#
# On a torus the degeneracy circle `theta_1 = 1/2` carries nonzero spectral
# flow, yet removing one circle leaves the torus connected.  The labels are
# then not single-valued: going once around the `theta_1` loop picks up a
# defect of size 1.

# %%
res = scan_family(registry("torus_demo"), torus_chart(32), (0, 0))
print("components:", res.stats["n_components"])
print("loop defects per wrapped axis:", res.stats["loop_defects"])
