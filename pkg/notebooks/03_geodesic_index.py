# %% [markdown]
# # Conjugate points and the spectral index of a geodesic
#
# For a Riemannian geodesic the number of conjugate points equals the Morse
# index of the second variation.  The spectral index computes the same
# number as minus the spectral flow of the second variation restricted to
# the growing initial pieces `t -> gamma(s t)`, and that definition survives
# for indefinite metrics, where conjugate points can cancel.

# %%
import math

from specflow import geodesic_shoot, spectral_index
from specflow.geodesics import round_sphere
from specflow.geodesics import split_spheres, split_spheres_branch

# %% [markdown]
# Great circles on the unit sphere meet conjugate points every `pi` of arc.

# %%
M = round_sphere()
for L in (2.0, 4.0, 7.0):
    rec = geodesic_shoot(M, [1.0], [math.pi / 2, 0.0], [0.0, L])
    ir = spectral_index(rec, M, [1.0], 200)
    arcs = [round(t * L / math.pi, 6) for t, _, _ in ir.conjugate_instants]
    print(f"L={L}: spectral index {ir.spectral_index}, conjugate arcs / pi = {arcs}, "
          f"energy drift {rec.energy_drift:.1e}")

# %% [markdown]
# ## An index-2 metric on S^2 x S^2
#
# With the second factor's metric negated, conjugate points coming from the
# negative factor enter with the opposite sign.  With factor speeds `L` and
# `0.7 L` the index is `floor(L/pi) - floor(0.7 L/pi)`.

# %%
S = split_spheres(1.0, 1.0, 1.0, 0.7)
for L in (2.0, 4.0, 6.0):
    p, v = split_spheres_branch(S, L)
    ir = spectral_index(geodesic_shoot(S, None, p, v), S, None, 200)
    print(L, ir.spectral_index, [(round(t, 4), s) for t, _, s in ir.conjugate_instants])
