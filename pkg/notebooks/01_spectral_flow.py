# %% [markdown]
# # Spectral flow of operator paths
#
# A path of symmetric operators that is invertible at both ends has a
# spectral flow: the net count of eigenvalues that move through zero.  Here
# we compute it two ways and watch the bookkeeping rules hold exactly.

# %%
import numpy as np

from specflow import SymmetricMatrix, krasnoselskii_path, reverse, sfl_crossings, sfl_endpoint
from specflow.operator_core import relative_morse_index_sc
from specflow.spectral_flow import DENSE, OperatorPath, concatenate

# %% [markdown]
# The simplest crossing: one eigenvalue `1 - 2t` falls through zero at
# `t = 1/2`.  Downward crossings count as -1, matching the Morse-index
# difference `mu(L_0) - mu(L_1) = 0 - 1`.

# %%
path = OperatorPath(lambda t: SymmetricMatrix(np.diag([1 - 2 * t, 1.0])), DENSE)
res = sfl_crossings(path)
print("value", res.value, "crossings", res.crossings)

# %% [markdown]
# ## Compact perturbations of the identity
#
# `t -> id + t K_n` with `K_n = -2 P_n` drives `n` eigenvalues from 1 to -1.
# The operator is stored as a finite window plus an infinite `+1` tail, so
# the endpoint formula (a relative Morse index) is available alongside the
# crossing count.

# %%
for n in range(1, 9):
    p = krasnoselskii_path(n)
    print(n, sfl_crossings(p).value, sfl_endpoint(p).value,
          relative_morse_index_sc(p(1.0), p(0.0)))

# %% [markdown]
# Both methods give `-n`; the relative index with the endpoints swapped,
# `mu_rel(id + K_n, id)`, is `+n`.  Which of the two one calls "the" spectral
# flow of this path is purely an orientation convention; this package
# follows the endpoint-difference rule `mu(L_0) - mu(L_1)` throughout.

# %%
p = krasnoselskii_path(3)
print("reversed:", sfl_endpoint(reverse(p)).value)
print("there and back:", sfl_crossings(concatenate(p, reverse(p))).value)
