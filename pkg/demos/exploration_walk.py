"""The depth-first exploration walk on a critical household graph."""
# %%
import numpy as np

from hcmcrit.community import critical_household_catalog
from hcmcrit.exploration import component_arrays, explore, rescaled_walks, z_slope
from hcmcrit.generator import generate

n = 20_000
dist = critical_household_catalog()
g = generate(dist, n, seed=1)
t = explore(g, seed=2)
print(f"n={g.n} communities, N={g.N} vertices, {len(t.tau)} components")

# %% Q hits -2k exactly when the k-th component closes
print("Q at the first five closing times:", t.Q[t.tau[:5]])

# %% Z grows like (E[DS]/E[D]) times the number of explored communities
print(f"Z slope {z_slope(t, n):.3f} vs E[DS]/E[D] = {dist.moment(1, 1) / dist.mean_degree:.3f}")
grid = np.linspace(0, 2, 5)
q, z = rescaled_walks(t, n, grid)
for s, a, b in zip(grid, q, z):
    print(f"t={s:.1f}  n^(-1/3) Q={a:+.3f}  n^(-2/3) Z={b:.3f}")

# %% largest components in vertices and in communities
v, vH, SP, SPH, _, _ = component_arrays(t)
order = np.argsort(-v)[:5]
for i in order:
    print(f"v={v[i]:5d}  communities={vH[i]:5d}  surplus={SP[i]}")
