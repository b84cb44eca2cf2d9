"""Where the critical window sits for two community catalogs.

Solves pi nu(pi) = 1 + lam n^(-1/3) exactly and compares it with the
first-order approximation pi_n(0) (1 + c* lam n^(-1/3)).
"""
# %%
import numpy as np

from hcmcrit import critical as cr
from hcmcrit.community import line_single_catalog, star_catalog

# %% [markdown]
# Stars with five leaves: the leaf-to-leaf walk through the centre costs two
# edges, so the percolated criticality parameter is 4 pi^2 and pi_c = 4^(-1/3).

# %%
star = star_catalog(5)
print(f"c* = {cr.c_star(star):.6f}")
for n in (10 ** 5, 10 ** 6):
    for lam in (-10, -1, 0, 1, 10):
        s = cr.solve_pi_critical(star, n, lam)
        print(f"n={n:>8} lam={lam:>4}  pi={s.pi:.4f}  approx={s.pi_approx:.4f}")

# %% [markdown]
# Lines of length five mixed with degree-three single vertices.  The lines only
# carry inter-community edges end to end, which is why c* is larger here.

# %%
mix = line_single_catalog()
print(f"c* = {cr.c_star(mix):.5f}")
for lam in (-10, 0, 10):
    s = cr.solve_pi_critical(mix, 10 ** 5, lam)
    print(f"lam={lam:>4}  pi={s.pi:.4f}  approx={s.pi_approx:.4f}")

# %% the pi_in / pi_out picture: the crossing with the diagonal is the solution
curve = cr.pin_pout_curve(star, 10 ** 5, 0.0, np.linspace(0.5, 0.8, 7))
for a, b in zip(curve.pi_in, curve.pi_out):
    print(f"pi_in={a:.3f}  pi_out={b:.3f}")
print(f"crossing at {curve.intersection:.6f}")
