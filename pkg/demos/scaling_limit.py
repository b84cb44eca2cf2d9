"""Largest critical components against excursions of the limiting reflected walk."""
# %%
import numpy as np

from hcmcrit import experiments as ex
from hcmcrit.community import critical_cm_catalog
from hcmcrit.limit import LimitParams, limit_constant_drift, sample_gamma

# %% the n^(2/3) law
rep = ex.run_scaling_experiment(lambda n: critical_cm_catalog(0.0, n), [3000, 10_000, 30_000],
                                replicas=40, seed=3, slope_range=None)
print(f"log-log slope of the median largest component: {rep.summary['slope']:.3f}")

# %% compare with the longest excursion of the limit process
n = 30_000
dist = critical_cm_catalog()
params = LimitParams.from_distribution(dist)
gam = sample_gamma(params, 100, seed=4)[:, 0]
emp = np.array([c["v"][0] / c["N"] ** (2 / 3) for c in rep.cells if c["n"] == n])
const = limit_constant_drift(dist)
print(f"median scaled v1 {np.median(emp):.3f}, median {const:.2f} * gamma_1 {np.median(const * gam):.3f}")
