# %% [markdown]
# # The Born linear model and classical reconstructions
#
# With the total field replaced by the incident field, the data become a
# linear function of the (real) contrast: ``y = A chi``.  This script checks
# the adjoint, then reconstructs a glyph with Tikhonov and truncated SVD.

# %%
import numpy as np

from lmnscatter.baselines import ba_tikhonov, ba_tsvd, tsvd_factors, tune_tikhonov
from lmnscatter.datasets import synthesize
from lmnscatter.evaluation import relative_error
from lmnscatter.forward import ScatteredData, add_noise
from lmnscatter.linop import BornOperator, born_adjoint, born_apply
from lmnscatter.scene import Scenario, make_grid

sc = Scenario(forward_grid=make_grid(2.0, 48), inversion_grid=make_grid(2.0, 24))
A = BornOperator.for_scenario(sc)
print("operator shape:", A.shape, " ||Re(A^H A)|| =", f"{A.normal_norm:.3e}")

rng = np.random.default_rng(0)
x, y = rng.normal(size=A.grid.size), rng.normal(size=A.shape[0]) + 1j * rng.normal(size=A.shape[0])
print("adjoint mismatch:", abs(np.vdot(y, born_apply(A, x)).real - x @ born_adjoint(A, y)))

# %% [markdown]
# Data come from the full (nonlinear) solver on a finer grid, so the
# inversion never sees its own discretization.

# %%
ds = synthesize(sc, 8, seed=3)
lam, scores = tune_tikhonov(A, [d.T.ravel() for d in ds.data[:6]], ds.labels[:6])
print("tuned lambda / ||M|| =", lam / A.normal_norm)

factors = tsvd_factors(A)
truth = ds.labels[7]
for level in (0.0, 0.2):
    noisy = add_noise(ScatteredData(ds.data[7]), level, seed=1)
    tik = ba_tikhonov(A, noisy, lam).values
    tsvd = ba_tsvd(A, noisy, rank=60, factors=factors).values
    print(f"noise {level:.0%}: Tikhonov R_e {relative_error(tik + 1, truth + 1):.4f}, "
          f"TSVD(60) R_e {relative_error(tsvd + 1, truth + 1):.4f}")
