# %% [markdown]
# # Training the unrolled network
#
# Each unrolled iteration applies a residual CNN denoiser ``Z = V_w(chi)`` and
# then enforces data consistency by solving
# ``(Re(A^H A) + lam I) chi = Re(A^H y) + lam Z`` with conjugate gradients.
# Gradients flow through the CG solves analytically, and ``lam`` itself is
# learned.  Here a small network is trained on a reduced problem for a few
# epochs; the acceptance suite runs the full-size version.

# %%
import numpy as np

from lmnscatter.baselines import ba_tikhonov, tune_tikhonov
from lmnscatter.datasets import synthesize
from lmnscatter.evaluation import noise_sweep
from lmnscatter.forward import ScatteredData
from lmnscatter.linop import BornOperator
from lmnscatter.lmn import LmnModel, lmn_infer
from lmnscatter.scene import Scenario, make_grid
from lmnscatter.train import TrainConfig, grad_check, train

sc = Scenario(forward_grid=make_grid(2.0, 32), inversion_grid=make_grid(2.0, 16))
A = BornOperator.for_scenario(sc)
ds = synthesize(sc, 48, seed=5)
train_idx, test_idx = np.arange(40), np.arange(40, 48)

# %% [markdown]
# Before training, compare the hand-written gradients with finite differences
# on two samples.

# %%
probe = LmnModel.create(depth=3, channels=4, unroll=2, use_bn=False).calibrate(A, ds.data_matrix([0, 1]))
print("gradient check discrepancy:", f"{grad_check(probe, A, ds.data_matrix([0, 1]), ds.label_matrix([0, 1])):.2e}")

# %%
cfg = TrainConfig(epochs=8, batch_size=8, depth=4, channels=16, unroll=3, lr=2e-3)
model = LmnModel.create(cfg.depth, cfg.channels, cfg.unroll, cfg.use_bn, seed=0)
model, history, _ = train(model, A, ds.data_matrix(train_idx), ds.label_matrix(train_idx), cfg)
print("loss per epoch:", [round(h, 2) for h in history])
print("learned lambda:", round(model.lam, 4))

# %%
lam_ba, _ = tune_tikhonov(A, [ds.data[i].T.ravel() for i in train_idx[:8]], ds.labels[train_idx[:8]])
rep = noise_sweep({"LMN": lambda y: lmn_infer(model, A, y)[0].values,
                   "BA": lambda y: ba_tikhonov(A, y, lam_ba).values},
                  [ScatteredData(ds.data[i]) for i in test_idx], ds.labels[test_idx], [0.0, 0.1, 0.2])
print(rep.to_csv(timing=False))
