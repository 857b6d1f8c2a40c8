"""Microwave inverse scattering with a learned, linear-model-based unrolled network.

The package covers the full pipeline: special functions and Green's operators
for the 2D TM forward problem, the Born linear model and its regularized
normal-equation solver, Born/Tikhonov and truncated-SVD baselines, the
unrolled network with hand-written backpropagation, and evaluation tools.
"""

from .baselines import ba_tikhonov, ba_tsvd, project_physical, tune_tikhonov
from .forward import ForwardModel, SolverError, add_noise, green_domain, green_measure, solve_total_field
from .linop import BornOperator, born_adjoint, born_apply, cg_solve_normal
from .lmn import LmnModel, lmn_infer
from .scene import ContrastMap, Grid, Scenario, SensorRing
from .train import TrainConfig, grad_check, train

__version__ = "0.1.0"

__all__ = [
    "BornOperator", "ContrastMap", "ForwardModel", "Grid", "LmnModel", "Scenario", "SensorRing",
    "SolverError", "TrainConfig", "add_noise", "ba_tikhonov", "ba_tsvd", "born_adjoint", "born_apply",
    "cg_solve_normal", "grad_check", "green_domain", "green_measure", "lmn_infer", "project_physical",
    "solve_total_field", "train", "tune_tikhonov",
]
