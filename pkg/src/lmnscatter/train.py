"""End-to-end training of the unrolled network with hand-derived gradients.

Backward through one data-consistency block ``chi = (M + lam I)^-1 (c + lam Z)``:

    dL/dZ   = lam * (M + lam I)^-1 g
    dL/dlam = < (M + lam I)^-1 g , Z - chi >

with ``g = dL/dchi``; both reuse a single CG solve since ``M + lam I`` is
symmetric.  ``dL/drho = lam * dL/dlam`` for ``lam = exp(rho)``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .linop import BornOperator, cg_solve
from .lmn import ConvergenceError, LmnModel, denoiser_backward, unrolled_forward

log = logging.getLogger(__name__)

BACKWARD_TOL = 1e-10


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    unroll: int = 5
    depth: int = 5
    channels: int = 64
    use_bn: bool = True
    lam_init: float = 0.05
    checkpoint_every: int = 0
    forward_tol: float = 1e-8
    backward_tol: float = BACKWARD_TOL

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")
        if not (self.lr > 0 and self.eps > 0 and 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("invalid optimizer settings")

    def to_dict(self):
        return asdict(self)


@dataclass
class GradientBundle:
    weights: dict
    rho: float

    def flat(self) -> dict:
        out = dict(self.weights)
        out["rho"] = np.array(self.rho)
        return out


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def loss(chi_k, labels) -> float:
    """Sum over samples of squared Frobenius errors (no averaging)."""
    chi_k = np.asarray(chi_k, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if chi_k.shape != labels.shape:
        raise ValueError(f"shape mismatch: {chi_k.shape} vs {labels.shape}")
    return float(np.sum((chi_k - labels) ** 2))


def _label_matrix(labels, N):
    lab = np.asarray(labels, dtype=float)
    if lab.ndim == 1 or (lab.ndim == 2 and lab.shape[0] == lab.shape[1] and lab.size == N):
        return lab.reshape(N, 1)
    if lab.shape[0] != N:
        lab = lab.reshape(lab.shape[0], -1).T
    return lab


def backprop_unrolled(model: LmnModel, A: BornOperator, data, labels,
                      forward_tol=1e-8, backward_tol=BACKWARD_TOL, update_stats=True,
                      weight_grad_iterations=None):
    """Loss and exact gradients for a batch.

    ``data`` is ``(N_r*N_i, B)`` (or a single vector), ``labels`` ``(N, B)``.
    ``weight_grad_iterations`` optionally restricts which unrolled iterations
    contribute to the shared-weight gradient (the chain to earlier iterations
    is still followed); it exists to test the weight-sharing sum.
    """
    run = unrolled_forward(model, A, data, training=True, tol=forward_tol, update_stats=update_stats)
    N = A.grid.size
    n = A.grid.n
    lab = _label_matrix(labels, N)
    chi_k = run.chis[-1]
    if lab.shape != chi_k.shape:
        raise ValueError(f"labels shape {lab.shape} does not match output {chi_k.shape}")
    value = loss(chi_k, lab)
    lam = model.lam
    B = chi_k.shape[1]
    g = 2.0 * (chi_k - lab)
    wgrads = {k: np.zeros_like(v) for k, v in model.weights.params().items()}
    dlam = 0.0
    for k in range(model.unroll, 0, -1):
        u, rep = cg_solve(run.operator, lam, g, tol=backward_tol, max_iter=10 * N)
        if not rep.converged:
            raise ConvergenceError(f"backward CG failed at layer {k}", k, rep.final_residual)
        z_prev = run.zs[k - 1]
        dlam += float(np.sum(u * (z_prev - run.chis[k])))
        gz = lam * u
        dx, grads = denoiser_backward(model.weights, run.caches[k - 1], gz.T.reshape(B, n, n))
        if weight_grad_iterations is None or (k - 1) in weight_grad_iterations:
            for name, val in grads.items():
                wgrads[name] += val
        g = dx.reshape(B, N).T
    return value, GradientBundle(wgrads, lam * dlam)


# ------------------------------------------------------------------------ Adam

def model_params(model: LmnModel) -> dict:
    p = dict(model.weights.params())
    p["rho"] = np.array(model.rho)
    return p


def adam_step(params: dict, grads: GradientBundle | dict, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update, in place on ``params``.

    Returns ``(params, state)``.
    """
    g = grads.flat() if isinstance(grads, GradientBundle) else grads
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        gi = np.asarray(g[name], dtype=float)
        if gi.shape != np.shape(p):
            raise ValueError(f"gradient shape mismatch for {name}")
        m = state.m.setdefault(name, np.zeros_like(p, dtype=float))
        v = state.v.setdefault(name, np.zeros_like(p, dtype=float))
        m *= b1
        m += (1 - b1) * gi
        v *= b2
        v += (1 - b2) * gi * gi
        step = cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        if isinstance(p, np.ndarray) and p.ndim > 0:
            p -= step
        else:
            params[name] = np.asarray(p - step)
    return params, state


def _apply_rho(model: LmnModel, params: dict):
    model.rho = float(params["rho"])


def train(model: LmnModel, A: BornOperator, data, labels, cfg: TrainConfig,
          state: AdamState | None = None, checkpoint=None, start_epoch: int = 0,
          history=None):
    """Minibatch Adam training.

    ``data`` is ``(N_r*N_i, S)`` complex, ``labels`` ``(N, S)``.  The model is
    calibrated on the training data when its scales are unset.  ``checkpoint``
    is called as ``checkpoint(epoch, model, state, history)`` every
    ``cfg.checkpoint_every`` epochs.  Returns ``(model, history, state)``.
    """
    data = np.asarray(data, dtype=complex)
    labels = np.asarray(labels, dtype=float)
    if data.ndim != 2 or data.shape[1] == 0:
        raise ValueError("training set is empty")
    if data.shape[0] != A.shape[0] or labels.shape != (A.grid.size, data.shape[1]):
        raise ValueError("dataset does not match the scenario operator")
    if model.op_scale == 1.0 and model.chi0_scale == 1.0:
        model.calibrate(A, data)
    state = state or AdamState()
    S = data.shape[1]
    history = list(history or [])
    for epoch in range(start_epoch, cfg.epochs):
        # per-epoch shuffle seed: a run resumed at any epoch continues identically
        order = np.random.default_rng([cfg.seed, epoch]).permutation(S)
        total = 0.0
        for start in range(0, S, cfg.batch_size):
            idx = np.sort(order[start:start + cfg.batch_size])
            value, grads = backprop_unrolled(model, A, data[:, idx], labels[:, idx],
                                             forward_tol=cfg.forward_tol, backward_tol=cfg.backward_tol)
            params = model_params(model)
            adam_step(params, grads, state, cfg)
            _apply_rho(model, params)
            total += value
        history.append(total / S)
        log.info("epoch %d  loss %.6f  lam %.4g", epoch + 1, history[-1], model.lam)
        if checkpoint is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            checkpoint(epoch + 1, model, state, history)
    return model, history, state


# ---------------------------------------------------------------- grad check

def _total_loss(model, A, data, labels, tol):
    """Loss plus the ReLU on/off pattern of every unrolled activation."""
    run = unrolled_forward(model, A, data, training=True, tol=tol, max_iter=10 * A.grid.size,
                           update_stats=False)
    pattern = np.concatenate([(p > 0).ravel() for c in run.caches for p in c.pre_relu if p is not None])
    return loss(run.chis[-1], _label_matrix(labels, A.grid.size)), pattern


def _central_difference(probe, A, data, labels, get, put, step, tol, base_pattern, min_step=1e-8):
    """Central difference that shrinks the step while it straddles a ReLU kink."""
    orig = get()
    h = step
    while True:
        put(orig + h)
        lp, pp = _total_loss(probe, A, data, labels, tol)
        put(orig - h)
        lm, pm = _total_loss(probe, A, data, labels, tol)
        put(orig)
        smooth = np.array_equal(pp, base_pattern) and np.array_equal(pm, base_pattern)
        if smooth or h <= min_step:
            return (lp - lm) / (2 * h)
        h *= 0.1


def finite_difference_gradients(model: LmnModel, A: BornOperator, data, labels,
                                step: float = 1e-4, tol: float = 1e-14):
    """Central differences of the full loss for every parameter and rho.

    Entries whose +/- perturbation flips any ReLU are redone with a smaller
    step, since a difference across a kink does not estimate the derivative.
    """
    probe = model.copy()
    _, base = _total_loss(probe, A, data, labels, tol)
    out = {}
    for name, arr in probe.weights.params().items():
        fd = np.zeros_like(arr)
        for i in np.ndindex(arr.shape):
            def put(v, i=i, arr=arr):
                arr[i] = v
            fd[i] = _central_difference(probe, A, data, labels, lambda: arr[i], put, step, tol, base)
        out[name] = fd

    def put_rho(v):
        probe.rho = v
    out["rho"] = np.array(_central_difference(probe, A, data, labels, lambda: probe.rho, put_rho,
                                              step, tol, base))
    return out


def gradient_discrepancy(analytic: dict, numeric: dict, floor: float = 1e-6) -> float:
    """Worst entrywise ``|a - f| / max(|a|, |f|, floor * max|f|)`` over all entries."""
    scale = max(float(np.max(np.abs(v))) for v in numeric.values())
    worst = 0.0
    for name, f in numeric.items():
        a = np.asarray(analytic[name])
        f = np.asarray(f)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor * scale)
        worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    return worst


def grad_check(model: LmnModel, A: BornOperator, data, labels, step: float = 1e-4) -> float:
    """Maximum relative discrepancy between analytic and central-difference gradients."""
    probe = model.copy()
    _, grads = backprop_unrolled(probe, A, data, labels, forward_tol=1e-14,
                                 backward_tol=1e-14, update_stats=False)
    numeric = finite_difference_gradients(model, A, data, labels, step=step)
    return gradient_discrepancy(grads.flat(), numeric)
