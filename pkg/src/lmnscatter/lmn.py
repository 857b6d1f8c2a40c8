"""Residual CNN denoiser and the unrolled denoise / data-consistency network.

Images travel through the denoiser as ``(B, H, W, C)`` arrays.  The network
``N_w`` is ``[conv+ReLU], (D-2) x [conv+BN+ReLU], [conv]`` with 3x3 zero-padded
convolutions, and the denoiser returns ``V_w(x) = x - N_w(x)``.

The unrolled loop alternates ``Z_n = V_w(chi_n)`` with the regularized
normal-equation solve ``(M + lam I) chi_{n+1} = Re(A^H y) + lam Z_n``, starting
from the scaled back-projection ``chi_0 = c * Re(A^H y)``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .baselines import project_physical
from .forward import ScatteredData
from .linop import BornOperator, born_adjoint, cg_solve_normal
from .scene import CHI_MAX, ContrastMap

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class ConvergenceError(RuntimeError):
    def __init__(self, message, iteration=None, residual=None):
        super().__init__(message)
        self.iteration = iteration
        self.residual = residual


# ------------------------------------------------------------------ layer maths

def _im2col(x):
    """``(B, H, W, C)`` -> ``(B*H*W, 9*C)`` patches in (dy, dx, c) order."""
    B, H, W, C = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((B, H, W, 9, C), dtype=x.dtype)
    for dy in range(3):
        for dx in range(3):
            cols[:, :, :, 3 * dy + dx, :] = xp[:, dy:dy + H, dx:dx + W, :]
    return cols.reshape(B * H * W, 9 * C)


def _col2im(dcols, shape):
    B, H, W, C = shape
    dcols = dcols.reshape(B, H, W, 9, C)
    dxp = np.zeros((B, H + 2, W + 2, C), dtype=dcols.dtype)
    for dy in range(3):
        for dx in range(3):
            dxp[:, dy:dy + H, dx:dx + W, :] += dcols[:, :, :, 3 * dy + dx, :]
    return dxp[:, 1:-1, 1:-1, :]


def conv_forward(x, kernel, bias=None, return_cols=False):
    B, H, W, _ = x.shape
    cout = kernel.shape[-1]
    cols = _im2col(x)
    out = cols @ kernel.reshape(-1, cout)
    if bias is not None:
        out += bias
    out = out.reshape(B, H, W, cout)
    return (out, cols) if return_cols else out


def conv_backward(dout, x, kernel, cols=None):
    """Gradients of a 3x3 'same' convolution: ``(dx, dkernel, dbias)``."""
    cout = kernel.shape[-1]
    d2 = dout.reshape(-1, cout)
    if cols is None:
        cols = _im2col(x)
    dk = (cols.T @ d2).reshape(kernel.shape)
    dcols = d2 @ kernel.reshape(-1, cout).T
    return _col2im(dcols, x.shape), dk, d2.sum(axis=0)


def bn_forward_train(x, gamma, beta):
    mu = x.mean(axis=(0, 1, 2))
    var = x.var(axis=(0, 1, 2))
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mu) * inv
    return gamma * xhat + beta, (xhat, inv, mu, var)


def bn_backward(dy, gamma, bn_cache):
    xhat, inv, _, _ = bn_cache
    m = dy.shape[0] * dy.shape[1] * dy.shape[2]
    dgamma = np.sum(dy * xhat, axis=(0, 1, 2))
    dbeta = np.sum(dy, axis=(0, 1, 2))
    dxhat = dy * gamma
    dx = inv / m * (m * dxhat - dxhat.sum(axis=(0, 1, 2)) - xhat * np.sum(dxhat * xhat, axis=(0, 1, 2)))
    return dx, dgamma, dbeta


# --------------------------------------------------------------------- weights

@dataclass
class DenoiserWeights:
    """Per-layer kernels ``(3, 3, c_in, c_out)`` plus bias or BN parameters.

    Layers with batch normalisation carry no convolution bias (it would be
    cancelled by the mean subtraction); ``biases[l]`` is then ``None``.
    """

    kernels: list
    biases: list
    gammas: list
    betas: list
    running_mean: list
    running_var: list
    use_bn: bool = True

    @property
    def depth(self) -> int:
        return len(self.kernels)

    @property
    def channels(self) -> int:
        return self.kernels[0].shape[-1]

    @classmethod
    def init(cls, depth=5, channels=64, use_bn=True, seed=0):
        if depth < 2:
            raise ValueError("denoiser needs at least two layers")
        rng = np.random.default_rng(seed)
        widths = [1] + [channels] * (depth - 1) + [1]
        kernels, biases, gammas, betas, rmean, rvar = [], [], [], [], [], []
        for layer in range(depth):
            cin, cout = widths[layer], widths[layer + 1]
            kernels.append(rng.normal(0.0, np.sqrt(2.0 / (9 * cin)), size=(3, 3, cin, cout)))
            bn = use_bn and 0 < layer < depth - 1
            biases.append(None if bn else np.zeros(cout))
            gammas.append(np.ones(cout) if bn else None)
            betas.append(np.zeros(cout) if bn else None)
            rmean.append(np.zeros(cout) if bn else None)
            rvar.append(np.ones(cout) if bn else None)
        return cls(kernels, biases, gammas, betas, rmean, rvar, use_bn)

    @classmethod
    def zeros(cls, depth=5, channels=64, use_bn=True):
        w = cls.init(depth, channels, use_bn)
        for k in w.kernels:
            k[...] = 0.0
        return w

    def has_bn(self, layer: int) -> bool:
        return self.gammas[layer] is not None

    def params(self) -> dict:
        """Trainable arrays keyed by name (views, not copies)."""
        out = {}
        for layer in range(self.depth):
            out[f"kernel{layer}"] = self.kernels[layer]
            if self.biases[layer] is not None:
                out[f"bias{layer}"] = self.biases[layer]
            if self.has_bn(layer):
                out[f"gamma{layer}"] = self.gammas[layer]
                out[f"beta{layer}"] = self.betas[layer]
        return out

    def buffers(self) -> dict:
        out = {}
        for layer in range(self.depth):
            if self.has_bn(layer):
                out[f"running_mean{layer}"] = self.running_mean[layer]
                out[f"running_var{layer}"] = self.running_var[layer]
        return out

    def copy(self) -> "DenoiserWeights":
        return copy.deepcopy(self)


@dataclass
class ActivationCache:
    inputs: list = field(default_factory=list)      # conv inputs per layer
    cols: list = field(default_factory=list)        # im2col patches (training only)
    pre_relu: list = field(default_factory=list)    # pre-activation per layer (None for last)
    bn: list = field(default_factory=list)          # BN caches (None if no BN)
    shape: tuple = ()
    training: bool = True
    weights_id: int = 0


def denoiser_forward(w: DenoiserWeights, chi, training: bool = False, update_stats: bool = True):
    """Apply ``V_w`` to an image batch ``(B, n, n)`` (or a single ``(n, n)`` image).

    Returns ``(output, cache)``.  In training mode batch statistics drive BN
    and the running statistics are updated in place unless ``update_stats`` is
    false.
    """
    x = np.asarray(chi, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[1] != x.shape[2]:
        raise ValueError(f"expected square images (B, n, n), got shape {np.shape(chi)}")
    cache = ActivationCache(shape=x.shape, training=training, weights_id=id(w))
    h = x[..., None]
    if w.kernels[0].shape[2] != 1:
        raise ValueError("first layer must take a single channel")
    for layer in range(w.depth):
        cache.inputs.append(h)
        if training:
            a, cols = conv_forward(h, w.kernels[layer], w.biases[layer], return_cols=True)
            cache.cols.append(cols)
        else:
            a = conv_forward(h, w.kernels[layer], w.biases[layer])
        bc = None
        if w.has_bn(layer):
            if training:
                a, bc = bn_forward_train(a, w.gammas[layer], w.betas[layer])
                if update_stats:
                    m = a.shape[0] * a.shape[1] * a.shape[2]
                    unbiased = bc[3] * m / max(m - 1, 1)
                    w.running_mean[layer] *= 1 - BN_MOMENTUM
                    w.running_mean[layer] += BN_MOMENTUM * bc[2]
                    w.running_var[layer] *= 1 - BN_MOMENTUM
                    w.running_var[layer] += BN_MOMENTUM * unbiased
            else:
                inv = 1.0 / np.sqrt(w.running_var[layer] + BN_EPS)
                a = w.gammas[layer] * (a - w.running_mean[layer]) * inv + w.betas[layer]
        cache.bn.append(bc)
        if layer < w.depth - 1:
            cache.pre_relu.append(a)
            h = np.maximum(a, 0.0)
        else:
            cache.pre_relu.append(None)
            h = a
    out = x - h[..., 0]
    return (out[0] if single else out), cache


def denoiser_backward(w: DenoiserWeights, cache: ActivationCache, upstream):
    """Reverse-mode gradients of ``sum(upstream * V_w(x))``.

    Returns ``(dx, grads)`` with ``grads`` keyed like :meth:`DenoiserWeights.params`.
    """
    if not cache.training:
        raise ValueError("backward pass needs a cache from a training-mode forward call")
    if cache.weights_id != id(w) or len(cache.inputs) != w.depth:
        raise ValueError("activation cache does not belong to these weights")
    g = np.asarray(upstream, dtype=float)
    if g.ndim == 2:
        g = g[None]
    if g.shape != cache.shape:
        raise ValueError(f"upstream shape {g.shape} does not match cache {cache.shape}")
    grads = {}
    dx_direct = g.copy()
    dh = -g[..., None]
    for layer in reversed(range(w.depth)):
        if layer < w.depth - 1:
            dh = dh * (cache.pre_relu[layer] > 0)
        if w.has_bn(layer):
            dh, dgam, dbet = bn_backward(dh, w.gammas[layer], cache.bn[layer])
            grads[f"gamma{layer}"] = dgam
            grads[f"beta{layer}"] = dbet
        dh, dk, db = conv_backward(dh, cache.inputs[layer], w.kernels[layer], cache.cols[layer])
        grads[f"kernel{layer}"] = dk
        if w.biases[layer] is not None:
            grads[f"bias{layer}"] = db
    dx = dx_direct + dh[..., 0]
    if np.asarray(upstream).ndim == 2:
        dx = dx[0]
    return dx, grads


# ----------------------------------------------------------------------- model

@dataclass
class LmnModel:
    """Shared denoiser, trainable ``lam = exp(rho)`` and the unroll depth.

    ``op_scale`` divides the Born operator and the data so that the normal
    matrix has unit spectral norm (``lam`` is then relative to it);
    ``chi0_scale`` multiplies the initial back-projection.
    """

    weights: DenoiserWeights
    rho: float = float(np.log(0.05))
    unroll: int = 5
    op_scale: float = 1.0
    chi0_scale: float = 1.0

    def __post_init__(self):
        if not 1 <= self.unroll <= 10:
            raise ValueError(f"unroll depth must be in [1, 10], got {self.unroll}")

    @property
    def lam(self) -> float:
        return float(np.exp(self.rho))

    @classmethod
    def create(cls, depth=5, channels=64, unroll=5, use_bn=True, seed=0, lam=0.05):
        return cls(DenoiserWeights.init(depth, channels, use_bn, seed), float(np.log(lam)), unroll)

    def calibrate(self, A: BornOperator, data_batch):
        """Fix ``op_scale`` from ``A`` and ``chi0_scale`` from training data."""
        self.op_scale = float(np.sqrt(A.normal_norm))
        An = A.scaled(1.0 / self.op_scale)
        y = _as_batch(data_batch, An)[0] / self.op_scale
        back = born_adjoint(An, y)
        p95 = float(np.percentile(np.abs(back), 95))
        self.chi0_scale = 1.0 / p95 if p95 > 0 else 1.0
        return self

    def normalized(self, A: BornOperator, data):
        y, single = _as_batch(data, A)
        return A.scaled(1.0 / self.op_scale), y / self.op_scale, single

    def copy(self) -> "LmnModel":
        return copy.deepcopy(self)


def _as_batch(data, A):
    if isinstance(data, ScatteredData):
        data = data.vector
    elif isinstance(data, (list, tuple)):
        data = np.stack([d.vector if isinstance(d, ScatteredData) else np.asarray(d) for d in data], axis=1)
    y = np.asarray(data, dtype=complex)
    if y.shape[0] != A.shape[0]:
        raise ValueError(f"data length {y.shape[0]} does not match operator rows {A.shape[0]}")
    single = y.ndim == 1
    return (y[:, None] if single else y), single


@dataclass
class UnrolledPass:
    """Everything the backward sweep needs from one unrolled forward pass."""

    chis: list            # chi_0 .. chi_K, each (N, B)
    zs: list              # Z_0 .. Z_{K-1}, each (N, B)
    caches: list          # denoiser caches per iteration
    reports: list
    operator: BornOperator
    data: np.ndarray


def unrolled_forward(model: LmnModel, A: BornOperator, data, training=False,
                     tol=1e-8, max_iter=200, update_stats=True) -> UnrolledPass:
    An, y, _ = model.normalized(A, data)
    n = A.grid.n
    B = y.shape[1]
    chi = model.chi0_scale * born_adjoint(An, y)
    lam = model.lam
    out = UnrolledPass([chi], [], [], [], An, y)
    for it in range(model.unroll):
        img = chi.T.reshape(B, n, n)
        z_img, cache = denoiser_forward(model.weights, img, training=training, update_stats=update_stats)
        z = z_img.reshape(B, n * n).T
        chi, report = cg_solve_normal(An, lam, y, z, tol=tol, max_iter=max_iter)
        if not report.converged:
            raise ConvergenceError(f"data-consistency CG failed at iteration {it} "
                                   f"(residual {report.final_residual:.2e})", it, report.final_residual)
        out.zs.append(z)
        out.caches.append(cache)
        out.chis.append(chi)
        out.reports.append(report)
    return out


def lmn_infer(model: LmnModel, A: BornOperator, data, project: bool = True,
              chi_max: float = CHI_MAX, tol: float = 1e-8, max_iter: int = 200):
    """Reconstruct contrast from scattered data.

    Returns ``(result, trace)`` where ``trace`` lists ``chi_0 .. chi_K``.  For a
    single data vector the result is a :class:`ContrastMap` when ``project``
    is set and a raw vector otherwise; batches give ``(N, B)`` arrays.
    """
    _, single = _as_batch(data, A)
    run = unrolled_forward(model, A, data, training=False, tol=tol, max_iter=max_iter)
    chi = run.chis[-1]
    if project:
        chi = project_physical(chi, chi_max)
    trace = [c[:, 0] for c in run.chis] if single else run.chis
    if single:
        chi = chi[:, 0]
        return (ContrastMap(A.grid, chi) if project else chi), trace
    return chi, trace
