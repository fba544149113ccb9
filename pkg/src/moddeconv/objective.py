"""Measurement loss F, coherence regularizer G, and their Wirtinger gradients.

F(h, x) is the squared residual of the rank-1 forward map against the
observations. G penalizes iterates whose norms or coherences exceed about
twice those of the ground truth through the hinge G0(z) = max(z-1, 0)^2:

    G = rho * [ G0(||h||^2/2d) + G0(||x||^2/2d)
                + sum_l G0(L |f_l^* h|^2 / 8 d mu2)
                + sum_{q,n} G0(QN |c_{q,n}^* x|^2 / 8 d nu2) ].

Gradients are with respect to the conjugated variables (the steepest-descent
direction of the underlying real parametrization); for any real-valued loss
here, the derivative along a direction delta is 2 Re <grad, delta>.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linop import apply_adjoint, apply_forward_rank1
from .signal_model import DimensionError, DomainError, MeasurementSet, ProblemInstance

__all__ = [
    "RegularizerParams",
    "GradientPair",
    "g0_penalty",
    "loss_F",
    "regularizer_G",
    "grad_F",
    "grad_G",
    "grad_F_via_adjoint",
    "loss_and_grad",
]


@dataclass(frozen=True)
class RegularizerParams:
    """Scale estimate d, weight rho, and target coherences."""

    rho: float
    d: float
    mu2: float
    nu2: float

    def __post_init__(self):
        if self.d <= 0:
            raise DomainError("d must be positive")
        if self.rho < 0:
            raise DomainError("rho must be >= 0")
        if self.mu2 <= 0 or self.nu2 <= 0:
            raise DomainError("coherence targets must be positive")


@dataclass(frozen=True)
class GradientPair:
    grad_h: np.ndarray
    grad_x: np.ndarray

    def norm(self) -> float:
        return float(np.sqrt(np.linalg.norm(self.grad_h) ** 2
                             + np.linalg.norm(self.grad_x) ** 2))


def g0_penalty(z):
    """Hinge penalty: returns (max(z-1,0)^2, 2*max(z-1,0)).

    The derivative is taken one-sided at the kink z = 1 (value 0).
    """
    zp = np.maximum(np.asarray(z, dtype=float) - 1.0, 0.0)
    val = zp ** 2
    der = 2.0 * zp
    if np.isscalar(z) or np.ndim(z) == 0:
        return float(val), float(der)
    return val, der


def _residual_parts(instance, measurements, h, x):
    ghat = instance.transform.filter_spectrum(h)
    b = instance.transform.input_spectrum_scaled(instance.modulated_input(x))
    res = ghat[None, :] * b - measurements.blocks(instance.N)
    return ghat, b, res


def loss_F(instance: ProblemInstance, measurements: MeasurementSet, h, x) -> float:
    """F(h, x) = ||A(h, x) - yhat||_2^2 via the rank-1 fast path."""
    h, x = _as_vectors(instance, h, x)
    _, _, res = _residual_parts(instance, measurements, h, x)
    return float(np.linalg.norm(res) ** 2)


def _as_vectors(instance, h, x):
    h = np.asarray(h, dtype=complex)
    x = np.asarray(x, dtype=complex)
    if h.shape != (instance.M,) or x.shape != (instance.kn,):
        raise DimensionError("(h, x) shapes do not match the instance")
    return h, x


def _reg_terms(params, instance, ghat, sx, h, x):
    d, mu2, nu2 = params.d, params.mu2, params.nu2
    L, Q, N = instance.L, instance.Q, instance.N
    zn_h = float(np.linalg.norm(h) ** 2) / (2 * d)
    zn_x = float(np.linalg.norm(x) ** 2) / (2 * d)
    zh = L * np.abs(ghat) ** 2 / (8 * d * mu2)
    zx = Q * N * np.abs(sx) ** 2 / (8 * d * nu2)
    return zn_h, zn_x, zh, zx


def regularizer_G(params: RegularizerParams, instance: ProblemInstance, h, x) -> float:
    """G(h, x): rho-weighted hinge penalties on norms and coherences."""
    h, x = _as_vectors(instance, h, x)
    ghat = instance.transform.filter_spectrum(h)
    sx = instance.basis.apply(instance.x_blocks(x))
    zn_h, zn_x, zh, zx = _reg_terms(params, instance, ghat, sx, h, x)
    vh, _ = g0_penalty(zn_h)
    vx, _ = g0_penalty(zn_x)
    vzh, _ = g0_penalty(zh)
    vzx, _ = g0_penalty(zx)
    return float(params.rho * (vh + vx + np.sum(vzh) + np.sum(vzx)))


def grad_F(instance: ProblemInstance, measurements: MeasurementSet, h, x) -> GradientPair:
    """Wirtinger gradients of F with respect to conj(h) and conj(x)."""
    h, x = _as_vectors(instance, h, x)
    ghat, b, res = _residual_parts(instance, measurements, h, x)
    gh = instance.transform.filter_spectrum_adjoint(b.conj() * res).sum(axis=0)
    w = instance.transform.input_spectrum_scaled_adjoint(ghat.conj()[None, :] * res)
    gx = instance.basis.adjoint(instance.modulations.signs * w)
    return GradientPair(grad_h=gh, grad_x=gx.ravel())


def grad_G(params: RegularizerParams, instance: ProblemInstance, h, x) -> GradientPair:
    """Wirtinger gradients of G."""
    h, x = _as_vectors(instance, h, x)
    ghat = instance.transform.filter_spectrum(h)
    xb = instance.x_blocks(x)
    sx = instance.basis.apply(xb)
    zn_h, zn_x, zh, zx = _reg_terms(params, instance, ghat, sx, h, x)
    _, dh = g0_penalty(zn_h)
    _, dx = g0_penalty(zn_x)
    _, dzh = g0_penalty(zh)
    _, dzx = g0_penalty(zx)
    scale = params.rho / (2 * params.d)
    gh = scale * (dh * h + (instance.L / (4 * params.mu2))
                  * instance.transform.filter_spectrum_adjoint(dzh * ghat))
    gx_blocks = scale * (dx * xb + (instance.Q * instance.N / (4 * params.nu2))
                         * instance.basis.adjoint(dzx * sx))
    return GradientPair(grad_h=gh, grad_x=gx_blocks.ravel())


def grad_F_via_adjoint(instance: ProblemInstance, measurements: MeasurementSet,
                       h, x) -> GradientPair:
    """grad_F computed through the lifted adjoint, A*(residual) paired with
    (x, h); used as an independent cross-check of the fast formulas."""
    h, x = _as_vectors(instance, h, x)
    res = apply_forward_rank1(instance, h, x) - measurements.yhat
    Ar = apply_adjoint(instance, res)
    gh = Ar @ x.conj()
    gx = Ar.T @ h.conj()
    return GradientPair(grad_h=gh, grad_x=gx)


def loss_and_grad(params: RegularizerParams | None, instance: ProblemInstance,
                  measurements: MeasurementSet, h, x) -> tuple:
    """(F + G, gradient pair) in one pass; params=None drops the regularizer."""
    h, x = _as_vectors(instance, h, x)
    ghat, b, res = _residual_parts(instance, measurements, h, x)
    total = float(np.linalg.norm(res) ** 2)
    gh = instance.transform.filter_spectrum_adjoint(b.conj() * res).sum(axis=0)
    w = instance.transform.input_spectrum_scaled_adjoint(ghat.conj()[None, :] * res)
    gx = instance.basis.adjoint(instance.modulations.signs * w)
    if params is not None and params.rho > 0:
        xb = instance.x_blocks(x)
        sx = instance.basis.apply(xb)
        zn_h, zn_x, zh, zx = _reg_terms(params, instance, ghat, sx, h, x)
        vh, dh = g0_penalty(zn_h)
        vx, dx = g0_penalty(zn_x)
        vzh, dzh = g0_penalty(zh)
        vzx, dzx = g0_penalty(zx)
        total += float(params.rho * (vh + vx + np.sum(vzh) + np.sum(vzx)))
        scale = params.rho / (2 * params.d)
        gh = gh + scale * (dh * h + (instance.L / (4 * params.mu2))
                           * instance.transform.filter_spectrum_adjoint(dzh * ghat))
        gx = gx + scale * (dx * xb + (instance.Q * instance.N / (4 * params.nu2))
                           * instance.basis.adjoint(dzx * sx))
    return total, GradientPair(grad_h=gh, grad_x=gx.ravel())
