"""Optimizers: Adadelta with lazy sparse-row state, and dense Adam.

Adadelta keeps two accumulators per parameter, E[g^2] and E[dx^2], both
zero-initialized.  For embedding matrices only rows touched by a gradient are
updated; untouched rows keep their stale accumulators, which is the standard
lazy treatment for sparse gradients.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .errors import ShapeMismatch


class AdadeltaState:
    """Accumulator pair (E[g^2], E[dx^2]) per named parameter array."""

    def __init__(self, arrays: Mapping[str, np.ndarray]):
        self.sq_grad = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.sq_delta = {k: np.zeros_like(v) for k, v in arrays.items()}

    def pair(self, name: str):
        return self.sq_grad[name], self.sq_delta[name]


def _adadelta_apply(theta, eg2, edx2, grad, rho, eps):
    # One Adadelta step on a slice; mutates all three arrays in place.
    eg2 *= rho
    eg2 += (1.0 - rho) * grad * grad
    delta = -np.sqrt(edx2 + eps) / np.sqrt(eg2 + eps) * grad
    theta += delta
    edx2 *= rho
    edx2 += (1.0 - rho) * delta * delta


def adadelta_update_dense(theta: np.ndarray, state: AdadeltaState, name: str,
                          grad: np.ndarray, rho: float, eps: float):
    if grad.shape != theta.shape:
        raise ShapeMismatch(f"{name}: gradient {grad.shape} vs parameter {theta.shape}")
    eg2, edx2 = state.pair(name)
    _adadelta_apply(theta, eg2, edx2, grad, rho, eps)


def adadelta_update_rows(theta: np.ndarray, state: AdadeltaState, name: str,
                         row_grads: Mapping[int, np.ndarray], rho: float, eps: float):
    eg2, edx2 = state.pair(name)
    for i, grad in row_grads.items():
        if grad.shape != theta[i].shape:
            raise ShapeMismatch(f"{name}[{i}]: gradient {grad.shape} vs row {theta[i].shape}")
        _adadelta_apply(theta[i], eg2[i], edx2[i], grad, rho, eps)


class Adam(object):
    """Dense Adam with bias correction (defaults lr=1e-3, 0.9/0.999, eps=1e-8)."""

    def __init__(self, arrays: Mapping[str, np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in arrays.items()}

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, grad in grads.items():
            theta = params[name]
            if grad.shape != theta.shape:
                raise ShapeMismatch(
                    f"{name}: gradient {grad.shape} vs parameter {theta.shape}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            theta -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
