"""Dense float64 numerics: Adam, sliced softmax cross-entropy, gradient oracle.

Matrices are plain C-contiguous float64 numpy arrays throughout the
package; this module owns the optimizer step, the loss used by every
training procedure, and the finite-difference check that every gradient
path is verified against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, NumericError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    """Per-tensor Adam moments. One instance per parameter tensor, shared
    by every task that updates the tensor, so moments accumulate across
    tasks touching a shared module."""

    m: np.ndarray
    v: np.ndarray
    lr: float
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_param(cls, param: np.ndarray, lr: float) -> "AdamState":
        if lr <= 0:
            raise InputError(f"lr must be positive, got {lr}")
        return cls(m=np.zeros_like(param), v=np.zeros_like(param), lr=lr)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState):
    """One Adam update with bias correction; returns (new_params, new_state).

    Pure: inputs are never mutated. An identically-zero gradient tensor is
    a fixed point regardless of accumulated moments (the step counter still
    advances); with nonzero moments a plain Adam step would drift the
    parameter, which must not happen for tensors a batch did not touch.
    """
    if params.shape != grads.shape:
        raise InputError(f"param/grad shape mismatch: {params.shape} vs {grads.shape}")
    if state.m.shape != params.shape or state.v.shape != params.shape:
        raise InputError("Adam state shape does not match parameter shape")
    t = state.step + 1
    if not np.any(grads):
        new_state = AdamState(m=state.m.copy(), v=state.v.copy(), lr=state.lr,
                              step=t, beta1=state.beta1, beta2=state.beta2, eps=state.eps)
        return params.copy(), new_state
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m=m, v=v, lr=state.lr, step=t,
                          beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    return new_params, new_state


def softmax_xent_slice(logits: np.ndarray, labels: np.ndarray, sl: tuple[int, int]):
    """Mean cross-entropy with softmax restricted to output columns [start, end).

    Labels are slice-local (0 .. end-start-1). Returns (loss, dlogits)
    where dlogits has the full logits shape, is (softmax - onehot)/n inside
    the slice and exactly zero outside, so no other task's output neurons
    ever receive gradient.
    """
    start, end = sl
    n, c_total = logits.shape
    if not (0 <= start < end <= c_total):
        raise InputError(f"slice [{start},{end}) out of range for {c_total} columns")
    labels = np.asarray(labels)
    width = end - start
    if labels.shape != (n,):
        raise InputError(f"labels must have shape ({n},), got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= width):
        raise InputError(f"labels must lie in [0,{width}) for slice [{start},{end})")

    z = logits[:, start:end]
    z = z - z.max(axis=1, keepdims=True)
    expz = np.exp(z)
    p = expz / expz.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    # log-softmax evaluated directly for numerical honesty at saturation
    logp = z - np.log(expz.sum(axis=1, keepdims=True))
    loss = -logp[rows, labels].mean()

    dslice = p.copy()
    dslice[rows, labels] -= 1.0
    dslice /= n
    dlogits = np.zeros_like(logits)
    dlogits[:, start:end] = dslice
    return float(loss), dlogits


def finite_diff_check(
    f: Callable[[Sequence[np.ndarray]], float],
    params: Sequence[np.ndarray] | np.ndarray,
    analytic_grads: Sequence[np.ndarray] | np.ndarray,
    h: float = 1e-5,
) -> float:
    """Max relative error between central differences of f and analytic grads.

    `params` is one array or a list of arrays; f is called with the (possibly
    perturbed) list. Relative error per element uses denominator
    max(|analytic|, |numeric|, 1e-8). The perturbation loop is the oracle:
    it never calls any backward code.
    """
    single = isinstance(params, np.ndarray)
    plist = [params] if single else list(params)
    glist = [analytic_grads] if single else list(analytic_grads)
    if len(plist) != len(glist):
        raise InputError("params and analytic_grads must pair up")
    work = [p.astype(np.float64).copy() for p in plist]
    worst = 0.0
    for k, (p, g) in enumerate(zip(work, glist)):
        if p.shape != np.asarray(g).shape:
            raise InputError(f"grad {k} shape {np.asarray(g).shape} != param shape {p.shape}")
        flat = p.reshape(-1)
        gflat = np.asarray(g, dtype=np.float64).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = f(work)
            flat[i] = orig - h
            f_minus = f(work)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError("non-finite loss during finite differencing")
            num = (f_plus - f_minus) / (2.0 * h)
            denom = max(abs(num), abs(gflat[i]), 1e-8)
            worst = max(worst, abs(num - gflat[i]) / denom)
    return worst
