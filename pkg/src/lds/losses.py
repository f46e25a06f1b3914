"""Training objectives with analytic gradients.

All similarity here is the raw inner product (classification elsewhere
uses cosine; the two deliberately differ). Softmax-style expressions
are evaluated in log-space with max subtraction.

The sample/label loss uses the per-class deduplicated form: every
sample of a class shares one label vector, and in an N-way episode each
class contributes the same number of samples, so summing the repeated
identical exp terms in numerator and denominator cancels exactly
(test suite carries the equivalence check).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError

LOSS_KINDS = ("lg", "lg_label", "ce")


@dataclass(frozen=True)
class LossConfig:
    temperature: float = 0.1
    kind: str = "lg_label"

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"loss kind must be one of {LOSS_KINDS}")


@dataclass
class LossResult:
    """Scalar loss plus gradients for the two vector groups.

    grad_v pairs with the first argument (sample or query vectors),
    grad_u with the second (label vectors or prototypes).
    """

    value: float
    grad_v: np.ndarray
    grad_u: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise FloatingPointError("loss value is not finite")


def _check_tau(tau: float) -> float:
    if tau <= 0:
        raise ValueError("temperature must be positive")
    return float(tau)


def _log_softmax_rows(z: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss_lg(v: np.ndarray, class_ids, u: np.ndarray, tau: float) -> LossResult:
    """Sample-to-label pull: mean cross-entropy of the inner-product
    softmax of each sample against the episode's label vectors.

    v: (c, d) batch of sample vectors, class_ids: (c,) slot of each
    sample in u, u: (N, d) per-class label vectors.
    """
    tau = _check_tau(tau)
    v = np.asarray(v, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    y = np.asarray(class_ids, dtype=np.intp)
    c = v.shape[0]
    if c == 0:
        raise ValueError("batch is empty")
    if v.shape[1] != u.shape[1]:
        raise ValueError("dimension mismatch between samples and labels")
    if y.shape != (c,) or y.min() < 0 or y.max() >= u.shape[0]:
        raise ValueError("class ids must index the label vectors")

    logp = _log_softmax_rows(v @ u.T / tau)
    value = -logp[np.arange(c), y].mean()
    g = np.exp(logp)
    g[np.arange(c), y] -= 1.0
    g /= c * tau
    return LossResult(value, g @ u, g.T @ v)


def loss_label(u: np.ndarray, tau: float) -> LossResult:
    """Label-to-label spread with the self-pair kept in the numerator,
    exactly as defined: -mean_i log softmax_j(u_i . u_j / tau) at j=i."""
    tau = _check_tau(tau)
    u = np.asarray(u, dtype=np.float64)
    n = u.shape[0]
    if n < 1:
        raise ValueError("need at least one label vector")
    z = u @ u.T / tau
    logp = _log_softmax_rows(z)
    value = -np.diag(logp).mean()
    g = (np.exp(logp) - np.eye(n)) / n
    # z is quadratic in u: dL/dU = (G + G^T) U / tau, diagonal included
    return LossResult(value, np.zeros((0, u.shape[1])), (g + g.T) @ u / tau)


def loss_all(v: np.ndarray, class_ids, u: np.ndarray, tau: float) -> LossResult:
    """Sum of the sample-label and label-label losses."""
    lg = loss_lg(v, class_ids, u, tau)
    lab = loss_label(u, tau)
    return LossResult(lg.value + lab.value, lg.grad_v, lg.grad_u + lab.grad_u)


def _cosine_parts(a: np.ndarray, b: np.ndarray):
    an = np.linalg.norm(a, axis=1, keepdims=True)
    bn = np.linalg.norm(b, axis=1, keepdims=True)
    if np.any(an == 0) or np.any(bn == 0):
        raise ValueError("cosine similarity undefined for zero vectors")
    return (a @ b.T) / (an * bn.T), an, bn


def loss_ce(query: np.ndarray, query_ids, prototypes: np.ndarray,
            tau: float) -> LossResult:
    """Cross-entropy baseline over the cosine-softmax classification of
    query vectors against prototypes; gradients flow to both."""
    tau = _check_tau(tau)
    q = np.asarray(query, dtype=np.float64)
    p = np.asarray(prototypes, dtype=np.float64)
    y = np.asarray(query_ids, dtype=np.intp)
    m = q.shape[0]
    if m == 0:
        raise ValueError("no query vectors")
    if q.shape[1] != p.shape[1]:
        raise ValueError("dimension mismatch between queries and prototypes")

    s, qn, pn = _cosine_parts(q, p)
    logp = _log_softmax_rows(s / tau)
    value = -logp[np.arange(m), y].mean()
    g = np.exp(logp)
    g[np.arange(m), y] -= 1.0
    g /= m * tau
    # dS_tk/dq_t = p_k/(|q||p|) - S_tk q_t/|q|^2, and symmetrically for p_k
    grad_q = (g / (qn * pn.T)) @ p - ((g * s).sum(axis=1, keepdims=True)) * q / qn**2
    grad_p = (g / (qn * pn.T)).T @ q - ((g * s).sum(axis=0)[:, None]) * p / pn**2
    return LossResult(value, grad_q, grad_p)


def finite_diff_check(fn, inputs, h: float = 1e-4) -> float:
    """Central-difference audit of analytic gradients.

    fn(*inputs) must return (value, grads) with one gradient array per
    input. Returns the max over all coordinates of
    |analytic - numeric| / max(1, |numeric|). Inputs are perturbed in
    place and restored.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    inputs = [np.ascontiguousarray(a, dtype=np.float64) for a in inputs]
    _, grads = fn(*inputs)
    worst = 0.0
    for arr, grad in zip(inputs, grads):
        flat = arr.ravel()
        gflat = np.asarray(grad).ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = fn(*inputs)[0]
            flat[i] = orig - h
            f_minus = fn(*inputs)[0]
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = abs(gflat[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
