"""Per-episode classification heads.

Prototypical scoring uses cosine similarity with a temperature (the
argmax prediction is invariant to it; configured so the cross-entropy
baseline can train). The ridge head solves the dual closed form
W = X^T (X X^T + lam I)^{-1} Y, which also covers lam = 0 whenever
X X^T is invertible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Prototypes:
    vectors: np.ndarray          # (N, d)
    class_names: tuple[str, ...]


def compute_prototypes(support_reps: np.ndarray, class_names=None) -> Prototypes:
    """Per-class mean of the (N, K, d) support representations."""
    sup = np.asarray(support_reps, dtype=np.float64)
    if sup.ndim != 3:
        raise ValueError("support_reps must be (N, K, d)")
    vectors = sup.mean(axis=1)
    if class_names is None:
        class_names = tuple(str(i) for i in range(sup.shape[0]))
    return Prototypes(vectors, tuple(class_names))


def cosine_similarities(queries: np.ndarray, refs: np.ndarray) -> np.ndarray:
    """(m, n) cosine matrix; raises on zero-norm rows."""
    qn = np.linalg.norm(queries, axis=1, keepdims=True)
    rn = np.linalg.norm(refs, axis=1, keepdims=True)
    if np.any(qn == 0) or np.any(rn == 0):
        raise ValueError("cosine similarity undefined for zero vectors")
    return (queries @ refs.T) / (qn * rn.T)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def pn_probabilities(queries: np.ndarray, prototypes: Prototypes,
                     tau: float = 0.1) -> np.ndarray:
    """Row-stochastic cosine-softmax scores for a (m, d) query batch."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    sims = cosine_similarities(np.asarray(queries, dtype=np.float64),
                               prototypes.vectors)
    return _softmax_rows(sims / tau)


def classify_pn(query: np.ndarray, prototypes: Prototypes,
                tau: float = 0.1) -> np.ndarray:
    """Class probabilities for a single query vector."""
    return pn_probabilities(np.asarray(query, dtype=np.float64)[None, :],
                            prototypes, tau)[0]


def predict(probabilities: np.ndarray) -> int:
    """Argmax class index; ties break to the lowest index."""
    probs = np.asarray(probabilities)
    if probs.size == 0:
        raise ValueError("empty probability vector")
    return int(np.argmax(probs))


@dataclass
class RidgeModel:
    weights: np.ndarray  # (d, N)
    lam: float


def rrml_fit(x: np.ndarray, y: np.ndarray, lam: float = 1.0) -> RidgeModel:
    """Closed-form ridge from supports to one-hot labels.

    x: (NK, d) support matrix, y: (NK, N) one-hot targets. Solves the
    dual form; equivalently W satisfies (X^T X + lam I) W = X^T Y.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("x must be (NK, d) and y (NK, N)")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    gram = x @ x.T + lam * np.eye(x.shape[0])
    try:
        alpha = np.linalg.solve(gram, y)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError(
            "singular support system; use lam > 0") from None
    return RidgeModel(x.T @ alpha, float(lam))


def rrml_scores(model: RidgeModel, queries: np.ndarray) -> np.ndarray:
    q = np.asarray(queries, dtype=np.float64)
    if q.shape[-1] != model.weights.shape[0]:
        raise ValueError("query dimension does not match the model")
    return q @ model.weights


def rrml_predict(model: RidgeModel, query: np.ndarray) -> np.ndarray:
    """Softmax over the ridge scores of a single query vector."""
    scores = rrml_scores(model, np.asarray(query, dtype=np.float64)[None, :])
    return _softmax_rows(scores)[0]
