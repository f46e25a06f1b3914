"""Test-time support scaling with label semantics.

Per class, the K support representations and K copies of the class's
label representation form a candidate set. A Gaussian mixture with one
isotropic component per candidate (means initialized at the candidates)
is fitted by EM, and each support is then replaced by the weight-fused
convex combination of itself and the label representation, using the
fitted mixture weights. Query and label representations are untouched.

Densities are evaluated in log-space with max subtraction throughout.
The mixture covariance is per-component isotropic sigma^2 I with a
floor: a full covariance over 2K points in d >> 2K dimensions would be
rank-deficient, and the fusion only consumes weights. Responsibilities
are the standard mixture posteriors gamma_ik over all components, the
only reading under which the gamma-weighted M-step updates are
coherent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import ConfigError, EmbeddedEpisode

VARIANCE_MODES = ("isotropic-updated", "fixed")
FUSION_MODES = ("paired", "pooled")


@dataclass(frozen=True)
class ScalerConfig:
    max_iter: int = 50
    ll_tolerance: float = 1e-6
    init_variance: float = 1.0
    var_floor: float = 1e-4
    variance_mode: str = "isotropic-updated"
    fusion: str = "paired"

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        if min(self.ll_tolerance, self.init_variance, self.var_floor) <= 0:
            raise ConfigError("tolerances and variances must be positive")
        if self.init_variance < self.var_floor:
            raise ConfigError("init_variance must not be below var_floor")
        if self.variance_mode not in VARIANCE_MODES:
            raise ConfigError(f"variance_mode must be one of {VARIANCE_MODES}")
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"fusion must be one of {FUSION_MODES}")


@dataclass
class CandidateSet:
    """2K candidate vectors: K supports then K label copies."""

    vectors: np.ndarray  # (2K, d)
    k_shot: int

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def build_candidate_set(support_reps: np.ndarray, label_rep: np.ndarray
                        ) -> CandidateSet:
    """Stack supports with K copies of the label representation."""
    sup = np.array(support_reps, dtype=np.float64)
    lab = np.asarray(label_rep, dtype=np.float64)
    if sup.ndim != 2 or sup.shape[0] < 1:
        raise ValueError("support_reps must be a (K, d) array with K >= 1")
    if lab.shape != (sup.shape[1],):
        raise ValueError("label dimension does not match supports")
    k = sup.shape[0]
    return CandidateSet(np.vstack([sup, np.tile(lab, (k, 1))]), k)


@dataclass
class GmmState:
    """Mixture parameters plus the fit's log-likelihood trace."""

    means: np.ndarray        # (n, d)
    variances: np.ndarray    # (n,) isotropic per component
    weights: np.ndarray      # (n,) nonnegative, sums to 1
    log_likelihoods: list[float] = field(default_factory=list)


def _log_densities(points: np.ndarray, state: GmmState) -> np.ndarray:
    """(n_points, n_components) log N(x_i | mu_k, sigma_k^2 I)."""
    d = points.shape[1]
    sq = ((points[:, None, :] - state.means[None, :, :]) ** 2).sum(axis=2)
    return -0.5 * (d * np.log(2.0 * np.pi * state.variances)[None, :]
                   + sq / state.variances[None, :])


def _posteriors(cands: CandidateSet, state: GmmState
                ) -> tuple[np.ndarray, float]:
    """Responsibilities and the total data log-likelihood."""
    logj = _log_densities(cands.vectors, state) + np.log(state.weights)[None, :]
    m = logj.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(logj - m).sum(axis=1, keepdims=True))
    return np.exp(logj - lse), float(lse.sum())


def e_step(cands: CandidateSet, state: GmmState) -> np.ndarray:
    """Posterior P(z_i = k | s_i): row-stochastic responsibilities."""
    return _posteriors(cands, state)[0]


def m_step(cands: CandidateSet, responsibilities: np.ndarray,
           config: ScalerConfig, state: GmmState) -> GmmState:
    """Weighted-mean/variance updates from responsibilities.

    A component whose total responsibility falls below 1e-12 keeps its
    previous mean and takes the variance floor. In "fixed" variance
    mode only means and weights move.
    """
    x = cands.vectors
    n, d = x.shape
    resp = np.asarray(responsibilities, dtype=np.float64)
    if resp.shape != (n, n):
        raise ValueError("responsibilities must be square over the candidates")
    total = resp.sum(axis=0)                       # (n,)
    weights = total / n
    alive = total >= 1e-12
    means = state.means.copy()
    safe_total = np.where(alive, total, 1.0)
    means[alive] = (resp.T @ x)[alive] / safe_total[alive, None]
    if config.variance_mode == "isotropic-updated":
        sq = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)  # (n, n)
        variances = np.maximum(
            config.var_floor, (resp * sq).sum(axis=0) / (d * safe_total))
        variances[~alive] = config.var_floor
    else:
        variances = state.variances.copy()
        variances[~alive] = config.var_floor
    return GmmState(means, variances, weights,
                    list(state.log_likelihoods))


def em_fit(cands: CandidateSet, config: ScalerConfig) -> GmmState:
    """Fit the per-candidate mixture: means start at the candidates,
    uniform weights, init_variance everywhere; iterate until the
    log-likelihood improves by less than ll_tolerance or max_iter."""
    n = cands.vectors.shape[0]
    if n < 2:
        raise ValueError("need at least two candidates")
    state = GmmState(
        means=cands.vectors.copy(),
        variances=np.full(n, float(config.init_variance)),
        weights=np.full(n, 1.0 / n),
    )
    resp, ll = _posteriors(cands, state)
    state.log_likelihoods.append(ll)
    for _ in range(config.max_iter):
        state = m_step(cands, resp, config, state)
        resp, ll = _posteriors(cands, state)
        state.log_likelihoods.append(ll)
        if state.log_likelihoods[-1] - state.log_likelihoods[-2] < config.ll_tolerance:
            break
    return state


def fuse(s_i: np.ndarray, label_rep: np.ndarray, w_i: float, w_label: float
         ) -> np.ndarray:
    """Weight-normalized convex combination of a support and its label."""
    if w_i < 0 or w_label < 0:
        raise ValueError("fusion weights must be nonnegative")
    total = w_i + w_label
    if total <= 0:
        raise ValueError("at least one fusion weight must be positive")
    return (w_i * np.asarray(s_i, dtype=np.float64)
            + w_label * np.asarray(label_rep, dtype=np.float64)) / total


def scale_support_set(episode: EmbeddedEpisode, config: ScalerConfig
                      ) -> EmbeddedEpisode:
    """Scale every class's supports toward its label representation.

    Classes are independent. In "paired" fusion, support i uses its own
    component weight and the weight of label copy K+i; "pooled" fuses
    every support with the summed label-copy weight.
    """
    n, k, _ = episode.support_reps.shape
    scaled = np.empty_like(episode.support_reps)
    for slot in range(n):
        sup = episode.support_reps[slot]
        lab = episode.label_reps[slot]
        state = em_fit(build_candidate_set(sup, lab), config)
        w = state.weights
        pooled = w[k:].sum()
        for i in range(k):
            w_label = w[k + i] if config.fusion == "paired" else pooled
            scaled[slot, i] = fuse(sup[i], lab, w[i], w_label)
    return EmbeddedEpisode(scaled, episode.query_reps.copy(),
                           episode.label_reps.copy(), episode.class_names)
