"""Experiment harness: training loop, evaluation, ablation, metrics.

Training follows the episodic protocol: per episode, embed all support
and query samples plus the N label names, compute the configured loss
over the combined batch, and update the embedding table with Adam.
After each epoch the model is scored on a fixed set of validation
episodes and the best-validation parameters are kept.

Everything is deterministic in (config, seed): episode draws come from
named RNG streams keyed by (seed, stream, episode index), and gradient
reduction order is fixed.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (ClassSplit, ConfigError, DataError, Dataset, EmbeddedEpisode,
                   NumericalError, load_dataset, load_split, validate_split)
from .encoder import (EmbeddingStore, EncoderParams, PromptTemplate, Vocabulary,
                      encode_label, encode_text, encoder_backward,
                      load_checkpoint, load_embedding_store, save_checkpoint)
from .losses import LossConfig, loss_all, loss_ce, loss_lg
from .metalearners import (compute_prototypes, pn_probabilities, rrml_fit,
                           rrml_scores)
from .sampler import (STREAM_INIT, STREAM_TEST, STREAM_TRAIN, STREAM_VALID,
                      SamplerConfig, episode_rng, sample_episode)
from .scaler import ScalerConfig, scale_support_set

DEFAULT_TEMPLATE = "This is a [MASK] news: [sentence]"


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ConfigError("learning_rate and epsilon must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must be in [0, 1)")


@dataclass(frozen=True)
class MetaLearnerConfig:
    kind: str = "pn"
    ridge_lambda: float = 1.0
    temperature: float = 0.1

    def __post_init__(self):
        if self.kind not in ("pn", "rrml"):
            raise ConfigError("metalearner kind must be 'pn' or 'rrml'")
        if self.ridge_lambda < 0:
            raise ConfigError("ridge_lambda must be nonnegative")
        if self.temperature <= 0:
            raise ConfigError("classification temperature must be positive")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "trainable"
    dim: int = 32
    template: str = DEFAULT_TEMPLATE
    sample_store: str | None = None
    label_store: str | None = None

    def __post_init__(self):
        if self.kind not in ("trainable", "precomputed"):
            raise ConfigError("backend kind must be 'trainable' or 'precomputed'")
        if self.kind == "trainable":
            if self.dim < 1:
                raise ConfigError("backend dim must be positive")
            try:
                PromptTemplate(self.template)
            except ValueError as exc:
                raise ConfigError(str(exc))
        elif not (self.sample_store and self.label_store):
            raise ConfigError("precomputed backend needs sample_store and label_store")


@dataclass(frozen=True)
class RunConfig:
    n_way: int = 5
    k_shot: int = 1
    m_query: int = 5
    epochs: int = 30
    train_episodes: int = 100
    valid_episodes: int = 100
    test_episodes: int = 1000
    loss: LossConfig = field(default_factory=LossConfig)
    scaler_enabled: bool = True
    scaler_during_validation: bool = True
    scaler: ScalerConfig = field(default_factory=ScalerConfig)
    metalearner: MetaLearnerConfig = field(default_factory=MetaLearnerConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    dataset: str | None = None
    split: str | None = None
    checkpoint: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if min(self.train_episodes, self.valid_episodes, self.test_episodes) < 1:
            raise ConfigError("episode counts must be positive")
        SamplerConfig(self.n_way, self.k_shot, self.m_query, self.seed)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(self.n_way, self.k_shot, self.m_query, self.seed)


_SECTION_PARSERS = {
    "loss": (LossConfig, ("kind", "temperature")),
    "scaler": (ScalerConfig, ("max_iter", "ll_tolerance", "init_variance",
                              "var_floor", "variance_mode", "fusion")),
    "metalearner": (MetaLearnerConfig, ("kind", "ridge_lambda", "temperature")),
    "optimizer": (OptimizerConfig, ("learning_rate", "beta1", "beta2", "epsilon")),
    "backend": (BackendConfig, ("kind", "dim", "template", "sample_store",
                                "label_store")),
}

_TOP_KEYS = ("n_way", "k_shot", "m_query", "epochs", "train_episodes",
             "valid_episodes", "test_episodes", "loss", "scaler", "metalearner",
             "optimizer", "backend", "dataset", "split", "checkpoint", "seed")


def _parse_section(name: str, obj: dict, extra_bool_keys=()):
    cls, keys = _SECTION_PARSERS[name]
    allowed = set(keys) | set(extra_bool_keys)
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown {name} config keys: {sorted(unknown)}")
    kwargs = {k: obj[k] for k in keys if k in obj}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {name} config: {exc}")


def config_from_dict(obj: dict) -> RunConfig:
    """Build a RunConfig from a parsed JSON object (snake_case keys)."""
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(obj) - set(_TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key in ("n_way", "k_shot", "m_query", "epochs", "train_episodes",
                "valid_episodes", "test_episodes", "seed"):
        if key in obj:
            if not isinstance(obj[key], int) or isinstance(obj[key], bool):
                raise ConfigError(f"{key} must be an integer")
            kwargs[key] = obj[key]
    for key in ("dataset", "split", "checkpoint"):
        if key in obj and obj[key] is not None:
            if not isinstance(obj[key], str):
                raise ConfigError(f"{key} must be a string path")
            kwargs[key] = obj[key]
    if "loss" in obj:
        kwargs["loss"] = _parse_section("loss", dict(obj["loss"]))
    if "scaler" in obj:
        section = dict(obj["scaler"])
        kwargs["scaler_enabled"] = bool(section.pop("enabled", True))
        kwargs["scaler_during_validation"] = bool(
            section.pop("during_validation", True))
        kwargs["scaler"] = _parse_section("scaler", section)
    if "metalearner" in obj:
        kwargs["metalearner"] = _parse_section("metalearner",
                                               dict(obj["metalearner"]))
    if "optimizer" in obj:
        kwargs["optimizer"] = _parse_section("optimizer", dict(obj["optimizer"]))
    if "backend" in obj:
        kwargs["backend"] = _parse_section("backend", dict(obj["backend"]))
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc))


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON ({exc.msg})")
    return config_from_dict(obj)


# ---------------------------------------------------------------------------
# backends

class TrainableBackend:
    """Toy encoder state: vocabulary, embedding table, prompt template."""

    def __init__(self, vocab: Vocabulary, params: EncoderParams,
                 template: PromptTemplate):
        self.vocab = vocab
        self.params = params
        self.template = template

    @classmethod
    def init(cls, cfg: RunConfig, dataset: Dataset, split: ClassSplit
             ) -> "TrainableBackend":
        template = PromptTemplate(cfg.backend.template)
        train_texts = (dataset.samples[i].text
                       for cname in split.train_classes
                       for i in dataset.index[cname])
        vocab = Vocabulary.build(train_texts, dataset.class_names, template)
        rng = episode_rng(cfg.seed, STREAM_INIT, 0)
        params = EncoderParams.init(len(vocab), cfg.backend.dim, rng)
        return cls(vocab, params, template)

    def sample_tokens(self, dataset: Dataset, idx: int) -> list[int]:
        return self.vocab.tokenize(
            self.template.apply(dataset.samples[idx].text))

    def label_tokens(self, label_name: str) -> list[int]:
        ids = self.vocab.tokenize(label_name)
        if not ids:
            raise DataError(f"label {label_name!r} tokenizes to nothing")
        return ids

    def embed_with_tokens(self, dataset: Dataset, episode):
        """EmbeddedEpisode plus the token lists behind every vector,
        ordered supports class-major, then queries, then labels."""
        n, k, m = episode.n_way, episode.k_shot, episode.m_query
        d = self.params.dim
        sample_tokens = []
        sup = np.empty((n, k, d))
        qry = np.empty((n, m, d))
        for slot in range(n):
            for i, idx in enumerate(episode.support[slot]):
                ids = self.sample_tokens(dataset, idx)
                sample_tokens.append(ids)
                sup[slot, i] = encode_text(self.params, ids)
        for slot in range(n):
            for j, idx in enumerate(episode.query[slot]):
                ids = self.sample_tokens(dataset, idx)
                sample_tokens.append(ids)
                qry[slot, j] = encode_text(self.params, ids)
        label_tokens = [self.label_tokens(c) for c in episode.class_names]
        lab = np.stack([encode_text(self.params, ids) for ids in label_tokens])
        emb = EmbeddedEpisode(sup, qry, lab, tuple(episode.class_names))
        return emb, sample_tokens, label_tokens

    def embed(self, dataset: Dataset, episode) -> EmbeddedEpisode:
        return self.embed_with_tokens(dataset, episode)[0]


class PrecomputedBackend:
    """Embedding-store lookups: sample key is the dataset index as a
    decimal string, label key is the class name."""

    def __init__(self, sample_store: EmbeddingStore, label_store: EmbeddingStore):
        if sample_store.dim != label_store.dim:
            raise DataError("sample and label stores disagree on dimension")
        self.sample_store = sample_store
        self.label_store = label_store

    @classmethod
    def load(cls, cfg: BackendConfig) -> "PrecomputedBackend":
        return cls(load_embedding_store(cfg.sample_store),
                   load_embedding_store(cfg.label_store))

    def embed(self, dataset: Dataset, episode) -> EmbeddedEpisode:
        d = self.sample_store.dim
        n, k, m = episode.n_way, episode.k_shot, episode.m_query
        sup = np.empty((n, k, d))
        qry = np.empty((n, m, d))
        for slot in range(n):
            for i, idx in enumerate(episode.support[slot]):
                sup[slot, i] = self.sample_store[str(int(idx))]
            for j, idx in enumerate(episode.query[slot]):
                qry[slot, j] = self.sample_store[str(int(idx))]
        lab = np.stack([self.label_store[c] for c in episode.class_names])
        return EmbeddedEpisode(sup, qry, lab, tuple(episode.class_names))


def load_backend(cfg: RunConfig):
    """Evaluation-time backend from config: checkpoint or stores."""
    if cfg.backend.kind == "precomputed":
        return PrecomputedBackend.load(cfg.backend)
    if not cfg.checkpoint:
        raise ConfigError("trainable backend needs a checkpoint path for eval")
    params, vocab = load_checkpoint(cfg.checkpoint)
    return TrainableBackend(vocab, params, PromptTemplate(cfg.backend.template))


# ---------------------------------------------------------------------------
# metrics

@dataclass
class Metrics:
    accuracies: np.ndarray
    seconds: float

    def __post_init__(self):
        self.accuracies = np.asarray(self.accuracies, dtype=np.float64)

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std(self) -> float:
        if len(self.accuracies) < 2:
            return 0.0
        return float(self.accuracies.std(ddof=1))

    @property
    def count(self) -> int:
        return len(self.accuracies)

    def to_dict(self) -> dict:
        return {"kind": "metrics", "mean": self.mean, "std": self.std,
                "count": self.count, "seconds": self.seconds,
                "accuracies": self.accuracies.tolist()}


# ---------------------------------------------------------------------------
# optimizer

class Adam:
    """Adaptive-moment estimation over one dense parameter array."""

    def __init__(self, shape, cfg: OptimizerConfig):
        self.cfg = cfg
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        c = self.cfg
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1 - c.beta2) * grad * grad
        m_hat = self.m / (1 - c.beta1 ** self.t)
        v_hat = self.v / (1 - c.beta2 ** self.t)
        params -= c.learning_rate * m_hat / (np.sqrt(v_hat) + c.epsilon)


# ---------------------------------------------------------------------------
# episode-level pieces

def _episode_batch(emb: EmbeddedEpisode):
    """Flatten supports then queries (class-major) with class slots."""
    n, k, d = emb.support_reps.shape
    m = emb.query_reps.shape[1]
    v = np.vstack([emb.support_reps.reshape(n * k, d),
                   emb.query_reps.reshape(n * m, d)])
    ids = np.concatenate([np.repeat(np.arange(n), k),
                          np.repeat(np.arange(n), m)])
    return v, ids


def episode_loss_and_grads(emb: EmbeddedEpisode, loss_cfg: LossConfig):
    """Configured loss over the combined batch.

    Returns (value, grad_samples, grad_labels) with grad_samples in
    batch order (supports then queries, class-major).
    """
    n, k, d = emb.support_reps.shape
    m = emb.query_reps.shape[1]
    v, ids = _episode_batch(emb)
    tau = loss_cfg.temperature
    if loss_cfg.kind == "lg":
        res = loss_lg(v, ids, emb.label_reps, tau)
        return res.value, res.grad_v, res.grad_u
    if loss_cfg.kind == "lg_label":
        res = loss_all(v, ids, emb.label_reps, tau)
        return res.value, res.grad_v, res.grad_u
    # cross-entropy baseline: cosine-softmax over queries against the
    # support prototypes; prototype gradients chain back to supports
    protos = compute_prototypes(emb.support_reps, emb.class_names)
    nsup = n * k
    res = loss_ce(v[nsup:], ids[nsup:], protos.vectors, tau)
    grad_v = np.zeros_like(v)
    grad_v[nsup:] = res.grad_v
    grad_v[:nsup] = np.repeat(res.grad_u / k, k, axis=0)
    return res.value, grad_v, np.zeros_like(emb.label_reps)


def _episode_accuracy(emb: EmbeddedEpisode, cfg: RunConfig) -> float:
    n, k, d = emb.support_reps.shape
    m = emb.query_reps.shape[1]
    queries = emb.query_reps.reshape(n * m, d)
    truth = np.repeat(np.arange(n), m)
    if cfg.metalearner.kind == "pn":
        protos = compute_prototypes(emb.support_reps, emb.class_names)
        probs = pn_probabilities(queries, protos, cfg.metalearner.temperature)
        preds = np.argmax(probs, axis=1)
    else:
        x = emb.support_reps.reshape(n * k, d)
        y = np.eye(n)[np.repeat(np.arange(n), k)]
        model = rrml_fit(x, y, cfg.metalearner.ridge_lambda)
        preds = np.argmax(rrml_scores(model, queries), axis=1)
    return float(np.mean(preds == truth))


def _eval_pool(cfg: RunConfig, backend, dataset: Dataset, pool,
               stream: int, episodes: int, use_scaler: bool) -> Metrics:
    if len(pool) < cfg.n_way:
        raise DataError(
            f"evaluation pool has {len(pool)} classes, episodes need {cfg.n_way}")
    sampler_cfg = cfg.sampler_config()
    start = time.perf_counter()
    accs = np.empty(episodes)
    for i in range(episodes):
        rng = episode_rng(cfg.seed, stream, i)
        episode = sample_episode(dataset, pool, sampler_cfg, rng)
        emb = backend.embed(dataset, episode)
        if use_scaler:
            emb = scale_support_set(emb, cfg.scaler)
        accs[i] = _episode_accuracy(emb, cfg)
    return Metrics(accs, time.perf_counter() - start)


def evaluate(cfg: RunConfig, backend=None, dataset: Dataset | None = None,
             split: ClassSplit | None = None, pool_name: str = "test") -> Metrics:
    """Score the configured episode count on one split pool."""
    if dataset is None:
        if not cfg.dataset or not cfg.split:
            raise ConfigError("evaluate needs dataset and split paths")
        dataset = load_dataset(cfg.dataset)
        split = load_split(cfg.split)
    if backend is None:
        backend = load_backend(cfg)
    violations = validate_split(dataset, split, cfg.n_way, cfg.k_shot,
                                cfg.m_query)
    if violations:
        raise DataError("; ".join(violations))
    stream = {"train": STREAM_TRAIN, "valid": STREAM_VALID,
              "test": STREAM_TEST}[pool_name]
    return _eval_pool(cfg, backend, dataset, split.pool(pool_name), stream,
                      cfg.test_episodes, cfg.scaler_enabled)


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainResult:
    backend: TrainableBackend
    log: list[dict]
    best_epoch: int | None

    def epoch_losses(self) -> list[float]:
        return [entry["mean_loss"] for entry in self.log]


def train(cfg: RunConfig, dataset: Dataset | None = None,
          split: ClassSplit | None = None) -> TrainResult:
    """Episodic training of the toy encoder (trainable backend only)."""
    if cfg.backend.kind != "trainable":
        raise ConfigError("train requires the trainable backend")
    if dataset is None:
        if not cfg.dataset or not cfg.split:
            raise ConfigError("train needs dataset and split paths")
        dataset = load_dataset(cfg.dataset)
        split = load_split(cfg.split)
    violations = validate_split(dataset, split, cfg.n_way, cfg.k_shot,
                                cfg.m_query)
    if violations:
        raise DataError("; ".join(violations))
    if cfg.epochs > 0 and len(split.train_classes) < cfg.n_way:
        raise DataError("train split has too few classes for an episode")
    if cfg.epochs > 0 and len(split.valid_classes) < cfg.n_way:
        raise DataError("valid split has too few classes for an episode")

    backend = TrainableBackend.init(cfg, dataset, split)
    sampler_cfg = cfg.sampler_config()
    optimizer = Adam(backend.params.table.shape, cfg.optimizer)
    use_scaler_val = cfg.scaler_enabled and cfg.scaler_during_validation

    best_epoch = None
    best_acc = -1.0
    best_table = backend.params.table.copy()
    log = []
    episode_counter = 0
    for epoch in range(cfg.epochs):
        losses = np.empty(cfg.train_episodes)
        for j in range(cfg.train_episodes):
            rng = episode_rng(cfg.seed, STREAM_TRAIN, episode_counter)
            episode_counter += 1
            episode = sample_episode(dataset, split.train_classes, sampler_cfg,
                                     rng)
            emb, sample_tokens, label_tokens = backend.embed_with_tokens(
                dataset, episode)
            try:
                value, grad_v, grad_u = episode_loss_and_grads(emb, cfg.loss)
            except FloatingPointError:
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, episode {j}")
            losses[j] = value
            grad_table = encoder_backward(
                backend.params, sample_tokens + label_tokens,
                np.vstack([grad_v, grad_u]))
            optimizer.step(backend.params.table, grad_table)
        if not np.all(np.isfinite(backend.params.table)):
            raise NumericalError(
                f"embedding table diverged after epoch {epoch}")
        val = _eval_pool(cfg, backend, dataset, split.valid_classes,
                         STREAM_VALID, cfg.valid_episodes, use_scaler_val)
        log.append({"epoch": epoch, "mean_loss": float(losses.mean()),
                    "val_accuracy": val.mean})
        if val.mean > best_acc:
            best_acc = val.mean
            best_epoch = epoch
            best_table = backend.params.table.copy()

    backend.params = EncoderParams(best_table)
    if cfg.checkpoint:
        save_checkpoint(backend.params, backend.vocab, cfg.checkpoint)
    return TrainResult(backend, log, best_epoch)


# ---------------------------------------------------------------------------
# ablation

ABLATION_LOSSES = ("ce", "lg", "lg_label")


def ablate(cfg: RunConfig, dataset: Dataset | None = None,
           split: ClassSplit | None = None) -> list[dict]:
    """Cross-product report: loss x scaler x meta-learner, one row per
    cell, training once per loss kind."""
    if cfg.backend.kind != "trainable":
        raise ConfigError("ablate requires the trainable backend")
    if dataset is None:
        if not cfg.dataset or not cfg.split:
            raise ConfigError("ablate needs dataset and split paths")
        dataset = load_dataset(cfg.dataset)
        split = load_split(cfg.split)
    rows = []
    for loss_kind in ABLATION_LOSSES:
        run = replace(cfg, loss=replace(cfg.loss, kind=loss_kind),
                      checkpoint=None)
        result = train(run, dataset, split)
        for scaler_name, scaler_on in (("none", False), ("em", True)):
            for ml_kind in ("pn", "rrml"):
                eval_cfg = replace(
                    run, scaler_enabled=scaler_on,
                    metalearner=replace(cfg.metalearner, kind=ml_kind))
                metrics = _eval_pool(eval_cfg, result.backend, dataset,
                                     split.test_classes, STREAM_TEST,
                                     cfg.test_episodes, scaler_on)
                rows.append({
                    "loss": loss_kind,
                    "scaler": scaler_name,
                    "metalearner": ml_kind,
                    "mean_accuracy": metrics.mean,
                    "std_accuracy": metrics.std,
                    "episodes": metrics.count,
                    "seconds": metrics.seconds,
                })
    return rows


def format_ablation_table(rows: list[dict]) -> str:
    header = f"{'loss':<10}{'scaler':<8}{'metalearner':<13}{'accuracy':<20}{'episodes':>8}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row['loss']:<10}{row['scaler']:<8}{row['metalearner']:<13}"
            f"{row['mean_accuracy']:.4f} +/- {row['std_accuracy']:.4f}   "
            f"{row['episodes']:>8}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# CSV export

def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def export_results(obj, path) -> None:
    """Write metrics (one row per episode) or an ablation report (one
    row per cell) as RFC-4180 CSV."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if isinstance(obj, Metrics):
            writer.writerow(["episode", "accuracy"])
            for i, acc in enumerate(obj.accuracies):
                writer.writerow([str(i), _fmt(float(acc))])
        elif isinstance(obj, list):
            cols = ["loss", "scaler", "metalearner", "mean_accuracy",
                    "std_accuracy", "episodes", "seconds"]
            writer.writerow(cols)
            for row in obj:
                writer.writerow([_fmt(row[c]) for c in cols])
        else:
            raise TypeError(f"cannot export {type(obj).__name__}")
