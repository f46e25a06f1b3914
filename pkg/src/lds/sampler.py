"""Episode construction: N-way K-shot tasks drawn from a class pool.

Randomness is organized as named streams derived from one run seed, so
training, validation, and testing draws are independent and any single
episode is reproducible from (seed, stream, episode index) alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, Dataset, Episode

# stream ids for episode_rng
STREAM_TRAIN = 0
STREAM_VALID = 1
STREAM_TEST = 2
STREAM_INIT = 3
STREAM_SYNTH = 4


def episode_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    """Independent generator for one episode of one stream.

    Entropy is the tuple (seed, stream, index) fed to SeedSequence, so
    streams and episode indices never share state.
    """
    return np.random.default_rng(np.random.SeedSequence((seed, stream, index)))


@dataclass(frozen=True)
class SamplerConfig:
    n_way: int
    k_shot: int
    m_query: int
    seed: int = 0

    def __post_init__(self):
        if self.n_way < 2:
            raise ConfigError("n_way must be at least 2")
        if self.k_shot < 1 or self.m_query < 1:
            raise ConfigError("k_shot and m_query must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")


def draw_without_replacement(rng: np.random.Generator, items, k: int) -> list:
    """Uniform k-subset in draw order via partial Fisher-Yates."""
    pool = list(items)
    n = len(pool)
    if k > n:
        raise ValueError(f"cannot draw {k} from {n} items")
    for i in range(k):
        j = i + int(rng.integers(0, n - i))
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]


def sample_episode(dataset: Dataset, class_pool, cfg: SamplerConfig,
                   rng: np.random.Generator) -> Episode:
    """Draw one episode: N distinct classes, then K support and M query
    samples per class, all uniformly without replacement."""
    pool = list(class_pool)
    if len(pool) < cfg.n_way:
        raise ValueError(
            f"class pool has {len(pool)} classes, episode needs {cfg.n_way}")
    class_names = draw_without_replacement(rng, pool, cfg.n_way)
    need = cfg.k_shot + cfg.m_query
    support = np.empty((cfg.n_way, cfg.k_shot), dtype=np.intp)
    query = np.empty((cfg.n_way, cfg.m_query), dtype=np.intp)
    for slot, cname in enumerate(class_names):
        indices = dataset.index.get(cname)
        if indices is None:
            raise ValueError(f"class {cname!r} not in dataset")
        if len(indices) < need:
            raise ValueError(
                f"class {cname!r} has {len(indices)} samples, episode needs {need}")
        drawn = draw_without_replacement(rng, indices, need)
        support[slot] = drawn[:cfg.k_shot]
        query[slot] = drawn[cfg.k_shot:]
    return Episode(cfg.n_way, cfg.k_shot, cfg.m_query, tuple(class_names),
                   support, query)
