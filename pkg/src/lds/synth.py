"""Synthetic fixtures at desk scale.

Two generators:

* a Gaussian geometry in representation space (class means on a sphere,
  isotropic within-class spread, label vectors offset from the true
  means), emitted as embedding stores plus a matching dataset/split for
  the precomputed backend -- this realizes the boundary-support setting
  where a randomly drawn support can sit far from its class center;
* a keyword text corpus for end-to-end training of the toy encoder,
  built so that held-out classes are recombinations of trained
  structure: 10 topic words act as the edges of K5 over the 5 training
  classes, training classes are the vertex stars, and test classes are
  the five 4-cycles, whose degree sequences remain pairwise distinct
  after training collapses word geometry toward the label directions.
  Each sample drops one of its 4 signature words at random, which is
  irreducible within-class spread that a label anchor can compensate.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .core import ClassSplit, ConfigError, Dataset, TextSample
from .encoder import EmbeddingStore
from .sampler import STREAM_SYNTH


@dataclass(frozen=True)
class SynthConfig:
    n_classes: int = 10
    dim: int = 16
    mean_scale: float = 1.0
    within_sigma: float = 0.28
    label_offset_sigma: float = 0.0
    samples_per_class: int = 40
    seed: int = 0

    def __post_init__(self):
        if min(self.n_classes, self.dim, self.samples_per_class) < 1:
            raise ConfigError("counts and dim must be positive")
        if self.mean_scale <= 0 or self.within_sigma < 0:
            raise ConfigError("mean_scale must be positive, sigma nonnegative")
        if self.label_offset_sigma < 0:
            raise ConfigError("label_offset_sigma must be nonnegative")


def gen_synthetic(cfg: SynthConfig):
    """Gaussian fixture: returns (sample_store, label_store, dataset, split).

    Sample keys are the dataset line index as a decimal string; label
    keys are the class names. All classes land in the test split (the
    fixture is evaluation-only). Keys and values are deterministic in
    the seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, STREAM_SYNTH)))
    raw = rng.normal(size=(cfg.n_classes, cfg.dim))
    means = cfg.mean_scale * raw / np.linalg.norm(raw, axis=1, keepdims=True)

    class_names = [f"class{i:02d}" for i in range(cfg.n_classes)]
    sample_store = EmbeddingStore(cfg.dim)
    label_store = EmbeddingStore(cfg.dim)
    samples = []
    for ci, cname in enumerate(class_names):
        label_store.add(
            cname,
            means[ci] + cfg.label_offset_sigma * rng.normal(size=cfg.dim))
        for _ in range(cfg.samples_per_class):
            idx = len(samples)
            vec = means[ci] + cfg.within_sigma * rng.normal(size=cfg.dim)
            sample_store.add(str(idx), vec)
            samples.append(TextSample(f"synthetic sample {idx} of {cname}", cname))
    dataset = Dataset(samples)
    split = ClassSplit((), (), tuple(class_names))
    return sample_store, label_store, dataset, split


# ---------------------------------------------------------------------------
# keyword text fixture

N_TRAIN_CLASSES = 5
_EDGES = list(combinations(range(N_TRAIN_CLASSES), 2))  # 10 topic words
_EDGE_INDEX = {e: i for i, e in enumerate(_EDGES)}


def _star(vertex: int) -> tuple[int, ...]:
    return tuple(i for i, e in enumerate(_EDGES) if vertex in e)


# test classes: the five 4-cycles of K5 (one per excluded vertex);
# valid classes: triangle plus disjoint edge, one per rotation
_TRAIN_SIGS = [_star(v) for v in range(N_TRAIN_CLASSES)]
_TEST_SIGS = [
    tuple(_EDGE_INDEX[e] for e in cyc) for cyc in (
        [(0, 1), (1, 2), (2, 3), (0, 3)],
        [(0, 2), (1, 2), (1, 4), (0, 4)],
        [(0, 3), (1, 3), (1, 4), (0, 4)],
        [(0, 2), (2, 4), (3, 4), (0, 3)],
        [(1, 2), (2, 3), (3, 4), (1, 4)],
    )
]
_VALID_SIGS = [
    tuple(_EDGE_INDEX[e] for e in sig) for sig in (
        [(0, 1), (1, 2), (0, 2), (3, 4)],
        [(1, 2), (2, 3), (1, 3), (0, 4)],
        [(2, 3), (3, 4), (2, 4), (0, 1)],
        [(0, 3), (3, 4), (0, 4), (1, 2)],
        [(0, 1), (0, 4), (1, 4), (2, 3)],
    )
]


@dataclass(frozen=True)
class KeywordSynthConfig:
    samples_per_class: int = 40
    n_fillers: int = 30
    fillers_per_sample: int = 2
    signature_keep: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_class < 1 or self.n_fillers < 1:
            raise ConfigError("counts must be positive")
        if not 1 <= self.signature_keep <= 4:
            raise ConfigError("signature_keep must be in 1..4")
        if self.fillers_per_sample < 0:
            raise ConfigError("fillers_per_sample must be nonnegative")


def gen_keyword_dataset(cfg: KeywordSynthConfig):
    """Keyword corpus: returns (dataset, split).

    5/5/5 train/valid/test classes over a 10-word topic vocabulary plus
    fillers; a class's label name is its 4 signature words joined by
    spaces, so label representations sit at the signature mean.
    """
    topics = [f"topic{i:02d}" for i in range(len(_EDGES))]
    fillers = [f"filler{i:02d}" for i in range(cfg.n_fillers)]
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, STREAM_SYNTH, 1)))

    def label_of(sig):
        return " ".join(topics[t] for t in sig)

    samples = []
    pools = []
    for sigs in (_TRAIN_SIGS, _VALID_SIGS, _TEST_SIGS):
        names = []
        for sig in sigs:
            cname = label_of(sig)
            names.append(cname)
            for _ in range(cfg.samples_per_class):
                kept = rng.choice(len(sig), size=cfg.signature_keep,
                                  replace=False)
                toks = [topics[sig[i]] for i in kept]
                toks += [fillers[i] for i in
                         rng.integers(0, cfg.n_fillers,
                                      size=cfg.fillers_per_sample)]
                rng.shuffle(toks)
                samples.append(TextSample(" ".join(toks), cname))
        pools.append(tuple(names))
    dataset = Dataset(samples)
    split = ClassSplit(pools[0], pools[1], pools[2])
    return dataset, split


def gen_random_store(n_classes: int, samples_per_class: int, dim: int,
                     seed: int = 0):
    """Isotropic-noise fixture: structureless N(0, I) embeddings for
    chance-level sanity checks. Returns the same tuple as gen_synthetic."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, STREAM_SYNTH, 2)))
    class_names = [f"class{i:02d}" for i in range(n_classes)]
    sample_store = EmbeddingStore(dim)
    label_store = EmbeddingStore(dim)
    samples = []
    for cname in class_names:
        label_store.add(cname, rng.normal(size=dim))
        for _ in range(samples_per_class):
            idx = len(samples)
            sample_store.add(str(idx), rng.normal(size=dim))
            samples.append(TextSample(f"noise sample {idx} of {cname}", cname))
    return sample_store, label_store, Dataset(samples), ClassSplit(
        (), (), tuple(class_names))
