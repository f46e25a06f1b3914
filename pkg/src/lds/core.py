"""Domain types, dataset ingestion, and class-split validation.

A dataset is a flat list of labeled text samples plus an index from
label name to sample positions. Class identity is the exact label
string: case-sensitive, no normalization. Everything here is immutable
after construction and safe to share across episode workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class ConfigError(ValueError):
    """Bad run configuration (CLI exit code 2)."""


class DataError(ValueError):
    """Bad dataset, split, or serialized artifact (CLI exit code 3)."""


class NumericalError(RuntimeError):
    """Non-finite values encountered during training (CLI exit code 4)."""


@dataclass(frozen=True)
class TextSample:
    text: str
    label_name: str

    def __post_init__(self):
        if not self.text.strip():
            raise DataError("sample text is empty after trimming")
        if not self.label_name:
            raise DataError("sample label name is empty")


@dataclass
class Dataset:
    """Immutable sample list with an insertion-ordered label index."""

    samples: list[TextSample]
    index: dict[str, list[int]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            for i, s in enumerate(self.samples):
                self.index.setdefault(s.label_name, []).append(i)

    @property
    def class_names(self) -> list[str]:
        return list(self.index.keys())

    def class_size(self, label_name: str) -> int:
        return len(self.index[label_name])


def load_dataset(path) -> Dataset:
    """Read a newline-delimited JSON dataset.

    Each line must be a JSON object with string fields "text" and
    "label"; unknown fields are ignored. Line numbers are 1-based in
    error messages.
    """
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: malformed JSON ({exc.msg})")
            if not isinstance(record, dict):
                raise DataError(f"{path}: line {lineno}: record is not an object")
            for fld in ("text", "label"):
                if fld not in record:
                    raise DataError(f"{path}: line {lineno}: missing field {fld!r}")
                if not isinstance(record[fld], str):
                    raise DataError(f"{path}: line {lineno}: field {fld!r} is not a string")
            try:
                samples.append(TextSample(record["text"], record["label"]))
            except DataError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}")
    if not samples:
        raise DataError(f"{path}: empty dataset")
    return Dataset(samples)


def save_dataset(dataset: Dataset, path) -> None:
    """Inverse of load_dataset; preserves sample order."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in dataset.samples:
            fh.write(json.dumps({"text": s.text, "label": s.label_name}) + "\n")


@dataclass(frozen=True)
class ClassSplit:
    """Disjoint train/valid/test class-name sets (order preserved)."""

    train_classes: tuple[str, ...]
    valid_classes: tuple[str, ...]
    test_classes: tuple[str, ...]

    def pool(self, name: str) -> tuple[str, ...]:
        try:
            return getattr(self, f"{name}_classes")
        except AttributeError:
            raise ConfigError(f"unknown split pool {name!r}")


def load_split(path) -> ClassSplit:
    """Read a split file: JSON object with "train"/"valid"/"test" arrays."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: malformed JSON ({exc.msg})")
    for key in ("train", "valid", "test"):
        if key not in obj or not isinstance(obj[key], list):
            raise DataError(f"{path}: missing or non-array field {key!r}")
    return ClassSplit(tuple(obj["train"]), tuple(obj["valid"]), tuple(obj["test"]))


def save_split(split: ClassSplit, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "train": list(split.train_classes),
                "valid": list(split.valid_classes),
                "test": list(split.test_classes),
            },
            fh,
            indent=2,
        )
        fh.write("\n")


def validate_split(dataset: Dataset, split: ClassSplit, n_way: int, k_shot: int,
                   m_query: int) -> list[str]:
    """Check a split against a dataset and episode shape.

    Returns a list of violation strings; empty means ok. An ok result
    guarantees that sample_episode succeeds on every pool for the given
    (n_way, k_shot, m_query).
    """
    violations = []
    pools = {
        "train": split.train_classes,
        "valid": split.valid_classes,
        "test": split.test_classes,
    }
    names = list(pools)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            overlap = set(pools[a]) & set(pools[b])
            if overlap:
                violations.append(
                    f"split overlap: {a}/{b} share {sorted(overlap)}")
    need = k_shot + m_query
    for pool_name, classes in pools.items():
        if len(set(classes)) != len(classes):
            violations.append(f"duplicate classes in {pool_name} split")
        if 0 < len(classes) < n_way:
            violations.append(
                f"{pool_name} split has {len(classes)} classes, episode needs {n_way}")
        for cname in classes:
            if cname not in dataset.index:
                violations.append(f"unknown class {cname!r} in {pool_name} split")
            elif dataset.class_size(cname) < need:
                violations.append(
                    f"insufficient samples: class {cname!r} has "
                    f"{dataset.class_size(cname)}, needs {need}")
    return violations


@dataclass(frozen=True)
class Episode:
    """One N-way K-shot task: class slots with support/query indices."""

    n_way: int
    k_shot: int
    m_query: int
    class_names: tuple[str, ...]
    support: np.ndarray  # (N, K) sample indices
    query: np.ndarray    # (N, M) sample indices


def check_episode(dataset: Dataset, ep: Episode) -> None:
    """Assert the Episode invariants against its dataset (test helper)."""
    assert len(set(ep.class_names)) == ep.n_way
    assert ep.support.shape == (ep.n_way, ep.k_shot)
    assert ep.query.shape == (ep.n_way, ep.m_query)
    for slot, cname in enumerate(ep.class_names):
        sup = set(ep.support[slot].tolist())
        qry = set(ep.query[slot].tolist())
        assert len(sup) == ep.k_shot and len(qry) == ep.m_query
        assert not (sup & qry), "support/query overlap within a class"
        for idx in sup | qry:
            assert dataset.samples[idx].label_name == cname


@dataclass
class EmbeddedEpisode:
    """An episode mapped to representation space.

    All arrays are float64 and share one representation dimension:
    support_reps (N, K, d), query_reps (N, M, d), label_reps (N, d).
    label_reps[i] corresponds to class_names[i].
    """

    support_reps: np.ndarray
    query_reps: np.ndarray
    label_reps: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        d = self.label_reps.shape[-1]
        if self.support_reps.shape[-1] != d or self.query_reps.shape[-1] != d:
            raise ValueError("representation dimension mismatch")
        for arr in (self.support_reps, self.query_reps, self.label_reps):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite representation")

    @property
    def dim(self) -> int:
        return self.label_reps.shape[-1]
