"""Text-to-vector backends.

Two ways to produce sample representations v and label representations
u that share one space:

* a trainable toy encoder: a token-embedding table, with v defined as
  the mean of the prompted text's token embeddings (no contextual
  layers, so the mask-position readout of a real masked LM is replaced
  by mean pooling; the exact mask-position semantics live in the
  offline exporter that writes embedding stores);
* a reader/writer for precomputed embedding stores produced offline.

Binary formats (little-endian throughout):

* checkpoint "LDSC": magic, u8 version=1, u32 vocab size V, u32 dim d,
  V null-terminated UTF-8 tokens in id order, V*d float32 row-major;
* embedding store "LDSE": magic, u8 version=1, u32 dim d, u32 record
  count, then per record u16 key length, UTF-8 key bytes, d float32.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .core import DataError

UNK_ID = 0
MASK_ID = 1
UNK_TOKEN = "<unk>"
MASK_TOKEN = "[MASK]"
SENTENCE_SLOT = "[sentence]"

_WORD_RE = re.compile(r"[0-9a-z]+")


def split_tokens(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation; protect "[MASK]".

    Punctuation characters are separators and are dropped, so
    "comp.os.ms-windows.misc" yields its five sub-tokens. Literal
    "[MASK]" occurrences survive as single tokens.
    """
    out = []
    for piece in text.split(MASK_TOKEN):
        out.extend(_WORD_RE.findall(piece.lower()))
        out.append(MASK_TOKEN)
    return out[:-1]


class Vocabulary:
    """Bijective token/id map with reserved ids UNK=0 and MASK=1."""

    def __init__(self, tokens: list[str] | None = None):
        self.id_to_token = [UNK_TOKEN, MASK_TOKEN]
        self.token_to_id = {UNK_TOKEN: UNK_ID, MASK_TOKEN: MASK_ID}
        for tok in tokens or []:
            self.add(tok)

    def add(self, token: str) -> int:
        tid = self.token_to_id.get(token)
        if tid is None:
            tid = len(self.id_to_token)
            self.token_to_id[token] = tid
            self.id_to_token.append(token)
        return tid

    def __len__(self) -> int:
        return len(self.id_to_token)

    def tokenize(self, text: str) -> list[int]:
        """Map text to token ids; out-of-vocabulary tokens become UNK."""
        return [self.token_to_id.get(t, UNK_ID) for t in split_tokens(text)]

    @classmethod
    def build(cls, texts, label_names, template: "PromptTemplate | None" = None
              ) -> "Vocabulary":
        """Vocabulary over training texts, all label names, and template
        tokens; every token is kept (no frequency cutoff)."""
        vocab = cls()
        sources = list(texts) + list(label_names)
        if template is not None:
            sources.append(template.pattern.replace(SENTENCE_SLOT, " "))
        for text in sources:
            for tok in split_tokens(text):
                if tok != MASK_TOKEN:
                    vocab.add(tok)
        return vocab


@dataclass(frozen=True)
class PromptTemplate:
    """Pattern with exactly one "[MASK]" and one "[sentence]" slot."""

    pattern: str

    def __post_init__(self):
        for slot in (MASK_TOKEN, SENTENCE_SLOT):
            n = self.pattern.count(slot)
            if n != 1:
                raise ValueError(
                    f"template must contain {slot} exactly once, found {n}")

    def apply(self, text: str) -> str:
        """Substitute the sentence; "[MASK]" stays literal for tokenize."""
        return self.pattern.replace(SENTENCE_SLOT, text)


def apply_template(template: PromptTemplate, text: str) -> str:
    return template.apply(text)


@dataclass
class EncoderParams:
    """Trainable token-embedding table, one row per vocabulary id."""

    table: np.ndarray  # (V, d) float64

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=np.float64)
        if self.table.ndim != 2:
            raise ValueError("embedding table must be 2-D")
        if not np.all(np.isfinite(self.table)):
            raise ValueError("embedding table has non-finite entries")

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    @classmethod
    def init(cls, vocab_size: int, dim: int, rng: np.random.Generator
             ) -> "EncoderParams":
        # small-norm start keeps initial inner products near zero
        scale = 0.5 / dim
        return cls(rng.uniform(-scale, scale, size=(vocab_size, dim)))


def encode_text(params: EncoderParams, token_ids) -> np.ndarray:
    """Mean of the embedding rows for token_ids (order-invariant)."""
    if len(token_ids) == 0:
        raise ValueError("cannot encode an empty token list")
    return params.table[np.asarray(token_ids, dtype=np.intp)].mean(axis=0)


def encode_label(params: EncoderParams, vocab: Vocabulary, label_name: str
                 ) -> np.ndarray:
    """Label representation: mean over the label name's sub-tokens."""
    ids = vocab.tokenize(label_name)
    if not ids:
        raise ValueError(f"label {label_name!r} tokenizes to nothing")
    return encode_text(params, ids)


def encoder_backward(params: EncoderParams, token_lists, grads) -> np.ndarray:
    """Chain mean-pooling gradients back onto the embedding table.

    token_lists[i] produced a vector whose upstream gradient is
    grads[i]; each contributing row receives grads[i] / len(tokens),
    accumulated over all vectors.
    """
    if len(token_lists) != len(grads):
        raise ValueError("one gradient per produced vector required")
    out = np.zeros_like(params.table)
    for ids, g in zip(token_lists, grads):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (params.dim,):
            raise ValueError(f"gradient shape {g.shape} != ({params.dim},)")
        np.add.at(out, np.asarray(ids, dtype=np.intp), g / len(ids))
    return out


# ---------------------------------------------------------------------------
# serialization

_CKPT_MAGIC = b"LDSC"
_STORE_MAGIC = b"LDSE"
_VERSION = 1


def save_checkpoint(params: EncoderParams, vocab: Vocabulary, path) -> None:
    if len(vocab) != params.table.shape[0]:
        raise ValueError("vocabulary size does not match table rows")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<BII", _VERSION, len(vocab), params.dim))
        for tok in vocab.id_to_token:
            raw = tok.encode("utf-8")
            if b"\x00" in raw:
                raise ValueError(f"token {tok!r} contains a null byte")
            fh.write(raw + b"\x00")
        fh.write(params.table.astype("<f4").tobytes(order="C"))


def _read_exact(fh, n: int, path, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise DataError(f"{path}: truncated file while reading {what}")
    return data


def load_checkpoint(path) -> tuple[EncoderParams, Vocabulary]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, path, "magic") != _CKPT_MAGIC:
            raise DataError(f"{path}: not a checkpoint (bad magic)")
        version, vsize, dim = struct.unpack(
            "<BII", _read_exact(fh, 9, path, "header"))
        if version != _VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        tokens = []
        for _ in range(vsize):
            raw = bytearray()
            while True:
                b = _read_exact(fh, 1, path, "token table")
                if b == b"\x00":
                    break
                raw += b
            tokens.append(raw.decode("utf-8"))
        if tokens[:2] != [UNK_TOKEN, MASK_TOKEN]:
            raise DataError(f"{path}: reserved tokens missing or reordered")
        table = np.frombuffer(
            _read_exact(fh, vsize * dim * 4, path, "embedding table"),
            dtype="<f4").astype(np.float64).reshape(vsize, dim)
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after table")
    vocab = Vocabulary(tokens[2:])
    return EncoderParams(table), vocab


class EmbeddingStore:
    """String-keyed vectors sharing one dimension (precomputed v and u)."""

    def __init__(self, dim: int):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = int(dim)
        self._vectors: dict[str, np.ndarray] = {}

    def add(self, key: str, vector) -> None:
        if key in self._vectors:
            raise DataError(f"duplicate embedding key {key!r}")
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise DataError(
                f"vector for {key!r} has shape {vec.shape}, store dim is {self.dim}")
        if not np.all(np.isfinite(vec)):
            raise DataError(f"vector for {key!r} has non-finite entries")
        self._vectors[key] = vec

    def __getitem__(self, key: str) -> np.ndarray:
        try:
            return self._vectors[key]
        except KeyError:
            raise DataError(f"missing embedding for key {key!r}")

    def __contains__(self, key: str) -> bool:
        return key in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def keys(self):
        return self._vectors.keys()


def save_embedding_store(store: EmbeddingStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_STORE_MAGIC)
        fh.write(struct.pack("<BII", _VERSION, store.dim, len(store)))
        for key in store.keys():
            raw = key.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"key too long: {key[:32]!r}...")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(store[key].astype("<f4").tobytes())


def load_embedding_store(path) -> EmbeddingStore:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, path, "magic") != _STORE_MAGIC:
            raise DataError(f"{path}: not an embedding store (bad magic)")
        version, dim, count = struct.unpack(
            "<BII", _read_exact(fh, 9, path, "header"))
        if version != _VERSION:
            raise DataError(f"{path}: unsupported store version {version}")
        store = EmbeddingStore(dim)
        for _ in range(count):
            (klen,) = struct.unpack("<H", _read_exact(fh, 2, path, "key length"))
            key = _read_exact(fh, klen, path, "key").decode("utf-8")
            vec = np.frombuffer(
                _read_exact(fh, dim * 4, path, f"vector for {key!r}"),
                dtype="<f4").astype(np.float64)
            store.add(key, vec)
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after records")
    return store
