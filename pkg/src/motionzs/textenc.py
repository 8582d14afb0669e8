"""Frozen stand-in text encoder, object masking and corpus statistics.

The encoder is a bag of hashed token vectors pushed through a fixed random
projection and L2-normalised. It never has trainable state, so prototypes
built from it are frozen by construction.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .hashmix import fnv1a64, uniform_block
from .numkit import l2_normalize

OBJECT_TOKEN = "object"

_PUNCT = re.compile(f"[{re.escape(string.punctuation)}]")


@dataclass(frozen=True)
class TextEncoderSpec:
    token_dim: int = 8
    embed_dim: int = 16
    projection_seed: int = 0x5EED

    def __post_init__(self) -> None:
        if self.token_dim < 1 or self.embed_dim < 1:
            raise ValueError("token_dim and embed_dim must be >= 1")


@dataclass
class Description:
    class_id: int
    name: str
    tokens: list[str]
    masked_tokens: list[str] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValueError(f"class {self.class_id}: empty token list")
        if self.masked_tokens is None:
            self.masked_tokens = list(self.tokens)
        if len(self.masked_tokens) != len(self.tokens):
            raise ValueError(f"class {self.class_id}: masked_tokens length differs from tokens")
        for t, m in zip(self.tokens, self.masked_tokens):
            if t != m and m != OBJECT_TOKEN:
                raise ValueError(
                    f"class {self.class_id}: masked token {m!r} differs from {t!r} "
                    f"but is not {OBJECT_TOKEN!r}"
                )

    def to_json(self) -> dict:
        return {
            "class_id": self.class_id,
            "name": self.name,
            "tokens": list(self.tokens),
            "masked_tokens": list(self.masked_tokens),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Description":
        return cls(
            class_id=int(obj["class_id"]),
            name=str(obj["name"]),
            tokens=[str(t) for t in obj["tokens"]],
            masked_tokens=[str(t) for t in obj["masked_tokens"]] if obj.get("masked_tokens") else None,
        )


def tokenize(text: str) -> list[str]:
    """Lowercase, strip ASCII punctuation, split on whitespace."""
    return _PUNCT.sub(" ", text.lower()).split()


@lru_cache(maxsize=65536)
def _token_embed_cached(token: str, token_dim: int) -> np.ndarray:
    vec = uniform_block(fnv1a64(token.encode("utf-8")), 0, (token_dim,))
    vec.setflags(write=False)
    return vec


def token_embed(token: str, spec: TextEncoderSpec) -> np.ndarray:
    if not token:
        raise ValueError("empty token")
    return _token_embed_cached(token, spec.token_dim).copy()


@lru_cache(maxsize=64)
def _projection(seed: int, token_dim: int, embed_dim: int) -> np.ndarray:
    p = uniform_block(seed, 0, (token_dim, embed_dim))
    p.setflags(write=False)
    return p


def projection_matrix(spec: TextEncoderSpec) -> np.ndarray:
    """The fixed ``token_dim x embed_dim`` projection."""
    return _projection(spec.projection_seed, spec.token_dim, spec.embed_dim).copy()


def encode_description(tokens: Sequence[str], spec: TextEncoderSpec) -> np.ndarray:
    if len(tokens) == 0:
        raise ValueError("cannot encode an empty token list")
    if not all(tokens):
        raise ValueError("empty token")
    # sort so the float summation order, and hence the bits, ignore token order
    embs = np.stack([_token_embed_cached(t, spec.token_dim) for t in sorted(tokens)])
    mean = embs.mean(axis=0)
    proj = _projection(spec.projection_seed, spec.token_dim, spec.embed_dim)
    return l2_normalize(proj.T @ mean)


def mask_objects(tokens: Iterable[str], lexicon: Iterable[str]) -> list[str]:
    lex = set(lexicon)
    return [OBJECT_TOKEN if t in lex else t for t in tokens]


@dataclass(frozen=True)
class CorpusStats:
    count: int
    avg_words: float


def corpus_stats(descriptions: Sequence[Description]) -> CorpusStats:
    """Number of distinct descriptions and mean token count per description."""
    if not descriptions:
        raise ValueError("empty corpus")
    unique = {tuple(d.tokens) for d in descriptions}
    avg = sum(len(d.tokens) for d in descriptions) / len(descriptions)
    return CorpusStats(count=len(unique), avg_words=avg)


# ---------------------------------------------------------------------------
# files


def read_descriptions(path: str | Path) -> list[Description]:
    """Read a description file.

    ``.jsonl`` files hold one Description object per line. Any other suffix is
    read as plain text with one sentence per line, numbered from 0.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    out: list[Description] = []
    if path.suffix == ".jsonl":
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                out.append(Description.from_json(json.loads(line)))
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad description record ({exc})") from exc
    else:
        for line in text.splitlines():
            toks = tokenize(line)
            if toks:
                out.append(Description(class_id=len(out), name=line.strip(), tokens=toks))
    return out


def write_descriptions(descriptions: Iterable[Description], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in descriptions:
            fh.write(json.dumps(d.to_json(), ensure_ascii=False) + "\n")


def read_lexicon(path: str | Path) -> set[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return {ln.strip().lower() for ln in lines if ln.strip()}


def apply_lexicon(descriptions: Iterable[Description], lexicon: Iterable[str]) -> list[Description]:
    """Copies of ``descriptions`` with ``masked_tokens`` recomputed from ``lexicon``."""
    lex = set(lexicon)
    return [
        Description(d.class_id, d.name, list(d.tokens), mask_objects(d.tokens, lex))
        for d in descriptions
    ]
