"""Synthetic source/target worlds with a known link between text and frames.

This is a surrogate for real action videos. Every frame of a class-``c``
video is ``A^T e_c + beta * B^T o_c + noise`` where ``e_c`` is the frozen
text embedding of the class description and ``o_c`` the raw token vector of
its object word (zero when the class has none). ``A`` and ``B`` come from a
world seed shared by the source and target splits, so a visual encoder that
learns to undo ``A`` on source classes transfers to unseen target classes.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal

import numpy as np

from .hashmix import GOLDEN, derive_key, gaussian_block, splitmix64, uniform_block
from .textenc import Description, TextEncoderSpec, encode_description, mask_objects, token_embed

Role = Literal["source", "target"]

CLASS_ID_BASE = {"source": 0, "target": 100_000}
_ROLE_TAG = {"source": 1, "target": 2}
_WORD_BASE = {("source", "motion"): 0, ("source", "object"): 4_000_000,
              ("target", "motion"): 8_000_000, ("target", "object"): 12_000_000}
_TAG_A = 0xA11CE
_TAG_B = 0xB0B

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_SYLLABLES = [c + v for c in _CONSONANTS for v in _VOWELS]

VIDEO_MAGIC = b"MDVB"
VIDEO_VERSION = 1
_MAX_ELEMENTS = 1 << 34


class FormatError(ValueError):
    """A binary file does not match its declared layout."""


class VocabularyExhausted(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    num_classes: int = 40
    videos_per_class: int = 50
    frames_per_video: int = 8
    frame_dim: int = 32
    embed_dim: int = 16
    noise_sigma: float = 0.1
    object_strength: float = 0.0
    object_prob: float = 0.0
    world_seed: int = 0
    vocab_size: int = 512

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.videos_per_class < 1 or self.frames_per_video < 1:
            raise ValueError("videos_per_class and frames_per_video must be >= 1")
        if self.frame_dim < 1 or self.embed_dim < 1:
            raise ValueError("frame_dim and embed_dim must be >= 1")
        if self.noise_sigma < 0 or self.object_strength < 0:
            raise ValueError("noise_sigma and object_strength must be >= 0")
        if not 0.0 <= self.object_prob <= 1.0:
            raise ValueError("object_prob must lie in [0, 1]")
        if self.num_classes > 100_000:
            raise ValueError("num_classes must be <= 100000")


@dataclass
class SynthWorld:
    role: str
    mixing: np.ndarray  # A, embed_dim x frame_dim
    object_mixing: np.ndarray  # B, token_dim x frame_dim
    descriptions: list[Description]
    object_tokens: dict[int, str | None]
    text: TextEncoderSpec
    _embeddings: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def class_ids(self) -> list[int]:
        return [d.class_id for d in self.descriptions]

    def description(self, class_id: int) -> Description:
        for d in self.descriptions:
            if d.class_id == class_id:
                return d
        raise KeyError(f"unknown class {class_id}")

    def embedding(self, class_id: int) -> np.ndarray:
        if class_id not in self._embeddings:
            self._embeddings[class_id] = encode_description(self.description(class_id).tokens, self.text)
        return self._embeddings[class_id]


def word(index: int) -> str:
    """Pronounceable pseudo-word, unique per non-negative index (4+ syllables)."""
    n = len(_SYLLABLES)
    parts = []
    for _ in range(4):
        index, r = divmod(index, n)
        parts.append(_SYLLABLES[r])
    while index:
        index, r = divmod(index, n)
        parts.append(_SYLLABLES[r])
    return "".join(reversed(parts))


def _shuffled_pool(seed: int, role: str, kind: str, size: int) -> list[str]:
    base = _WORD_BASE[(role, kind)]
    tag = derive_key(seed, _ROLE_TAG[role], 0 if kind == "motion" else 1)
    order = sorted(range(size), key=lambda i: splitmix64(tag + (i + 1) * GOLDEN))
    return [word(base + i) for i in order]


def _uniform01(*key: int) -> float:
    return (splitmix64(derive_key(*key)) >> 11) * 2.0**-53


def world_matrices(cfg: SynthConfig, text: TextEncoderSpec) -> tuple[np.ndarray, np.ndarray]:
    a = uniform_block(cfg.world_seed, _TAG_A, (cfg.embed_dim, cfg.frame_dim))
    b = uniform_block(cfg.world_seed, _TAG_B, (text.token_dim, cfg.frame_dim)) / math.sqrt(text.token_dim)
    return a, b


def gen_class_set(
    cfg: SynthConfig, role: Role, text: TextEncoderSpec | None = None
) -> tuple[list[Description], SynthWorld]:
    """Build ``cfg.num_classes`` class descriptions for one split.

    Each class gets 3 to 6 motion words and, with probability
    ``cfg.object_prob``, one object word. Words are drawn without replacement
    from pools that are disjoint between roles, so no token is shared between
    source and target classes.
    """
    if role not in CLASS_ID_BASE:
        raise ValueError(f"role must be 'source' or 'target', got {role!r}")
    text = text or TextEncoderSpec(embed_dim=cfg.embed_dim)
    if text.embed_dim != cfg.embed_dim:
        raise ValueError("text encoder embed_dim must equal synth embed_dim")
    motion_pool = _shuffled_pool(cfg.seed, role, "motion", cfg.vocab_size)
    object_pool = _shuffled_pool(cfg.seed, role, "object", cfg.vocab_size)
    rtag = _ROLE_TAG[role]
    descriptions: list[Description] = []
    objects: dict[int, str | None] = {}
    lexicon: set[str] = set()
    mi = oi = 0
    for i in range(cfg.num_classes):
        class_id = CLASS_ID_BASE[role] + i
        k = 3 + splitmix64(derive_key(cfg.seed, rtag, i, 1)) % 4
        if mi + k > len(motion_pool):
            raise VocabularyExhausted(
                f"motion vocabulary of {cfg.vocab_size} exhausted at class {i} of {cfg.num_classes}"
            )
        tokens = motion_pool[mi:mi + k]
        mi += k
        obj = None
        if _uniform01(cfg.seed, rtag, i, 2) < cfg.object_prob:
            if oi >= len(object_pool):
                raise VocabularyExhausted(f"object vocabulary exhausted at class {i}")
            obj = object_pool[oi]
            oi += 1
            # object sits at a seeded position among the motion words
            pos = splitmix64(derive_key(cfg.seed, rtag, i, 3)) % (k + 1)
            tokens = tokens[:pos] + [obj] + tokens[pos:]
            lexicon.add(obj)
        objects[class_id] = obj
        descriptions.append(Description(class_id, f"{role}_{i:03d}", tokens))
    descriptions = [
        Description(d.class_id, d.name, d.tokens, mask_objects(d.tokens, lexicon)) for d in descriptions
    ]
    a, b = world_matrices(cfg, text)
    world = SynthWorld(role, a, b, descriptions, objects, text)
    return descriptions, world


def gen_video(world: SynthWorld, class_id: int, sample_index: int, cfg: SynthConfig) -> np.ndarray:
    """Frames ``(T, frame_dim)`` as float32 for one video of ``class_id``."""
    if class_id not in world.object_tokens:
        raise KeyError(f"unknown class {class_id}")
    clean = world.mixing.T @ world.embedding(class_id)
    obj = world.object_tokens[class_id]
    if obj is not None and cfg.object_strength > 0:
        clean = clean + cfg.object_strength * (world.object_mixing.T @ token_embed(obj, world.text))
    frames = np.broadcast_to(clean, (cfg.frames_per_video, cfg.frame_dim))
    if cfg.noise_sigma > 0:
        key = derive_key(cfg.seed, class_id, sample_index)
        frames = frames + cfg.noise_sigma * gaussian_block(key, (cfg.frames_per_video, cfg.frame_dim))
    return np.asarray(frames, dtype=np.float32)


@dataclass
class VideoSet:
    frames: np.ndarray  # (N, T, D) float32
    labels: np.ndarray  # (N,) class ids, uint32

    def __post_init__(self) -> None:
        if self.frames.ndim != 3:
            raise ValueError("frames must be (N, T, D)")
        if self.labels.shape != (self.frames.shape[0],):
            raise ValueError("labels must be (N,)")

    def __len__(self) -> int:
        return self.frames.shape[0]


def gen_dataset(world: SynthWorld, cfg: SynthConfig) -> VideoSet:
    """All videos of a world, ordered by class then sample index."""
    frames, labels = [], []
    for cid in world.class_ids:
        for s in range(cfg.videos_per_class):
            frames.append(gen_video(world, cid, s, cfg))
            labels.append(cid)
    return VideoSet(np.stack(frames).astype(np.float32), np.asarray(labels, dtype=np.uint32))


def verify_disjoint(source: Iterable, target: Iterable) -> bool:
    """True iff the two class collections share no class id.

    Accepts ints or objects with a ``class_id`` attribute.
    """
    def ids(xs: Iterable) -> set[int]:
        return {getattr(x, "class_id", x) for x in xs}

    return not (ids(source) & ids(target))


# ---------------------------------------------------------------------------
# binary video format


def write_videos(videos: VideoSet, path: str | Path) -> None:
    n, t, d = videos.frames.shape
    if max(n, t, d) >= 1 << 32 or n * t * d > _MAX_ELEMENTS:
        raise FormatError("shape overflow")
    header = VIDEO_MAGIC + struct.pack("<IIII", VIDEO_VERSION, n, t, d)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(videos.labels, dtype="<u4").tobytes())
        fh.write(np.asarray(videos.frames, dtype="<f4").tobytes())


def read_videos(path: str | Path) -> VideoSet:
    raw = Path(path).read_bytes()
    if len(raw) < 20:
        raise FormatError("truncated" if raw[:4] == VIDEO_MAGIC[: len(raw[:4])] else "bad magic")
    if raw[:4] != VIDEO_MAGIC:
        raise FormatError("bad magic")
    version, n, t, d = struct.unpack_from("<IIII", raw, 4)
    if version != VIDEO_VERSION:
        raise FormatError(f"version mismatch: file has {version}, expected {VIDEO_VERSION}")
    if n * t * d > _MAX_ELEMENTS:
        raise FormatError("shape overflow")
    expected = 20 + 4 * n + 4 * n * t * d
    if len(raw) != expected:
        raise FormatError(f"truncated: file is {len(raw)} bytes, header implies {expected}")
    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=20).astype(np.uint32)
    frames = np.frombuffer(raw, dtype="<f4", count=n * t * d, offset=20 + 4 * n)
    return VideoSet(frames.astype(np.float32).reshape(n, t, d), labels)
