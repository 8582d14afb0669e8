"""Prototype classifier over a trainable per-frame encoder.

Classifier weights are frozen text embeddings of the class descriptions
(one unit row per class). Only the visual side learns: a bias-free two-layer
ReLU MLP applied to every frame, an optional stack of single-head residual
self-attention blocks across time, and mean pooling. Logits are plain dot
products between the pooled video feature and the prototype rows.

Forward and backward are written out by hand for a batch ``(B, T, D)``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .numkit import Params, batch_cross_entropy, relu, softmax
from .synthgen import FormatError
from .textenc import Description, TextEncoderSpec, encode_description

CHECKPOINT_MAGIC = b"MDCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    frame_dim: int = 32
    hidden_dim: int = 64
    embed_dim: int = 16
    frames: int = 8
    temporal: Literal["mean", "attention"] = "mean"
    attn_layers: int = 1
    normalize: bool = False
    temperature: float = 1.0

    def __post_init__(self) -> None:
        if min(self.frame_dim, self.hidden_dim, self.embed_dim, self.frames) < 1:
            raise ValueError("model dimensions and frames must be >= 1")
        if self.temporal not in ("mean", "attention"):
            raise ValueError(f"temporal must be 'mean' or 'attention', got {self.temporal!r}")
        if self.temporal == "attention" and self.attn_layers < 1:
            raise ValueError("attention mode needs attn_layers >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")

    @property
    def n_blocks(self) -> int:
        return self.attn_layers if self.temporal == "attention" else 0

    def param_shapes(self) -> dict[str, tuple[int, int]]:
        shapes = {
            "layer1": (self.frame_dim, self.hidden_dim),
            "layer2": (self.hidden_dim, self.embed_dim),
        }
        for i in range(self.n_blocks):
            for m in "qkv":
                shapes[f"attn{i}.{m}"] = (self.embed_dim, self.embed_dim)
        return shapes

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class PrototypeMatrix:
    weights: np.ndarray  # (C, d), read-only
    class_ids: tuple[int, ...]
    masked: bool = False

    def row_of(self, class_id: int) -> int:
        return self.class_ids.index(class_id)

    def rows_for(self, labels: np.ndarray) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(self.class_ids)}
        try:
            return np.array([lookup[int(c)] for c in labels], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"label {exc.args[0]} has no prototype") from None


def build_prototypes(
    descriptions: Sequence[Description], masked: bool, spec: TextEncoderSpec
) -> PrototypeMatrix:
    """Stack frozen description embeddings, one row per class, ascending class id."""
    if not descriptions:
        raise ValueError("no descriptions")
    ids = [d.class_id for d in descriptions]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate class_id in descriptions")
    ordered = sorted(descriptions, key=lambda d: d.class_id)
    rows = [encode_description(d.masked_tokens if masked else d.tokens, spec) for d in ordered]
    w = np.stack(rows)
    w.setflags(write=False)
    return PrototypeMatrix(w, tuple(d.class_id for d in ordered), masked)


def sample_frames(num_frames: int, target: int) -> list[int]:
    """``T`` uniformly spaced frame indices (centre of each of ``T`` equal segments)."""
    if num_frames < 1:
        raise ValueError("video has no frames")
    if target < 1:
        raise ValueError("target must be >= 1")
    return [min(num_frames - 1, int(math.floor((i + 0.5) * num_frames / target))) for i in range(target)]


def init_params(cfg: ModelConfig, seed: int = 0, attn_scale: float = 0.1) -> Params:
    rng = np.random.default_rng(seed)
    p: Params = {
        "layer1": rng.normal(0.0, math.sqrt(2.0 / cfg.frame_dim), (cfg.frame_dim, cfg.hidden_dim)),
        "layer2": rng.normal(0.0, math.sqrt(1.0 / cfg.hidden_dim), (cfg.hidden_dim, cfg.embed_dim)),
    }
    for i in range(cfg.n_blocks):
        for m in "qkv":
            p[f"attn{i}.{m}"] = rng.normal(0.0, attn_scale / math.sqrt(cfg.embed_dim), (cfg.embed_dim, cfg.embed_dim))
    return p


def _check_params(params: Params, cfg: ModelConfig) -> None:
    shapes = cfg.param_shapes()
    if set(params) != set(shapes):
        raise ValueError(f"parameter names {sorted(params)} do not match config {sorted(shapes)}")
    for k, s in shapes.items():
        if params[k].shape != s:
            raise ValueError(f"{k}: shape {params[k].shape}, config expects {s}")


# ---------------------------------------------------------------------------
# attention block


def attn_block(z: np.ndarray, q: np.ndarray, k: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, dict]:
    """Residual single-head self-attention over time.

    ``z`` is ``(..., T, d)``; ``out_s = z_s + sum_t w_st V z_t`` with
    ``w_s = softmax_t((Q z_s) . (K z_t) / sqrt(d))``. Returns the output and
    a cache for :func:`attn_block_backward`.
    """
    d = z.shape[-1]
    if q.shape != (d, d) or k.shape != (d, d) or v.shape != (d, d):
        raise ValueError(f"attention matrices must be {d}x{d}")
    qm = z @ q.T
    km = z @ k.T
    vm = z @ v.T
    scores = qm @ np.swapaxes(km, -1, -2) / math.sqrt(d)
    w = softmax(scores, axis=-1)
    out = z + w @ vm
    return out, {"z": z, "qm": qm, "km": km, "vm": vm, "w": w}


def attn_block_backward(
    dout: np.ndarray, q: np.ndarray, k: np.ndarray, v: np.ndarray, cache: dict
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Gradients ``(dz, dQ, dK, dV)`` for :func:`attn_block`."""
    z, qm, km, vm, w = cache["z"], cache["qm"], cache["km"], cache["vm"], cache["w"]
    d = z.shape[-1]
    scale = 1.0 / math.sqrt(d)
    dw = dout @ np.swapaxes(vm, -1, -2)
    dvm = np.swapaxes(w, -1, -2) @ dout
    ds = w * (dw - np.sum(dw * w, axis=-1, keepdims=True))
    dqm = ds @ km * scale
    dkm = np.swapaxes(ds, -1, -2) @ qm * scale
    flat = lambda a: a.reshape(-1, d)  # noqa: E731
    dq = flat(dqm).T @ flat(z)
    dk = flat(dkm).T @ flat(z)
    dv = flat(dvm).T @ flat(z)
    dz = dout + dqm @ q + dkm @ k + dvm @ v
    return dz, dq, dk, dv


# ---------------------------------------------------------------------------
# encoder


def _forward(frames: np.ndarray, params: Params, cfg: ModelConfig) -> tuple[np.ndarray, dict]:
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != cfg.frame_dim:
        raise ValueError(f"frames must be (B, T, {cfg.frame_dim}), got {x.shape}")
    pre = x @ params["layer1"]
    h = relu(pre)
    z = h @ params["layer2"]
    blocks = []
    for i in range(cfg.n_blocks):
        z, c = attn_block(z, params[f"attn{i}.q"], params[f"attn{i}.k"], params[f"attn{i}.v"])
        blocks.append(c)
    pooled = z.mean(axis=1)
    cache = {"x": x, "pre": pre, "h": h, "blocks": blocks, "pooled": pooled, "T": x.shape[1]}
    if not cfg.normalize:
        return pooled, cache
    norms = np.linalg.norm(pooled, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise FloatingPointError("zero-norm video feature cannot be normalized")
    cache["norms"] = norms
    return cfg.temperature * pooled / norms, cache


def _backward(demb: np.ndarray, params: Params, cfg: ModelConfig, cache: dict) -> Params:
    grads: Params = {}
    if cfg.normalize:
        unit = cache["pooled"] / cache["norms"]
        dpooled = cfg.temperature / cache["norms"] * (demb - unit * np.sum(unit * demb, axis=1, keepdims=True))
    else:
        dpooled = demb
    t = cache["T"]
    dz = np.repeat(dpooled[:, None, :] / t, t, axis=1)
    for i in reversed(range(cfg.n_blocks)):
        dz, dq, dk, dv = attn_block_backward(
            dz, params[f"attn{i}.q"], params[f"attn{i}.k"], params[f"attn{i}.v"], cache["blocks"][i]
        )
        grads[f"attn{i}.q"], grads[f"attn{i}.k"], grads[f"attn{i}.v"] = dq, dk, dv
    h, x = cache["h"], cache["x"]
    grads["layer2"] = h.reshape(-1, h.shape[-1]).T @ dz.reshape(-1, dz.shape[-1])
    dh = dz @ params["layer2"].T
    dpre = np.where(cache["pre"] > 0.0, dh, 0.0)
    grads["layer1"] = x.reshape(-1, x.shape[-1]).T @ dpre.reshape(-1, dpre.shape[-1])
    return grads


def encode_videos(frames: np.ndarray, params: Params, cfg: ModelConfig) -> np.ndarray:
    """Video features ``(B, d)`` for a batch of frame stacks ``(B, T, D)``."""
    _check_params(params, cfg)
    return _forward(frames, params, cfg)[0]


def encode_video(frames: np.ndarray, params: Params, cfg: ModelConfig) -> np.ndarray:
    return encode_videos(np.asarray(frames)[None], params, cfg)[0]


def model_logits(video_embedding: np.ndarray, prototypes: PrototypeMatrix | np.ndarray) -> np.ndarray:
    """``W @ e``; accepts one embedding ``(d,)`` or a batch ``(B, d)``."""
    w = prototypes.weights if isinstance(prototypes, PrototypeMatrix) else np.asarray(prototypes)
    e = np.asarray(video_embedding, dtype=np.float64)
    if e.shape[-1] != w.shape[1]:
        raise ValueError(f"embedding dim {e.shape[-1]} != prototype dim {w.shape[1]}")
    return e @ w.T


def predict(frames: np.ndarray, params: Params, cfg: ModelConfig, prototypes: PrototypeMatrix) -> np.ndarray:
    """Argmax row index per video; ties go to the lowest index."""
    return np.argmax(model_logits(encode_videos(frames, params, cfg), prototypes), axis=1)


def loss_and_grads(
    frames: np.ndarray,
    rows: np.ndarray,
    params: Params,
    prototypes: PrototypeMatrix,
    cfg: ModelConfig,
) -> tuple[float, Params, np.ndarray]:
    """Mean cross-entropy over a batch, encoder gradients, and the logits.

    ``rows`` are prototype row indices. The prototype matrix is read only;
    no gradient is produced for it.
    """
    _check_params(params, cfg)
    emb, cache = _forward(frames, params, cfg)
    logits = model_logits(emb, prototypes)
    loss, dlogits = batch_cross_entropy(logits, np.asarray(rows))
    demb = dlogits @ prototypes.weights
    return loss, _backward(demb, params, cfg, cache), logits


def model_backward(
    frames: np.ndarray, label: int, params: Params, prototypes: PrototypeMatrix, cfg: ModelConfig
) -> tuple[float, Params]:
    """Loss and encoder gradients for one video ``(T, D)`` with prototype row ``label``."""
    if not 0 <= label < prototypes.weights.shape[0]:
        raise IndexError(f"label {label} out of range")
    loss, grads, _ = loss_and_grads(np.asarray(frames)[None], np.array([label]), params, prototypes, cfg)
    return loss, grads


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: Params, cfg: ModelConfig, path: str | Path) -> None:
    _check_params(params, cfg)
    blob = json.dumps(cfg.to_json(), sort_keys=True).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(blob)), blob]
    for name in cfg.param_shapes():
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        nb = name.encode("utf-8")
        parts += [struct.pack("<I", len(nb)), nb, struct.pack("<Q", arr.size), arr.tobytes()]
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> tuple[Params, ModelConfig]:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError("bad magic")
    if len(raw) < 12:
        raise FormatError("truncated")
    version, blen = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"version mismatch: file has {version}, expected {CHECKPOINT_VERSION}")
    off = 12
    if off + blen > len(raw):
        raise FormatError("truncated")
    try:
        cfg = ModelConfig.from_json(json.loads(raw[off:off + blen].decode("utf-8")))
    except (ValueError, TypeError) as exc:
        raise FormatError(f"bad config blob: {exc}") from exc
    off += blen
    shapes = cfg.param_shapes()
    params: Params = {}
    while off < len(raw):
        if off + 4 > len(raw):
            raise FormatError("truncated")
        (nlen,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off:off + nlen].decode("utf-8")
        off += nlen
        if off + 8 > len(raw):
            raise FormatError("truncated")
        (count,) = struct.unpack_from("<Q", raw, off)
        off += 8
        if off + 8 * count > len(raw):
            raise FormatError("truncated")
        if name not in shapes:
            raise FormatError(f"shape disagreement: unexpected array {name!r}")
        if count != math.prod(shapes[name]):
            raise FormatError(f"shape disagreement: {name} has {count} values, config implies {shapes[name]}")
        params[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=off).astype(np.float64).reshape(shapes[name])
        off += 8 * count
    missing = set(shapes) - set(params)
    if missing:
        raise FormatError(f"shape disagreement: missing arrays {sorted(missing)}")
    return params, cfg
