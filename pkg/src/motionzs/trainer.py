"""Fine-tuning on source classes and zero-shot evaluation on target classes."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .numkit import AdamState, Params, Schedule, adam_step, clip_global_norm, lr_at
from .protomodel import ModelConfig, PrototypeMatrix, build_prototypes, init_params, loss_and_grads, predict, sample_frames
from .synthgen import VideoSet, verify_disjoint
from .textenc import Description, TextEncoderSpec


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 20
    base_lr: float = 5e-5
    warmup_epochs: int = 5
    weight_decay: float = 0.2
    grad_clip_norm: float | None = None
    seed: int = 0
    init_seed: int = 0
    runs: int = 1

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.runs < 1:
            raise ValueError("epochs, batch_size and runs must be >= 1")
        if self.base_lr < 0 or self.weight_decay < 0:
            raise ValueError("base_lr and weight_decay must be >= 0")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ValueError("need 0 <= warmup_epochs <= epochs")
        if self.grad_clip_norm is not None and self.grad_clip_norm <= 0:
            raise ValueError("grad_clip_norm must be > 0 when set")


@dataclass
class EpochLog:
    epoch: int
    lr: float
    mean_loss: float
    train_acc: float
    wall_ms: float

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    params: Params
    log: list[EpochLog]
    checkpoints: dict[int, Params] = field(default_factory=dict)
    batch_losses: list[list[float]] = field(default_factory=list)


@dataclass
class EvalReport:
    accuracy_percent: float
    per_class: list[tuple[int, int, int]]  # (class_id, correct, total)
    masked: bool
    epoch: int | None = None

    def to_json(self) -> dict:
        out = {
            "accuracy_percent": self.accuracy_percent,
            "masked": self.masked,
            "per_class": [{"class_id": c, "correct": k, "total": n} for c, k, n in self.per_class],
        }
        if self.epoch is not None:
            out["epoch"] = self.epoch
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def model_inputs(videos: VideoSet, cfg: ModelConfig) -> np.ndarray:
    """Float64 frames with the time axis resampled to ``cfg.frames``."""
    n_frames = videos.frames.shape[1]
    frames = videos.frames
    if n_frames != cfg.frames:
        frames = frames[:, sample_frames(n_frames, cfg.frames), :]
    return frames.astype(np.float64)


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    source: VideoSet,
    prototypes: PrototypeMatrix,
    params: Params | None = None,
    save_every_epoch: bool = False,
    on_epoch: Callable[[EpochLog], None] | None = None,
) -> TrainResult:
    """Fit the visual encoder with cross-entropy against frozen prototypes.

    Each epoch visits a seeded permutation of the data in mini-batches (the
    last short batch is kept), using AdamW at the epoch's scheduled rate.
    """
    if len(source) == 0:
        raise ValueError("empty source dataset")
    if prototypes.weights.shape[1] != model_cfg.embed_dim:
        raise ValueError("prototype dimension does not match model embed_dim")
    rows = prototypes.rows_for(source.labels)
    x = model_inputs(source, model_cfg)
    params = {k: v.copy() for k, v in (params or init_params(model_cfg, train_cfg.init_seed)).items()}
    sched = Schedule(train_cfg.base_lr or 1.0, train_cfg.warmup_epochs, train_cfg.epochs)
    state = AdamState()
    result = TrainResult(params, [])
    n = len(source)
    for epoch in range(train_cfg.epochs):
        t0 = time.perf_counter()
        lr = lr_at(epoch, sched) if train_cfg.base_lr > 0 else 0.0
        order = np.random.default_rng([train_cfg.seed, epoch]).permutation(n)
        losses: list[float] = []
        correct = 0
        for start in range(0, n, train_cfg.batch_size):
            idx = order[start:start + train_cfg.batch_size]
            loss, grads, logits = loss_and_grads(x[idx], rows[idx], params, prototypes, model_cfg)
            losses.append(loss)
            correct += int(np.sum(np.argmax(logits, axis=1) == rows[idx]))
            if train_cfg.grad_clip_norm is not None:
                grads, _ = clip_global_norm(grads, train_cfg.grad_clip_norm)
            params, state = adam_step(params, grads, state, lr, train_cfg.weight_decay)
        entry = EpochLog(
            epoch=epoch + 1,
            lr=lr,
            mean_loss=float(np.mean(losses)),
            train_acc=100.0 * correct / n,
            wall_ms=1000.0 * (time.perf_counter() - t0),
        )
        result.log.append(entry)
        result.batch_losses.append(losses)
        if save_every_epoch:
            result.checkpoints[epoch + 1] = {k: v.copy() for k, v in params.items()}
        if on_epoch is not None:
            on_epoch(entry)
    result.params = params
    return result


def _count(
    x: np.ndarray, rows: np.ndarray, params: Params, cfg: ModelConfig, protos: PrototypeMatrix
) -> np.ndarray:
    c = protos.weights.shape[0]
    pred = predict(x, params, cfg, protos)
    hits = np.bincount(rows[pred == rows], minlength=c)
    totals = np.bincount(rows, minlength=c)
    return np.stack([hits, totals])


def accuracy_report(
    x: np.ndarray,
    labels: np.ndarray,
    params: Params,
    cfg: ModelConfig,
    prototypes: PrototypeMatrix,
    workers: int = 1,
    epoch: int | None = None,
) -> EvalReport:
    """Top-1 accuracy of the argmax prototype with per-class counts."""
    rows = prototypes.rows_for(labels)
    if workers <= 1:
        counts = _count(x, rows, params, cfg, prototypes)
    else:
        chunks = np.array_split(np.arange(len(rows)), workers)
        with ThreadPoolExecutor(workers) as pool:
            parts = pool.map(lambda ix: _count(x[ix], rows[ix], params, cfg, prototypes), chunks)
            counts = sum(parts)
    per_class = [
        (cid, int(counts[0, i]), int(counts[1, i]))
        for i, cid in enumerate(prototypes.class_ids)
        if counts[1, i] > 0
    ]
    total = int(counts[1].sum())
    acc = 100.0 * int(counts[0].sum()) / total
    return EvalReport(acc, per_class, prototypes.masked, epoch)


def evaluate_zero_shot(
    params: Params,
    cfg: ModelConfig,
    target: VideoSet,
    descriptions: Sequence[Description],
    masked: bool,
    text: TextEncoderSpec,
    source_class_ids: Sequence[int] | None = None,
    workers: int = 1,
    epoch: int | None = None,
) -> EvalReport:
    """Score target videos against prototypes built from unseen target descriptions."""
    if len(target) == 0:
        raise ValueError("empty target dataset")
    if source_class_ids is not None and not verify_disjoint(source_class_ids, descriptions):
        raise ValueError("target classes overlap source classes; not a zero-shot split")
    protos = build_prototypes(descriptions, masked, text)
    return accuracy_report(model_inputs(target, cfg), target.labels, params, cfg, protos, workers, epoch)


@dataclass
class MaskedDelta:
    unmasked: EvalReport
    masked: EvalReport

    @property
    def delta(self) -> float:
        return self.unmasked.accuracy_percent - self.masked.accuracy_percent


def masked_delta_report(
    params: Params,
    cfg: ModelConfig,
    target: VideoSet,
    descriptions: Sequence[Description],
    text: TextEncoderSpec,
    source_class_ids: Sequence[int] | None = None,
) -> MaskedDelta:
    return MaskedDelta(
        evaluate_zero_shot(params, cfg, target, descriptions, False, text, source_class_ids),
        evaluate_zero_shot(params, cfg, target, descriptions, True, text, source_class_ids),
    )


@dataclass
class Split:
    """Videos plus the descriptions of the classes they belong to."""

    videos: VideoSet
    descriptions: list[Description]

    @property
    def class_ids(self) -> list[int]:
        return [d.class_id for d in self.descriptions]


def fit_source(model_cfg: ModelConfig, train_cfg: TrainConfig, source: Split, text: TextEncoderSpec,
               save_every_epoch: bool = False) -> TrainResult:
    protos = build_prototypes(source.descriptions, False, text)
    return train(model_cfg, train_cfg, source.videos, protos, save_every_epoch=save_every_epoch)


def best_of_runs(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    source: Split,
    target: Split,
    text: TextEncoderSpec,
    masked: bool = False,
) -> tuple[EvalReport, TrainResult]:
    """Train ``train_cfg.runs`` times with shifted seeds; keep the best target score."""
    best: tuple[EvalReport, TrainResult] | None = None
    for r in range(train_cfg.runs):
        cfg_r = replace(train_cfg, seed=train_cfg.seed + r, init_seed=train_cfg.init_seed + r)
        res = fit_source(model_cfg, cfg_r, source, text)
        rep = evaluate_zero_shot(res.params, model_cfg, target.videos, target.descriptions, masked, text,
                                 source.class_ids)
        if best is None or rep.accuracy_percent > best[0].accuracy_percent:
            best = (rep, res)
    assert best is not None
    return best


def epoch_sweep(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    source: Split,
    target: Split,
    epochs: Sequence[int],
    text: TextEncoderSpec,
    masked: bool = False,
) -> list[EvalReport]:
    """Zero-shot accuracy after selected epochs of a single training run."""
    wanted = sorted(set(epochs))
    if not wanted:
        raise ValueError("empty epoch list")
    bad = [e for e in wanted if not 1 <= e <= train_cfg.epochs]
    if bad:
        raise KeyError(f"missing checkpoint for epochs {bad} (schedule has {train_cfg.epochs})")
    res = fit_source(model_cfg, train_cfg, source, text, save_every_epoch=True)
    return [
        evaluate_zero_shot(res.checkpoints[e], model_cfg, target.videos, target.descriptions, masked, text,
                           source.class_ids, epoch=e)
        for e in wanted
    ]


def temporal_ablation(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    source: Split,
    target: Split,
    text: TextEncoderSpec,
    attn_layers: int | None = None,
    masked: bool = False,
) -> dict[str, EvalReport]:
    """Train mean-pooling and attention-head variants under identical seeds."""
    layers = attn_layers or model_cfg.attn_layers
    out = {}
    for mode in ("mean", "attention"):
        cfg = replace(model_cfg, temporal=mode, attn_layers=layers)
        res = fit_source(cfg, train_cfg, source, text)
        out[mode] = evaluate_zero_shot(res.params, cfg, target.videos, target.descriptions, masked, text,
                                       source.class_ids)
    return out
