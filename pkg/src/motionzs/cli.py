"""``motionzs`` command line: gen, train, eval, sweep, ablate, gradcheck, stats, quality, mask.

Exit codes: 0 success, 1 runtime failure, 2 configuration or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import protomodel, qualstats, synthgen, textenc, trainer
from .config import ConfigError, ExperimentConfig, parse_config
from .numkit import grad_check_report

GRAD_TOL = 1e-5


class UsageError(Exception):
    """Bad input detected before any work starts (exit code 2)."""


def _write_config(cfg: ExperimentConfig, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "config.json").write_text(cfg.dumps() + "\n", encoding="utf-8")


def _data_files(cfg: ExperimentConfig) -> dict[str, Path]:
    d = Path(cfg.paths.data)
    return {
        "source_videos": d / "source.mdvb",
        "target_videos": d / "target.mdvb",
        "source_desc": d / "source.jsonl",
        "target_desc": d / "target.jsonl",
    }


def _load_split(cfg: ExperimentConfig, role: str) -> trainer.Split:
    files = _data_files(cfg)
    vids, desc = files[f"{role}_videos"], files[f"{role}_desc"]
    for f in (vids, desc):
        if not f.exists():
            raise UsageError(f"dataset not found: {f} (run `motionzs gen` first)")
    try:
        return trainer.Split(synthgen.read_videos(vids), textenc.read_descriptions(desc))
    except synthgen.FormatError as exc:
        raise UsageError(f"{vids}: {exc}") from None


def _checkpoint_path(cfg: ExperimentConfig, given: str | None) -> Path:
    path = Path(given) if given else Path(cfg.paths.checkpoints) / "final.mdck"
    if not path.exists():
        raise UsageError(f"checkpoint not found: {path}")
    return path


def _fmt(x: float | None) -> str:
    return "-" if x is None else f"{x:.2f}"


def results_table(rows: Sequence[tuple[str, float | None, float | None]], first: str = "Method") -> str:
    width = max(len(first), *(len(r[0]) for r in rows))
    lines = [f"{first:<{width}} | Object | Masked Object"]
    lines.append("-" * len(lines[0]))
    for name, obj, masked in rows:
        lines.append(f"{name:<{width}} | {_fmt(obj):>6} | {_fmt(masked):>13}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    files = _data_files(cfg)
    out_dir = Path(cfg.paths.data)
    out_dir.mkdir(parents=True, exist_ok=True)
    worlds = {}
    for role in ("source", "target"):
        sc = getattr(cfg.synth, role)
        descs, world = synthgen.gen_class_set(sc, role, cfg.text)
        worlds[role] = descs
        videos = synthgen.gen_dataset(world, sc)
        synthgen.write_videos(videos, files[f"{role}_videos"])
        textenc.write_descriptions(descs, files[f"{role}_desc"])
        print(f"{role}: {len(descs)} classes, {len(videos)} videos -> {files[f'{role}_videos']}")
    if not synthgen.verify_disjoint(worlds["source"], worlds["target"]):
        print("error: source and target class ids overlap", file=sys.stderr)
        return 1
    _write_config(cfg, out_dir)
    return 0


def _print_epoch(e: trainer.EpochLog) -> None:
    print(f"epoch {e.epoch:3d}  lr {e.lr:.3g}  loss {e.mean_loss:.4f}  train_acc {e.train_acc:.2f}")


def cmd_train(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    source = _load_split(cfg, "source")
    protos = protomodel.build_prototypes(source.descriptions, False, cfg.text)
    res = trainer.train(cfg.model, cfg.train, source.videos, protos, on_epoch=_print_epoch)
    ck = Path(cfg.paths.checkpoints)
    ck.mkdir(parents=True, exist_ok=True)
    protomodel.save_checkpoint(res.params, cfg.model, ck / "final.mdck")
    with open(ck / "epoch_log.jsonl", "w", encoding="utf-8") as fh:
        for e in res.log:
            fh.write(json.dumps(e.to_json()) + "\n")
    _write_config(cfg, ck)
    if cfg.train.grad_clip_norm is not None:
        print(f"gradient clipping at global norm {cfg.train.grad_clip_norm}")
    print(f"checkpoint -> {ck / 'final.mdck'}")
    return 0


def _report_name(masked: bool) -> str:
    return "eval_masked.json" if masked else "eval_object.json"


def cmd_eval(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    ck = _checkpoint_path(cfg, args.checkpoint)
    try:
        params, model_cfg = protomodel.load_checkpoint(ck)
    except synthgen.FormatError as exc:
        raise UsageError(f"{ck}: {exc}") from None
    source = _load_split(cfg, "source")
    target = _load_split(cfg, "target")
    report = trainer.evaluate_zero_shot(
        params, model_cfg, target.videos, target.descriptions, args.masked, cfg.text, source.class_ids
    )
    rep_dir = Path(cfg.paths.reports)
    rep_dir.mkdir(parents=True, exist_ok=True)
    (rep_dir / _report_name(args.masked)).write_text(report.dumps() + "\n", encoding="utf-8")
    _write_config(cfg, rep_dir)
    accs: dict[bool, float | None] = {args.masked: report.accuracy_percent, not args.masked: None}
    other = rep_dir / _report_name(not args.masked)
    if other.exists():
        accs[not args.masked] = json.loads(other.read_text())["accuracy_percent"]
    print(results_table([("Our Method (synthetic)", accs[False], accs[True])]))
    if accs[False] is not None and accs[True] is not None:
        print(f"masked delta: {accs[False] - accs[True]:+.2f} points (object - masked object)")
    return 0


def cmd_sweep(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    try:
        epochs = sorted({int(e) for e in args.epochs.split(",") if e.strip()})
    except ValueError:
        raise UsageError(f"--epochs must be a comma-separated list of integers, got {args.epochs!r}") from None
    if not epochs:
        raise UsageError("empty epoch list")
    if epochs[-1] > cfg.train.epochs:
        raise UsageError(
            f"missing checkpoint: epoch {epochs[-1]} is beyond the {cfg.train.epochs}-epoch schedule "
            f"(set train.epochs={epochs[-1]})"
        )
    source = _load_split(cfg, "source")
    target = _load_split(cfg, "target")
    protos = protomodel.build_prototypes(source.descriptions, False, cfg.text)
    res = trainer.train(cfg.model, cfg.train, source.videos, protos, save_every_epoch=True, on_epoch=_print_epoch)
    ck = Path(cfg.paths.checkpoints) / "sweep"
    ck.mkdir(parents=True, exist_ok=True)
    rows, payload = [], []
    for e in epochs:
        protomodel.save_checkpoint(res.checkpoints[e], cfg.model, ck / f"epoch_{e:03d}.mdck")
        r = {}
        for masked in (False, True):
            r[masked] = trainer.evaluate_zero_shot(
                res.checkpoints[e], cfg.model, target.videos, target.descriptions, masked, cfg.text,
                source.class_ids, epoch=e,
            )
        rows.append((f"Epoch {e}", r[False].accuracy_percent, r[True].accuracy_percent))
        payload.append({"epoch": e, "object": r[False].to_json(), "masked": r[True].to_json()})
    rep_dir = Path(cfg.paths.reports)
    rep_dir.mkdir(parents=True, exist_ok=True)
    (rep_dir / "sweep.json").write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    _write_config(cfg, rep_dir)
    print(results_table(rows, "Number of Epochs"))
    return 0


def cmd_ablate(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    source = _load_split(cfg, "source")
    target = _load_split(cfg, "target")
    layers = args.layers or cfg.model.attn_layers
    reports = {}
    for masked in (False, True):
        reports[masked] = trainer.temporal_ablation(cfg.model, cfg.train, source, target, cfg.text, layers, masked)
    rows = [
        (f"Temporal attention ({layers} layer{'s' if layers > 1 else ''})",
         reports[False]["attention"].accuracy_percent, reports[True]["attention"].accuracy_percent),
        ("Mean pooling", reports[False]["mean"].accuracy_percent, reports[True]["mean"].accuracy_percent),
    ]
    rep_dir = Path(cfg.paths.reports)
    rep_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        mode: {"object": reports[False][mode].to_json(), "masked": reports[True][mode].to_json()}
        for mode in ("mean", "attention")
    }
    payload["attn_layers"] = layers
    (rep_dir / "ablation.json").write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    _write_config(cfg, rep_dir)
    print(results_table(rows))
    return 0


def gradcheck_model(model_cfg: protomodel.ModelConfig, seed: int = 0, n_classes: int = 5,
                    batch: int = 2) -> dict[str, float]:
    """Per-parameter max relative error of the analytic gradient on a random batch."""
    rng = np.random.default_rng(seed)
    params = protomodel.init_params(model_cfg, seed, attn_scale=1.0)
    w = rng.normal(size=(n_classes, model_cfg.embed_dim))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    w.setflags(write=False)
    protos = protomodel.PrototypeMatrix(w, tuple(range(n_classes)))
    x = rng.normal(size=(batch, model_cfg.frames, model_cfg.frame_dim))
    rows = rng.integers(0, n_classes, size=batch)
    _, grads, _ = protomodel.loss_and_grads(x, rows, params, protos, model_cfg)
    f = lambda p: protomodel.loss_and_grads(x, rows, p, protos, model_cfg)[0]  # noqa: E731
    return grad_check_report(f, params, grads)


def cmd_gradcheck(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    variants = [cfg.model]
    if args.all:
        variants = [
            replace(cfg.model, temporal="mean"),
            replace(cfg.model, temporal="attention", attn_layers=1),
            replace(cfg.model, temporal="attention", attn_layers=6),
        ]
    worst_all = 0.0
    for mc in variants:
        report = gradcheck_model(mc, args.seed)
        worst = max(report.values())
        worst_all = max(worst_all, worst)
        label = mc.temporal if mc.temporal == "mean" else f"attention x{mc.attn_layers}"
        print(f"{label:<14} max rel. err {worst:.3e}  " + "  ".join(f"{k}={v:.1e}" for k, v in report.items()))
    ok = worst_all <= GRAD_TOL
    print(f"gradcheck {'PASS' if ok else 'FAIL'}: max rel. err {worst_all:.3e} (tolerance {GRAD_TOL:g})")
    return 0 if ok else 1


def cmd_stats(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    print(f"{'file':<40} {'descriptions':>12} {'avg words':>10}")
    for f in args.files:
        if not Path(f).exists():
            raise UsageError(f"description file not found: {f}")
        try:
            s = textenc.corpus_stats(textenc.read_descriptions(f))
        except ValueError as exc:
            raise UsageError(f"{f}: {exc}") from None
        print(f"{f:<40} {s.count:>12d} {s.avg_words:>10.2f}")
    return 0


def cmd_quality(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    if not args.ratings and not args.votes:
        raise UsageError("give --ratings and/or --votes")
    try:
        if args.ratings:
            print(f"{'Attribute':<16} | {'Mean':>5} | {'IAA%':>6}")
            for spec in args.ratings:
                name, _, path = spec.rpartition("=")
                name = name or Path(path).stem
                t = qualstats.read_ratings_csv(path)
                print(f"{name:<16} | {qualstats.likert_mean(t):>5.2f} | {qualstats.iaa_percent(t):>6.2f}")
        if args.votes:
            for pair, v in sorted(qualstats.read_votes_csv(args.votes).items()):
                win = qualstats.majority_vote(v)
                shown = "tie" if win is qualstats.Outcome.TIE else win
                print(f"pair {pair}: {shown} ({len(v.votes)} votes)")
    except FileNotFoundError as exc:
        raise UsageError(f"file not found: {exc.filename}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return 0


def cmd_mask(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    for f in (args.descriptions, args.lexicon):
        if not Path(f).exists():
            raise UsageError(f"file not found: {f}")
    descs = textenc.apply_lexicon(textenc.read_descriptions(args.descriptions), textenc.read_lexicon(args.lexicon))
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    textenc.write_descriptions(descs, out)
    changed = sum(d.tokens != d.masked_tokens for d in descs)
    print(f"masked {changed} of {len(descs)} descriptions -> {out}")
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
    "stats": cmd_stats,
    "quality": cmd_quality,
    "mask": cmd_mask,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="experiment config JSON (defaults when omitted)")
    common.add_argument("-s", "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted override, e.g. train.epochs=20 (repeatable)")
    p = argparse.ArgumentParser(prog="motionzs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="generate synthetic source/target data")
    sub.add_parser("train", parents=[common], help="fine-tune the visual encoder on source data")
    ev = sub.add_parser("eval", parents=[common], help="zero-shot evaluation on target data")
    ev.add_argument("--masked", action="store_true", help="use object-masked descriptions")
    ev.add_argument("--checkpoint", help="checkpoint path (default: <checkpoints>/final.mdck)")
    sw = sub.add_parser("sweep", parents=[common], help="accuracy at selected training epochs")
    sw.add_argument("--epochs", default="5,10", help="comma-separated epochs (default 5,10)")
    ab = sub.add_parser("ablate", parents=[common], help="mean pooling vs temporal attention")
    ab.add_argument("--layers", type=int, help="attention blocks (default model.attn_layers)")
    gc = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    gc.add_argument("--all", action="store_true", help="check mean, 1-block and 6-block variants")
    gc.add_argument("--seed", type=int, default=0)
    st = sub.add_parser("stats", parents=[common], help="corpus statistics of description files")
    st.add_argument("files", nargs="+")
    q = sub.add_parser("quality", parents=[common], help="Likert mean, IAA%% and majority votes")
    q.add_argument("--ratings", action="append", default=[], metavar="[NAME=]CSV")
    q.add_argument("--votes", metavar="CSV")
    m = sub.add_parser("mask", parents=[common], help="fill masked_tokens from an object lexicon")
    m.add_argument("descriptions")
    m.add_argument("lexicon")
    m.add_argument("-o", "--output", required=True)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, args.overrides)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
