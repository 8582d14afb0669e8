"""Zero-shot accuracy at several checkpoints of a single long training run."""
import argparse
from dataclasses import replace

from _common import TEXT, splits
from motionzs.config import SYNTHETIC_TRAIN
from motionzs.protomodel import ModelConfig
from motionzs.trainer import epoch_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, nargs="+", default=[5, 10, 15, 20])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    source, target = splits(args.seed)
    cfg = replace(SYNTHETIC_TRAIN, epochs=max(args.epochs))
    for rep in epoch_sweep(ModelConfig(), cfg, source, target, args.epochs, TEXT):
        print(f"epoch {rep.epoch:3d}  zero-shot {rep.accuracy_percent:6.2f}%")


if __name__ == "__main__":
    main()
