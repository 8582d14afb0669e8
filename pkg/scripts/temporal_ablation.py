"""Mean pooling vs attention heads of increasing depth, same seeds and data."""
import argparse

from _common import TEXT, splits
from motionzs.config import SYNTHETIC_TRAIN
from motionzs.protomodel import ModelConfig
from motionzs.trainer import temporal_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--layers", type=int, nargs="+", default=[1, 2, 6])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    source, target = splits(args.seed)
    for n in args.layers:
        out = temporal_ablation(ModelConfig(), SYNTHETIC_TRAIN, source, target, TEXT, attn_layers=n)
        print(f"attn_layers {n}:  mean {out['mean'].accuracy_percent:6.2f}%  "
              f"attention {out['attention'].accuracy_percent:6.2f}%")


if __name__ == "__main__":
    main()
