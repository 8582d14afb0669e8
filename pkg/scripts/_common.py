"""Shared setup for the experiment scripts: build source/target splits in memory."""
from motionzs.synthgen import SynthConfig, gen_class_set, gen_dataset
from motionzs.textenc import TextEncoderSpec
from motionzs.trainer import Split

TEXT = TextEncoderSpec()


def splits(seed=0, beta=0.0, p_obj=0.0, sigma=0.1, source_classes=40, target_classes=10):
    common = dict(embed_dim=TEXT.embed_dim, noise_sigma=sigma, object_strength=beta, object_prob=p_obj)
    sc = SynthConfig(seed=seed, num_classes=source_classes, videos_per_class=50, **common)
    tc = SynthConfig(seed=seed + 1000, num_classes=target_classes, videos_per_class=20, **common)
    sd, sw = gen_class_set(sc, "source", TEXT)
    td, tw = gen_class_set(tc, "target", TEXT)
    return Split(gen_dataset(sw, sc), sd), Split(gen_dataset(tw, tc), td)
