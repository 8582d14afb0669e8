import pytest
from hypothesis import settings

from motionzs.synthgen import SynthConfig, gen_class_set, gen_dataset
from motionzs.textenc import TextEncoderSpec
from motionzs.trainer import Split

settings.register_profile("default", deadline=None)
settings.load_profile("default")

TEXT = TextEncoderSpec()


def make_splits(seed=0, source_classes=40, source_videos=50, target_classes=10, target_videos=20,
                sigma=0.1, beta=0.0, p_obj=0.0, frame_dim=32, text=TEXT):
    common = dict(frames_per_video=8, frame_dim=frame_dim, embed_dim=text.embed_dim, noise_sigma=sigma,
                  object_strength=beta, object_prob=p_obj)
    sc = SynthConfig(seed=seed, num_classes=source_classes, videos_per_class=source_videos, **common)
    tc = SynthConfig(seed=seed + 1000, num_classes=target_classes, videos_per_class=target_videos, **common)
    sd, sw = gen_class_set(sc, "source", text)
    td, tw = gen_class_set(tc, "target", text)
    return Split(gen_dataset(sw, sc), sd), Split(gen_dataset(tw, tc), td), tw


@pytest.fixture(scope="session")
def tiny_splits():
    return make_splits(source_classes=6, source_videos=7, target_classes=4, target_videos=5)


@pytest.fixture(scope="session")
def default_splits():
    return make_splits()
