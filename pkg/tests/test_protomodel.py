import json
import struct

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from motionzs import protomodel as pm
from motionzs.numkit import grad_check, grad_check_report, softmax
from motionzs.synthgen import FormatError
from motionzs.textenc import Description, TextEncoderSpec, encode_description
from oracles import ref_encode

TEXT = TextEncoderSpec()
SMALL = pm.ModelConfig(frame_dim=3, hidden_dim=4, embed_dim=3, frames=2)


def unit_protos(rng, c, d):
    w = rng.normal(size=(c, d))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    w.setflags(write=False)
    return pm.PrototypeMatrix(w, tuple(range(c)))


def test_build_prototypes_examples():
    p = pm.build_prototypes([Description(0, "a", ["jump"])], False, TEXT)
    assert p.weights.shape == (1, TEXT.embed_dim)
    npt.assert_array_equal(p.weights[0], encode_description(["jump"], TEXT))
    twin = pm.build_prototypes([Description(0, "a", ["x", "y"]), Description(1, "b", ["y", "x"])], False, TEXT)
    npt.assert_array_equal(twin.weights[0], twin.weights[1])


def test_build_prototypes_masked_row_matches_oracle():
    d = Description(4, "x", ["strumming", "guitar", "strings"], ["strumming", "object", "strings"])
    plain = pm.build_prototypes([d], False, TEXT).weights[0]
    masked = pm.build_prototypes([d], True, TEXT)
    assert masked.masked
    npt.assert_allclose(masked.weights[0], ref_encode(d.masked_tokens, TEXT.token_dim, TEXT.embed_dim,
                                                      TEXT.projection_seed), atol=1e-12, rtol=0)
    assert np.abs(masked.weights[0] - plain).max() > 1e-3


def test_build_prototypes_order_and_errors():
    p = pm.build_prototypes([Description(9, "b", ["b"]), Description(2, "a", ["a"])], False, TEXT)
    assert p.class_ids == (2, 9)
    with pytest.raises(ValueError, match="duplicate"):
        pm.build_prototypes([Description(1, "a", ["a"]), Description(1, "b", ["b"])], False, TEXT)
    with pytest.raises(ValueError):
        pm.build_prototypes([], False, TEXT)
    assert not p.weights.flags.writeable


def test_sample_frames_examples():
    assert pm.sample_frames(8, 8) == list(range(8))
    assert pm.sample_frames(16, 8) == [1, 3, 5, 7, 9, 11, 13, 15]
    assert pm.sample_frames(3, 8) == [0, 0, 0, 1, 1, 2, 2, 2]
    with pytest.raises(ValueError):
        pm.sample_frames(0, 8)


@given(st.integers(1, 200), st.integers(1, 32))
def test_sample_frames_properties(n, t):
    idx = pm.sample_frames(n, t)
    assert len(idx) == t
    assert all(0 <= i < n for i in idx)
    assert idx == sorted(idx)


def test_encode_video_identical_frames_mean_mode():
    rng = np.random.default_rng(0)
    cfg = pm.ModelConfig(frame_dim=5, hidden_dim=6, embed_dim=4, frames=3)
    p = pm.init_params(cfg, 1)
    f = rng.normal(size=5)
    single = p["layer2"].T @ np.maximum(p["layer1"].T @ f, 0)
    npt.assert_allclose(pm.encode_video(np.tile(f, (3, 1)), p, cfg), single, atol=1e-14)


def test_encode_video_zero_params():
    cfg = pm.ModelConfig(frame_dim=5, hidden_dim=6, embed_dim=4, frames=3, temporal="attention")
    p = {k: np.zeros(s) for k, s in cfg.param_shapes().items()}
    npt.assert_array_equal(pm.encode_video(np.ones((3, 5)), p, cfg), np.zeros(4))


def test_encode_video_shape_errors():
    p = pm.init_params(SMALL)
    with pytest.raises(ValueError):
        pm.encode_video(np.ones((2, 4)), p, SMALL)
    with pytest.raises(ValueError):
        pm.encode_video(np.ones((2, 3)), {"layer1": p["layer1"]}, SMALL)


def test_normalized_zero_feature_errors():
    cfg = pm.ModelConfig(frame_dim=3, hidden_dim=4, embed_dim=3, frames=2, normalize=True)
    p = {k: np.zeros(s) for k, s in cfg.param_shapes().items()}
    with pytest.raises(FloatingPointError):
        pm.encode_video(np.ones((2, 3)), p, cfg)


def test_attn_block_equal_inputs():
    rng = np.random.default_rng(2)
    d, t = 4, 5
    q, k, v = (rng.normal(size=(d, d)) for _ in range(3))
    z = np.tile(rng.normal(size=d), (t, 1))
    out, cache = pm.attn_block(z, q, k, v)
    npt.assert_allclose(cache["w"], np.full((t, t), 1 / t), atol=1e-12)
    npt.assert_allclose(out, z + z @ v.T, atol=1e-12)
    one, _ = pm.attn_block(z[:1], q, k, v)
    npt.assert_allclose(one, z[:1] + z[:1] @ v.T, atol=1e-12)


def test_attn_block_shape_mismatch():
    with pytest.raises(ValueError):
        pm.attn_block(np.ones((2, 3)), np.eye(2), np.eye(3), np.eye(3))


def test_attn_block_backward_finite_differences():
    rng = np.random.default_rng(5)
    d, t = 3, 4
    params = {"z": rng.normal(size=(t, d)), "q": rng.normal(size=(d, d)),
              "k": rng.normal(size=(d, d)), "v": rng.normal(size=(d, d))}
    up = rng.normal(size=(t, d))
    out, cache = pm.attn_block(params["z"], params["q"], params["k"], params["v"])
    dz, dq, dk, dv = pm.attn_block_backward(up, params["q"], params["k"], params["v"], cache)
    f = lambda p: float(np.sum(up * pm.attn_block(p["z"], p["q"], p["k"], p["v"])[0]))  # noqa: E731
    assert grad_check(f, params, {"z": dz, "q": dq, "k": dk, "v": dv}) <= 1e-5


def test_model_logits_examples():
    e = pm.PrototypeMatrix(np.eye(3), (10, 11, 12))
    assert int(np.argmax(pm.model_logits(np.array([1.0, 0, 0]), e))) == 0
    zero = pm.model_logits(np.zeros(3), e)
    npt.assert_array_equal(zero, 0)
    npt.assert_allclose(softmax(zero), [1 / 3] * 3)
    w = np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]])
    npt.assert_array_equal(pm.model_logits(np.array([1.0, -1.0]), w), [-1.0, 4.0, 0.0])
    with pytest.raises(ValueError):
        pm.model_logits(np.ones(2), e)


@given(hnp.arrays(np.float64, 4, elements=st.floats(-5, 5)), st.floats(1e-3, 1e3))
def test_argmax_invariant_to_positive_scale(e, s):
    w = np.random.default_rng(0).normal(size=(6, 4))
    assert np.argmax(pm.model_logits(e, w)) == np.argmax(pm.model_logits(s * e, w))


def test_logits_independent_of_t_for_identical_frames():
    rng = np.random.default_rng(1)
    cfg = pm.ModelConfig(frame_dim=5, hidden_dim=6, embed_dim=4, frames=8)
    p = pm.init_params(cfg, 3)
    protos = unit_protos(rng, 5, 4)
    f = rng.normal(size=5)
    outs = [pm.model_logits(pm.encode_video(np.tile(f, (t, 1)), p, cfg), protos) for t in (1, 2, 8, 13)]
    for o in outs[1:]:
        npt.assert_allclose(o, outs[0], atol=1e-13)


def test_logit_gradient_uniform_minus_onehot():
    cfg = SMALL
    p = {k: np.zeros(s) for k, s in cfg.param_shapes().items()}
    protos = unit_protos(np.random.default_rng(0), 4, 3)
    x = np.ones((1, 2, 3))
    _, _, logits = pm.loss_and_grads(x, np.array([2]), p, protos, cfg)
    from motionzs.numkit import cross_entropy

    _, g = cross_entropy(logits[0], 2)
    npt.assert_allclose(g, [0.25, 0.25, -0.75, 0.25])


@pytest.mark.parametrize(
    "cfg",
    [
        SMALL,
        pm.ModelConfig(frame_dim=3, hidden_dim=4, embed_dim=3, frames=2, temporal="attention", attn_layers=1),
        pm.ModelConfig(frame_dim=3, hidden_dim=4, embed_dim=3, frames=2, temporal="attention", attn_layers=6),
        pm.ModelConfig(frame_dim=3, hidden_dim=4, embed_dim=3, frames=2, normalize=True, temperature=5.0),
        pm.ModelConfig(frame_dim=3, hidden_dim=4, embed_dim=3, frames=3, temporal="attention",
                       attn_layers=2, normalize=True, temperature=2.0),
    ],
    ids=["mean", "attn1", "attn6", "mean-norm", "attn2-norm"],
)
def test_model_backward_gradient_check(cfg):
    rng = np.random.default_rng(11)
    p = pm.init_params(cfg, 4, attn_scale=1.0)
    protos = unit_protos(rng, 2, 3)
    x = rng.normal(size=(cfg.frames, 3))
    loss, grads = pm.model_backward(x, 1, p, protos, cfg)
    report = grad_check_report(lambda q: pm.model_backward(x, 1, q, protos, cfg)[0], p, grads)
    assert set(report) == set(cfg.param_shapes())
    assert max(report.values()) <= 1e-5, report


def test_model_backward_label_range():
    protos = unit_protos(np.random.default_rng(0), 2, 3)
    with pytest.raises(IndexError):
        pm.model_backward(np.ones((2, 3)), 2, pm.init_params(SMALL), protos, SMALL)


def test_gradients_do_not_depend_on_prototypes_after_backward():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(2, 3))
    protos = pm.PrototypeMatrix(w, (0, 1))
    p = pm.init_params(SMALL, 0)
    x = rng.normal(size=(2, 3))
    _, grads = pm.model_backward(x, 0, p, protos, SMALL)
    snapshot = {k: v.copy() for k, v in grads.items()}
    w += 5.0
    for k in grads:
        npt.assert_array_equal(grads[k], snapshot[k])
    assert "prototypes" not in grads


def test_encode_video_deterministic():
    cfg = pm.ModelConfig(frame_dim=3, hidden_dim=4, embed_dim=3, frames=4, temporal="attention", attn_layers=2)
    p = pm.init_params(cfg, 9)
    x = np.random.default_rng(1).normal(size=(4, 3))
    assert pm.encode_video(x, p, cfg).tobytes() == pm.encode_video(x, p, cfg).tobytes()


def test_config_validation():
    with pytest.raises(ValueError):
        pm.ModelConfig(temporal="lstm")
    with pytest.raises(ValueError):
        pm.ModelConfig(temporal="attention", attn_layers=0)
    with pytest.raises(ValueError):
        pm.ModelConfig(frames=0)


# ---------------------------------------------------------------------------
# checkpoints


@settings(max_examples=20)
@given(seed=st.integers(0, 2**32 - 1), mode=st.sampled_from(["mean", "attention"]))
def test_checkpoint_round_trip(tmp_path_factory, seed, mode):
    cfg = pm.ModelConfig(frame_dim=3, hidden_dim=4, embed_dim=3, frames=2, temporal=mode, attn_layers=2)
    p = pm.init_params(cfg, seed)
    p["layer1"][0, 0] = np.nextafter(1.0, 2.0)
    path = tmp_path_factory.mktemp("ck") / "m.mdck"
    pm.save_checkpoint(p, cfg, path)
    back, cfg2 = pm.load_checkpoint(path)
    assert cfg2 == cfg
    assert set(back) == set(p)
    for k in p:
        assert back[k].tobytes() == p[k].tobytes()


def test_checkpoint_errors(tmp_path):
    p = pm.init_params(SMALL)
    path = tmp_path / "m.mdck"
    pm.save_checkpoint(p, SMALL, path)
    raw = path.read_bytes()
    (tmp_path / "bad.mdck").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(FormatError, match="bad magic"):
        pm.load_checkpoint(tmp_path / "bad.mdck")
    (tmp_path / "ver.mdck").write_bytes(raw[:4] + struct.pack("<I", 9) + raw[8:])
    with pytest.raises(FormatError, match="version"):
        pm.load_checkpoint(tmp_path / "ver.mdck")
    (tmp_path / "short.mdck").write_bytes(raw[:-5])
    with pytest.raises(FormatError, match="truncated"):
        pm.load_checkpoint(tmp_path / "short.mdck")
    # same arrays, config claiming a wider hidden layer
    (blen,) = struct.unpack_from("<I", raw, 8)
    blob = json.loads(raw[12:12 + blen])
    blob["hidden_dim"] = 5
    nb = json.dumps(blob, sort_keys=True).encode()
    (tmp_path / "shape.mdck").write_bytes(raw[:8] + struct.pack("<I", len(nb)) + nb + raw[12 + blen:])
    with pytest.raises(FormatError, match="shape disagreement"):
        pm.load_checkpoint(tmp_path / "shape.mdck")
