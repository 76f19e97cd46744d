import json
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vheat.autograd import Tensor, grad_check, ops
from vheat.backbone import (PRESETS, ModelConfig, analytic_param_count, base_config, build_model, forward,
                            micro_config, small_config, tiny_config)
from vheat.checkpoint import (MAGIC, Checkpoint, CheckpointError, decode, encode, expected_size, from_model,
                              load_checkpoint, read_checkpoint, save_checkpoint)
from vheat.train import AdamW
from vheat.verify import micro_backbone_case, randomize_parameters


@pytest.fixture(scope="module")
def micro():
    return build_model(micro_config(), seed=0)


def images(rng, B=2, R=32):
    return rng.standard_normal((B, 3, R, R)).astype(np.float32)


def test_presets():
    t = tiny_config()
    assert t.layers == (2, 2, 6, 2) and t.channels == (96, 192, 384, 768)
    assert t.mlp_ratio == 4 and t.drop_path == 0.1
    assert small_config().layers == (2, 2, 18, 2) and small_config().drop_path == 0.3
    b = base_config()
    assert b.layers == (4, 4, 20, 4) and b.channels == (96, 192, 384, 768) and b.drop_path == 0.5
    m = micro_config()
    assert m.layers == (2, 2, 2, 2) and m.channels == (16, 32, 64, 128)
    assert m.input_extent == 32 and m.num_classes == 10
    assert set(PRESETS) == {"tiny", "small", "base", "micro"}


def test_config_validation():
    with pytest.raises(ValueError, match="increase"):
        ModelConfig(channels=(8, 8, 16, 32))
    with pytest.raises(ValueError, match="4 stages"):
        ModelConfig(layers=(1, 1, 1))
    with pytest.raises(ValueError, match="unknown"):
        ModelConfig.from_dict({"preset": "micro", "width": 3})
    with pytest.raises(ValueError, match="divisible by 32"):
        build_model(micro_config(input_extent=48))


def test_config_json_round_trip(tmp_path):
    cfg = micro_config(num_classes=7, k_mode="fixed", fixed_k=1.0)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ModelConfig.from_json(path) == cfg
    assert ModelConfig.from_dict({"preset": "micro", "num_classes": 4}).num_classes == 4


def test_micro_forward_shape(micro, rng):
    assert forward(micro, images(rng)).shape == (2, 10)


def test_tiny_param_count():
    cfg = tiny_config()
    n = analytic_param_count(cfg)
    assert abs(n - 29e6) / 29e6 < 0.10
    assert build_model(cfg).num_parameters() == n


@pytest.mark.parametrize("preset", ["micro", "small"])
def test_analytic_count_matches_model(preset):
    cfg = PRESETS[preset]()
    assert build_model(cfg).num_parameters() == analytic_param_count(cfg)


def test_same_seed_same_parameters():
    a, b = build_model(micro_config(), 5), build_model(micro_config(), 5)
    c = build_model(micro_config(), 6)
    assert all(np.array_equal(x, y) for x, y in zip(a.state_dict().values(), b.state_dict().values()))
    assert any(not np.array_equal(x, y) for x, y in zip(a.state_dict().values(), c.state_dict().values()))


def test_identity_at_init(micro, rng):
    logits = micro(images(rng, 3)).data
    assert (logits == logits[:, :1]).all()
    loss = ops.cross_entropy(micro(images(rng, 4)), np.array([0, 1, 2, 3]), 0.1).item()
    assert abs(loss - math.log(10)) < 1e-4


def test_stage_features_equal_stem_path_at_init(micro, rng):
    # every heat layer is the identity, so stage outputs are stem/downsample outputs
    x = images(rng, 1)
    feats = micro.features(x)
    h = micro.stem(Tensor(x))
    np.testing.assert_array_equal(feats[0].data, h.data)
    for s in range(3):
        h = micro.downsamples[s](h)
        np.testing.assert_array_equal(feats[s + 1].data, h.data)


@settings(max_examples=3, deadline=None)
@given(st.sampled_from([32, 64, 96]))
def test_shape_audit(extent):
    model = build_model(micro_config(), 0)
    if extent != 32:
        model.resize(extent, extent)
    feats = model.features(np.zeros((1, 3, extent, extent), np.float32))
    for s, f in enumerate(feats):
        assert f.shape == (1, model.cfg.channels[s], extent // 4 // 2 ** s, extent // 4 // 2 ** s)


def test_extent_mismatch_needs_resize(rng):
    model = build_model(micro_config(), 0)
    with pytest.raises(ValueError, match="resize"):
        model(images(rng, 1, 64))
    model.resize(64, 64)
    assert model(images(rng, 1, 64)).shape == (1, 10)
    assert model.stages[0].fve.extent == (16, 16)


def test_resize_changes_only_spatial_extents(rng):
    model = build_model(micro_config(), 0)
    randomize_parameters(model, rng, 0.05)
    n = model.num_parameters()
    model.resize(64, 64)
    assert model.num_parameters() > n  # tables grow with the extent
    feats = model.features(images(rng, 1, 64))
    assert [f.shape[1] for f in feats] == list(model.cfg.channels)
    assert [f.shape[2] for f in feats] == [16, 8, 4, 2]


def test_fixed_k_model_runs_at_other_extents(rng):
    model = build_model(micro_config(k_mode="fixed", fixed_k=1.0), 0)
    assert model(images(rng, 1, 64)).shape == (1, 10)


def test_eval_forward_deterministic(rng):
    model = build_model(micro_config(), 0)
    randomize_parameters(model, rng, 0.05)
    x = images(rng)
    assert model(x).data.tobytes() == model(x).data.tobytes()


def test_backbone_gradient_spot_check():
    fn, inputs = micro_backbone_case(0)
    assert grad_check(fn, inputs, max_elements=64, seed=1) < 1e-4


# --- checkpoints ----------------------------------------------------------------

@pytest.fixture
def trained(rng):
    model = build_model(micro_config(), 3)
    randomize_parameters(model, rng, 0.05)
    return model


def test_round_trip_bitwise(trained, tmp_path, rng):
    path = tmp_path / "m.ckpt"
    save_checkpoint(trained, path, extra={"note": "x"})
    loaded = load_checkpoint(path)
    for (n1, a), (n2, b) in zip(trained.named_parameters(), loaded.named_parameters()):
        assert n1 == n2 and a.data.tobytes() == b.data.tobytes()
    x = images(rng)
    assert trained(x).data.tobytes() == loaded(x).data.tobytes()
    assert loaded.checkpoint_extra == {"note": "x"}
    assert loaded.cfg == trained.cfg and loaded.seed == 3


def test_header_layout(trained):
    buf = encode(from_model(trained))
    assert buf[:8] == MAGIC == b"VHEAT001"
    (hlen,) = struct.unpack("<I", buf[8:12])
    header = json.loads(buf[12:12 + hlen])
    assert header["config"]["channels"] == [16, 32, 64, 128]
    (count,) = struct.unpack("<I", buf[12 + hlen:16 + hlen])
    assert count == len(list(trained.named_parameters()))


def test_size_formula(trained, tmp_path):
    ck = from_model(trained)
    nbytes = save_checkpoint(trained, tmp_path / "a.ckpt")
    assert nbytes == expected_size(ck) == (tmp_path / "a.ckpt").stat().st_size
    payload = 4 * trained.num_parameters()
    assert payload < nbytes < payload + 64 * 1024


def test_optimizer_state_round_trip(trained):
    opt = AdamW(trained.parameters())
    opt.step([np.ones_like(p.data) for p in opt.params], 1e-3)
    ck = decode(encode(from_model(trained, opt)))
    assert ck.optimizer["step"] == 1
    name = next(iter(ck.optimizer["m"]))
    assert ck.optimizer["m"][name].shape == dict(trained.named_parameters())[name].shape


def test_truncation_names_record(trained, tmp_path):
    buf = encode(from_model(trained))
    for cut in (4, 10, 200, len(buf) // 2, len(buf) - 3):
        with pytest.raises(CheckpointError, match="truncated checkpoint while reading"):
            decode(buf[:cut])
    with pytest.raises(CheckpointError, match="record 'stem.conv1.weight' payload"):
        hlen = struct.unpack("<I", buf[8:12])[0]
        decode(buf[:16 + hlen + 4 + len("stem.conv1.weight") + 1 + 16 + 10])


def test_bad_magic_version_checksum(trained):
    buf = encode(from_model(trained))
    with pytest.raises(CheckpointError, match="magic"):
        decode(b"NOTHEAT1" + buf[8:])
    with pytest.raises(CheckpointError, match="version 2"):
        decode(b"VHEAT002" + buf[8:])
    flipped = bytearray(buf)
    flipped[-20] ^= 1
    with pytest.raises(CheckpointError, match="checksum"):
        decode(bytes(flipped))
    with pytest.raises(CheckpointError, match="trailing"):
        decode(buf + b"\0")


def test_resized_model_not_checkpointed(trained, tmp_path):
    trained.resize(64, 64)
    with pytest.raises(CheckpointError):
        save_checkpoint(trained, tmp_path / "r.ckpt")


def test_read_checkpoint_dataclass(trained, tmp_path):
    save_checkpoint(trained, tmp_path / "c.ckpt")
    ck = read_checkpoint(tmp_path / "c.ckpt")
    assert isinstance(ck, Checkpoint) and ck.format_version == 1 and ck.optimizer is None
