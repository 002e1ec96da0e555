import numpy as np
import pytest

from hybkan.checkpoint import (
    CheckpointError,
    CheckpointMagicError,
    CheckpointShapeError,
    CheckpointVersionError,
    load_checkpoint,
    read_checkpoint,
    restore_model,
    save_checkpoint,
    write_checkpoint,
)
from hybkan.train import AdamW, OptimizerConfig
from hybkan.vit import build_model

TOY = dict(image_size=8, patch_size=4, in_channels=1, depth=1, heads=2, dim=8, ffn_width=12, num_classes=3)


def test_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "a": rng.standard_normal((3, 4)).astype(np.float32),
        "b": rng.standard_normal(5),
        "c": np.array(2.5),
        "d": np.arange(6, dtype=np.int64).reshape(2, 3),
        "e": np.array([np.nan, -0.0, np.inf]),
    }
    path = write_checkpoint(tmp_path / "x.hkc", {"step": 3, "note": "ünïcode"}, tensors)
    ck = read_checkpoint(path)
    assert ck.manifest == {"step": 3, "note": "ünïcode"}
    for k, v in tensors.items():
        assert ck.tensors[k].dtype == v.dtype and ck.tensors[k].shape == v.shape
        assert ck.tensors[k].tobytes() == v.tobytes()


def test_little_endian_header(tmp_path):
    path = write_checkpoint(tmp_path / "x.hkc", {}, {"w": np.array([1.0])})
    raw = path.read_bytes()
    assert raw[:8] == b"HYBKAN01"
    assert raw[8:12] == b"\x01\x00\x00\x00"
    assert raw.endswith(np.array([1.0], dtype="<f8").tobytes())


def test_model_round_trip_with_ema(tmp_path):
    model = build_model("hybrid2", "toy", seed=1, **TOY)
    opt = AdamW(model, OptimizerConfig())
    for v in opt.state.ema.values():
        v += 1.0
    save_checkpoint(tmp_path / "m.hkc", model, opt)
    fresh = build_model("hybrid2", "toy", seed=2, **TOY)
    fresh_opt = AdamW(fresh, OptimizerConfig())
    restore_model(fresh, load_checkpoint(tmp_path / "m.hkc"), optimizer=fresh_opt)
    for (k, a), (_, b) in zip(model.named_parameters(), fresh.named_parameters()):
        assert a.tobytes() == b.tobytes(), k
    for k in opt.state.ema:
        assert np.array_equal(opt.state.ema[k], fresh_opt.state.ema[k])
    ema_model = build_model("hybrid2", "toy", seed=2, **TOY)
    restore_model(ema_model, load_checkpoint(tmp_path / "m.hkc"), use_ema=True)
    k, p = next(iter(model.named_parameters()))
    assert np.array_equal(dict(ema_model.named_parameters())[k], p + 1.0)


def test_corrupted_magic(tmp_path):
    path = write_checkpoint(tmp_path / "x.hkc", {}, {"w": np.zeros(2)})
    raw = bytearray(path.read_bytes())
    raw[3] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointMagicError):
        read_checkpoint(path)


def test_version_mismatch(tmp_path):
    path = write_checkpoint(tmp_path / "x.hkc", {}, {"w": np.zeros(2)})
    raw = bytearray(path.read_bytes())
    raw[8] = 9
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointVersionError):
        read_checkpoint(path)


def test_truncated(tmp_path):
    path = write_checkpoint(tmp_path / "x.hkc", {"a": 1}, {"w": np.zeros(4)})
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(CheckpointError):
        read_checkpoint(path)


def test_errors_are_distinct():
    kinds = {CheckpointMagicError, CheckpointVersionError, CheckpointShapeError}
    assert len(kinds) == 3
    assert all(issubclass(k, CheckpointError) for k in kinds)
    assert not issubclass(CheckpointMagicError, CheckpointVersionError)


def test_tiny_into_small_names_tensor(tmp_path):
    tiny = build_model("vit", "tiny", init=False, image_size=32, num_classes=10)
    save_checkpoint(tmp_path / "t.hkc", tiny)
    small = build_model("vit", "small", init=False, image_size=32, num_classes=10)
    with pytest.raises(CheckpointShapeError, match=r"tensor 'embed\.(cls_token|proj\.weight)'"):
        restore_model(small, load_checkpoint(tmp_path / "t.hkc"))
    # nothing was written before the mismatch was detected
    assert not np.any(dict(small.named_parameters())["head.weight"])


def test_atomic_write_leaves_no_temp(tmp_path):
    write_checkpoint(tmp_path / "x.hkc", {}, {"w": np.zeros(1)})
    assert [p.name for p in tmp_path.iterdir()] == ["x.hkc"]
