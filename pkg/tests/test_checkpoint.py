import struct
import zlib

import numpy as np
import pytest

from vsrgan import checkpoint as ck
from vsrgan.errors import CheckpointError
from vsrgan.models import (
    Discriminator,
    DiscriminatorConfig,
    FeatureNet,
    FeatureNetSpec,
    Generator,
    GeneratorConfig,
)

SMALL = GeneratorConfig(base_channels=4, num_res_blocks=2)


def _trained_like(seed=0):
    g = Generator(SMALL, seed=seed)
    rng = np.random.default_rng(seed)
    for p in g.parameters():
        p.adam_m[...] = rng.standard_normal(p.shape)
        p.adam_v[...] = rng.random(p.shape)
    return g


def test_save_load_save_is_byte_identical(tmp_path):
    g = _trained_like()
    first = ck.save_network(tmp_path / "a.vsrc", g, with_optimizer=True, meta={"epoch": 3})
    g2, ckpt = ck.load_network(tmp_path / "a.vsrc")
    second = ck.encode(ck.from_network(g2, with_optimizer=True, meta=ckpt.meta))
    assert first == second
    assert ckpt.meta == {"epoch": 3}


def test_restored_network_is_forward_equivalent(tmp_path, rng):
    g = _trained_like()
    ck.save_network(tmp_path / "g.vsrc", g, with_optimizer=True)
    g2, _ = ck.load_network(tmp_path / "g.vsrc")
    x = rng.random((1, 5, 1, 9, 9))
    np.testing.assert_array_equal(g.forward(x), g2.forward(x))
    for p, q in zip(g.parameters(), g2.parameters()):
        np.testing.assert_array_equal(p.adam_v, q.adam_v)


def test_discriminator_buffers_persist(tmp_path, rng):
    d = Discriminator(DiscriminatorConfig(conv_channels=(4, 8)))
    d.forward(rng.random((3, 1, 36, 36)), train=True)
    ck.save_network(tmp_path / "d.vsrc", d)
    d2, ckpt = ck.load_network(tmp_path / "d.vsrc")
    assert "bn1.running_var" in ckpt.tensors
    x = rng.random((2, 1, 36, 36))
    np.testing.assert_array_equal(d.forward(x, train=False), d2.forward(x, train=False))


def test_every_single_byte_flip_is_detected(tmp_path):
    data = ck.encode(ck.from_network(Generator(GeneratorConfig(base_channels=1,
                                                               num_res_blocks=0))))
    for pos in range(len(data)):
        bad = bytearray(data)
        bad[pos] ^= 0x01
        with pytest.raises(CheckpointError):
            ck.decode(bytes(bad))


def test_layout_header():
    data = ck.encode(ck.from_network(Generator(SMALL)))
    assert data[:4] == b"VSRC"
    assert struct.unpack("<I", data[4:8])[0] == 1
    n = struct.unpack("<I", data[8:12])[0]
    assert data[12:12 + n] == b"generator"
    assert struct.unpack("<I", data[-4:])[0] == zlib.crc32(data[:-4])


def test_float32_tensors_round_trip():
    ckpt = ck.Checkpoint("generator", {}, {"w": np.arange(6, dtype=np.float32).reshape(2, 3)})
    back = ck.decode(ck.encode(ckpt))
    assert back.tensors["w"].dtype == np.float32
    np.testing.assert_array_equal(back.tensors["w"], ckpt.tensors["w"])


def test_truncated_and_foreign_files():
    data = ck.encode(ck.from_network(Generator(SMALL)))
    with pytest.raises(CheckpointError):
        ck.decode(data[:50])
    with pytest.raises(CheckpointError):
        ck.decode(b"PK\x03\x04" + data[4:])


def test_missing_tensor_is_named(tmp_path):
    g = Generator(SMALL)
    ckpt = ck.from_network(g)
    del ckpt.tensors["res01.conv_b.bias"]
    with pytest.raises(CheckpointError, match="res01.conv_b.bias"):
        ck.restore(Generator(SMALL), ckpt)


def test_wrong_architecture_lists_names():
    ckpt = ck.from_network(Generator(SMALL))
    with pytest.raises(CheckpointError, match="unexpected tensors: res01"):
        ck.restore(Generator(GeneratorConfig(base_channels=4, num_res_blocks=1)), ckpt)


def test_feature_weight_file_architecture_check(tmp_path):
    path = tmp_path / "feat.vsrc"
    ck.save_network(path, FeatureNet(FeatureNetSpec(seed=7)))
    net = ck.make_feature_net(FeatureNetSpec(weight_file=str(path)))
    ref = FeatureNet(FeatureNetSpec(seed=7))
    for p, q in zip(net.parameters(), ref.parameters()):
        np.testing.assert_array_equal(p.value, q.value)
    with pytest.raises(CheckpointError, match="architecture"):
        ck.make_feature_net(FeatureNetSpec(channels=(8, 8, 16, 16), weight_file=str(path)))
