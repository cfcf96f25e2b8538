"""Binary weights container: byte-identical round trips and validation."""

import struct

import numpy as np
import pytest

from efdn.errors import WeightsFormatError
from efdn.network import (
    NetworkSpec,
    build_toy_net,
    init_network,
    merge_network,
    network_tensor_items,
)
from efdn.weights import MAGIC, VERSION, load_weights, save_weights, weights_bytes


def small_net(mode="train"):
    params = init_network(NetworkSpec(scale=2, width=8), np.random.default_rng(4))
    return merge_network(params) if mode == "deploy" else params


def assert_same_tensors(a, b):
    items_a = list(network_tensor_items(a))
    items_b = list(network_tensor_items(b))
    assert [k for k, _ in items_a] == [k for k, _ in items_b]
    for (_, va), (_, vb) in zip(items_a, items_b):
        np.testing.assert_array_equal(np.asarray(va), np.asarray(vb))


class TestRoundTrip:
    @pytest.mark.parametrize("mode", ["train", "deploy"])
    def test_save_load_restores_everything(self, tmp_path, mode):
        params = small_net(mode)
        path = tmp_path / "w.efdw"
        save_weights(path, params)
        loaded = load_weights(path)
        assert loaded.spec == params.spec
        assert loaded.mode == mode
        assert_same_tensors(loaded, params)

    def test_load_then_save_is_byte_identical(self, tmp_path):
        path = tmp_path / "w.efdw"
        save_weights(path, small_net())
        blob = path.read_bytes()
        assert weights_bytes(load_weights(path)) == blob

    def test_toy_net_round_trip(self, tmp_path):
        params = build_toy_net("plain_vdsr_like", "edbb", np.random.default_rng(1))
        path = tmp_path / "toy.efdw"
        save_weights(path, params)
        loaded = load_weights(path)
        assert loaded.spec == params.spec
        assert_same_tensors(loaded, params)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "w.efdw"
        save_weights(path, small_net("deploy"))
        blob = path.read_bytes()
        assert blob[:4] == MAGIC == b"EFDW"
        assert struct.unpack("<I", blob[4:8])[0] == VERSION == 1
        assert struct.unpack("<I", blob[8:12])[0] == 1  # deploy tag


class TestValidation:
    @pytest.fixture()
    def saved(self, tmp_path):
        path = tmp_path / "w.efdw"
        save_weights(path, small_net())
        return path, path.read_bytes()

    def _expect(self, path, blob, fragment):
        path.write_bytes(blob)
        with pytest.raises(WeightsFormatError, match=fragment):
            load_weights(path)

    def test_bad_magic(self, saved):
        path, blob = saved
        self._expect(path, b"XFDW" + blob[4:], "bad magic")

    def test_unsupported_version(self, saved):
        path, blob = saved
        self._expect(path, blob[:4] + struct.pack("<I", 2) + blob[8:],
                     "unsupported format version")

    def test_unknown_mode_tag(self, saved):
        path, blob = saved
        self._expect(path, blob[:8] + struct.pack("<I", 9) + blob[12:],
                     "unknown mode tag")

    def test_truncated(self, saved):
        path, blob = saved
        self._expect(path, blob[:-5], "truncated")

    def test_trailing_bytes(self, saved):
        path, blob = saved
        self._expect(path, blob + b"\x00", "trailing bytes")

    def test_corrupt_spec_block(self, saved):
        path, blob = saved
        self._expect(path, blob[:16] + b"!" + blob[17:], "bad spec block")

    def test_duplicate_tensor_name(self, saved):
        path, blob = saved
        assert blob.count(b"fusion1.weight") == 1
        self._expect(path, blob.replace(b"fusion1.weight", b"fusion0.weight"),
                     "duplicate tensor name")

    def test_missing_tensor(self, saved):
        path, blob = saved
        assert blob.count(b"head.weight") == 1
        self._expect(path, blob.replace(b"head.weight", b"hxad.weight"),
                     "missing tensor")

    def test_unreadable_path(self, tmp_path):
        with pytest.raises(WeightsFormatError, match="cannot read"):
            load_weights(tmp_path / "nope.efdw")
