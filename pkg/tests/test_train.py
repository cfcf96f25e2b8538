"""Stage configs, batch sampling, and the staged training loop."""

import numpy as np
import pytest

from efdn.data import make_pairs, synthetic_hr_crops
from efdn.errors import ConfigError, InputError, UsageError
from efdn.network import build_toy_net, merge_network, network_tensor_items
from efdn.tensor import Tensor
from efdn.train import (
    StageConfig,
    parse_stages,
    read_stage_file,
    sample_batch,
    train_loop,
)

MINIMAL = """
[warmup]
loss = l1
steps = 5
lr0 = 1e-3
"""


def toy_pairs(count=4, size=32, scale=2, seed=5):
    return make_pairs(synthetic_hr_crops(count, size, np.random.default_rng(seed)),
                      scale)


class TestParseStages:
    def test_minimal_section_with_defaults(self):
        (s,) = parse_stages(MINIMAL)
        assert s.name == "warmup"
        assert s.loss == "l1"
        assert s.steps == 5
        assert s.lr0 == pytest.approx(1e-3)
        assert (s.batch, s.crop, s.patch) == (8, 16, 8)
        assert s.lambda_x is None and s.lambda_total == pytest.approx(0.03)

    def test_sections_keep_order(self):
        text = MINIMAL + "\n[edge]\nloss = eg\nsteps = 2\nlr0 = 1e-4\npatch = 4\n"
        stages = parse_stages(text)
        assert [s.name for s in stages] == ["warmup", "edge"]
        assert stages[1].loss == "eg" and stages[1].patch == 4

    def test_explicit_lambdas(self):
        text = "[s]\nloss = eg\nsteps = 1\nlr0 = 1e-3\nlambda_x = 0.02\n"
        (s,) = parse_stages(text)
        assert s.lambda_x == pytest.approx(0.02)
        assert s.lambda_y is None

    @pytest.mark.parametrize("text,fragment", [
        ("[s]\nloss = l1\nsteps = 1\nlr0 = 1e-3\nmomentum = 0.9\n", "unknown key"),
        ("[s]\nloss = l1\nsteps = many\nlr0 = 1e-3\n", "bad value"),
        ("[s]\nloss = l1\nlr0 = 1e-3\n", "missing required"),
        ("[s]\nloss = hinge\nsteps = 1\nlr0 = 1e-3\n", "unknown loss"),
        ("", "no stages"),
        ("loss = l1\n", "bad stage config"),
    ])
    def test_rejects_bad_text(self, text, fragment):
        with pytest.raises(ConfigError, match=fragment):
            parse_stages(text)

    @pytest.mark.parametrize("kwargs", [
        dict(steps=0),
        dict(lr0=-1e-3),
        dict(lr_min=-1.0),
        dict(batch=0),
        dict(crop=0),
        dict(patch=1),
    ])
    def test_stage_validation(self, kwargs):
        base = dict(name="s", loss="l1", steps=1, lr0=1e-3)
        base.update(kwargs)
        with pytest.raises(ConfigError):
            StageConfig(**base)

    def test_read_stage_file(self, tmp_path):
        path = tmp_path / "stages.ini"
        path.write_text(MINIMAL)
        (s,) = read_stage_file(path)
        assert s.name == "warmup"

    def test_read_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="stage config"):
            read_stage_file(tmp_path / "nope.ini")


class TestSampleBatch:
    def test_shapes(self):
        pairs = toy_pairs()
        stage = StageConfig("s", "l1", 1, 1e-3, batch=3, crop=8)
        lr_b, hr_b = sample_batch(pairs, stage, 2, np.random.default_rng(0))
        assert lr_b.data.shape == (3, 3, 8, 8)
        assert hr_b.data.shape == (3, 3, 16, 16)
        assert lr_b.data.dtype == np.float32

    def test_deterministic_for_seed(self):
        pairs = toy_pairs()
        stage = StageConfig("s", "l1", 1, 1e-3, batch=4, crop=8)
        a = sample_batch(pairs, stage, 2, np.random.default_rng(7))
        b = sample_batch(pairs, stage, 2, np.random.default_rng(7))
        np.testing.assert_array_equal(a[0].data, b[0].data)
        np.testing.assert_array_equal(a[1].data, b[1].data)

    def test_lr_and_hr_stay_paired(self):
        # Constant-valued images: each sampled LR crop must carry the same
        # constant as its HR mate regardless of flip/rotation.
        values = (0.1, 0.5, 0.9)
        crops = [Tensor(np.full((1, 3, 16, 16), v, dtype=np.float32))
                 for v in values]
        pairs = make_pairs(crops, 2)
        stage = StageConfig("s", "l1", 1, 1e-3, batch=12, crop=4)
        lr_b, hr_b = sample_batch(pairs, stage, 2, np.random.default_rng(1))
        for i in range(12):
            assert float(lr_b.data[i].std()) < 1e-6
            assert abs(float(lr_b.data[i].mean()) - float(hr_b.data[i].mean())) < 1e-5

    def test_crop_larger_than_image(self):
        pairs = toy_pairs(size=16)  # LR side 8
        stage = StageConfig("s", "l1", 1, 1e-3, batch=1, crop=9)
        with pytest.raises(InputError, match="crop"):
            sample_batch(pairs, stage, 2, np.random.default_rng(0))


class TestTrainLoop:
    def _net(self, block="baseline_conv", seed=2):
        return build_toy_net("plain_fsrcnn_like", block, np.random.default_rng(seed))

    def _stage(self, **kwargs):
        base = dict(name="s", loss="l1", steps=4, lr0=1e-3, batch=2, crop=8)
        base.update(kwargs)
        return StageConfig(**base)

    def test_smoke_records_and_shapes(self):
        pairs = toy_pairs()
        trained, records = train_loop(self._net(), pairs, [self._stage()],
                                      np.random.default_rng(0))
        assert trained.spec == self._net().spec
        assert trained.mode == "train"
        assert [r.step for r in records] == [0, 1, 2, 3]
        assert all(r.stage == "s" for r in records)
        assert all(np.isfinite(r.loss) and r.lr >= 0 for r in records)

    def test_deterministic_for_seed(self):
        pairs = toy_pairs()
        t1, r1 = train_loop(self._net(), pairs, [self._stage()],
                            np.random.default_rng(3))
        t2, r2 = train_loop(self._net(), pairs, [self._stage()],
                            np.random.default_rng(3))
        assert [r.loss for r in r1] == [r.loss for r in r2]
        for (k1, v1), (k2, v2) in zip(network_tensor_items(t1),
                                      network_tensor_items(t2)):
            assert k1 == k2
            np.testing.assert_array_equal(np.asarray(v1), np.asarray(v2))

    def test_zero_learning_rate_keeps_params(self):
        pairs = toy_pairs()
        net = self._net()
        before = {k: np.array(v) for k, v in network_tensor_items(net)}
        trained, records = train_loop(net, pairs, [self._stage(lr0=0.0)],
                                      np.random.default_rng(0))
        assert len(records) == 4
        for k, v in network_tensor_items(trained):
            np.testing.assert_array_equal(np.asarray(v), before[k])

    def test_multiple_stages_number_globally(self):
        pairs = toy_pairs()
        stages = [self._stage(name="a", steps=2),
                  self._stage(name="b", steps=3, loss="l2")]
        _, records = train_loop(self._net(), pairs, stages,
                                np.random.default_rng(0))
        assert [r.step for r in records] == [0, 1, 2, 3, 4]
        assert [r.stage for r in records] == ["a", "a", "b", "b", "b"]

    def test_edge_loss_stage_with_branched_block(self):
        pairs = toy_pairs()
        net = self._net(block="edbb")
        _, records = train_loop(net, pairs,
                                [self._stage(loss="eg", steps=2, patch=4)],
                                np.random.default_rng(0))
        assert len(records) == 2
        assert all(np.isfinite(r.loss) for r in records)

    def test_edge_loss_stage_without_branches(self):
        # No filter scales anywhere: lambdas fall back to equal thirds.
        pairs = toy_pairs()
        _, records = train_loop(self._net(), pairs,
                                [self._stage(loss="eg", steps=1, patch=4)],
                                np.random.default_rng(0))
        assert np.isfinite(records[0].loss)

    def test_post_merge_fine_tune(self):
        pairs = toy_pairs()
        merged = merge_network(self._net(block="edbb"))
        trained, records = train_loop(merged, pairs, [self._stage(steps=2)],
                                      np.random.default_rng(0))
        assert trained.mode == "deploy"
        assert len(records) == 2

    def test_empty_inputs_rejected(self):
        pairs = toy_pairs()
        with pytest.raises(UsageError):
            train_loop(self._net(), [], [self._stage()], np.random.default_rng(0))
        with pytest.raises(UsageError):
            train_loop(self._net(), pairs, [], np.random.default_rng(0))
