"""Sampling loop contracts: guidance identities, determinism, timing."""

import hashlib

import numpy as np
import pytest

from motiongan.dataset import DataConfig, synth_dataset
from motiongan.networks import (GENERATOR_CALLS, ModelConfig,
                                generator_forward, named_parameters,
                                reset_generator_calls)
from motiongan.sampler import (SampleRequest, guided_generator, sample,
                               sample_chain, write_positions_csv)
from motiongan.tensor import NonFiniteError, Tensor
from motiongan.training import TrainConfig, ema_generator, train


@pytest.fixture(scope="module")
def ctx():
    ds = synth_dataset(DataConfig(num_classes=2, clips_per_class=6, N=16,
                                  seed=3))
    mc = ModelConfig(N=16, frame_dim=85, num_classes=2, latent=32, layers=1,
                     heads=2, z_dim=8, t_embed_dim=16, disc_width=32,
                     disc_layers=3, disc_groups=8)
    ckpt, _ = train(ds, TrainConfig(T=4, batch=4, epochs=1, seed=1),
                    model_config=mc)
    ckpt1, _ = train(ds, TrainConfig(T=1, batch=4, epochs=1, seed=1),
                     model_config=mc)
    return {"ds": ds, "mc": mc, "ckpt": ckpt, "ckpt1": ckpt1}


class TestRequestValidation:
    def test_negative_scale_rejected(self):
        with pytest.raises(ValueError):
            SampleRequest(label=0, scale=-0.5)

    def test_zero_count_rejected(self):
        with pytest.raises(ValueError):
            SampleRequest(label=0, count=0)

    def test_label_out_of_range(self, ctx):
        with pytest.raises(ValueError):
            sample(ctx["ckpt"], SampleRequest(label=7, count=1))

    def test_length_mismatch(self, ctx):
        with pytest.raises(ValueError):
            sample(ctx["ckpt"], SampleRequest(label=0, length=32))


@pytest.fixture(scope="module")
def gen_inputs(ctx):
    params = ema_generator(ctx["ckpt"])
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(2, 16, 85)))
    z = Tensor(rng.normal(size=(2, 8)))
    return params, x, z, np.array([0, 1])


class TestGuidanceIdentities:
    def test_scale_one_is_conditional_bitwise(self, gen_inputs):
        params, x, z, labels = gen_inputs
        blended = guided_generator(params, x, z, labels, 2, 1.0)
        plain = generator_forward(params, x, z, labels, 2)
        assert np.array_equal(blended.data, plain.data)

    def test_scale_zero_is_unconditional_bitwise(self, gen_inputs):
        params, x, z, labels = gen_inputs
        blended = guided_generator(params, x, z, labels, 2, 0.0)
        plain = generator_forward(params, x, z, np.zeros(2, np.int64), 2,
                                  uncond=np.ones(2, dtype=bool))
        assert np.array_equal(blended.data, plain.data)

    def test_no_label_is_unconditional(self, gen_inputs):
        params, x, z, _ = gen_inputs
        blended = guided_generator(params, x, z, None, 2, 3.0)
        plain = generator_forward(params, x, z, np.zeros(2, np.int64), 2,
                                  uncond=np.ones(2, dtype=bool))
        assert np.array_equal(blended.data, plain.data)

    def test_scale_two_extrapolates(self, gen_inputs):
        params, x, z, labels = gen_inputs
        cond = generator_forward(params, x, z, labels, 2).data
        unc = generator_forward(params, x, z, labels, 2,
                                uncond=np.ones(2, dtype=bool)).data
        blended = guided_generator(params, x, z, labels, 2, 2.0)
        assert np.allclose(blended.data, unc + 2.0 * (cond - unc), atol=1e-12)

    def test_single_call_at_shortcut_scales(self, gen_inputs):
        params, x, z, labels = gen_inputs
        for scale, calls in ((0.0, 1), (1.0, 1), (2.5, 2)):
            reset_generator_calls()
            guided_generator(params, x, z, labels, 1, scale)
            assert GENERATOR_CALLS[0] == calls


class TestSampling:
    def test_output_contract(self, ctx):
        clips, raw, timing = sample(ctx["ckpt"],
                                    SampleRequest(label=1, count=3, seed=9))
        assert len(clips) == 3
        assert raw.shape == (3, 16, 85)
        for clip in clips:
            assert clip.label == 1
            assert clip.root.shape == (16, 3)
            # MotionClip construction re-validates quaternion norms
            assert np.allclose(np.linalg.norm(clip.rotations, axis=-1), 1.0,
                               atol=1e-9)
        assert len(timing["per_step_s"]) == 4
        assert timing["ms_per_frame"] > 0

    def test_deterministic_under_seed(self, ctx):
        req = SampleRequest(label=0, count=2, seed=11)
        _, a, _ = sample(ctx["ckpt"], req)
        _, b, _ = sample(ctx["ckpt"], req)
        assert np.array_equal(a, b)

    def test_seed_changes_output(self, ctx):
        _, a, _ = sample(ctx["ckpt"], SampleRequest(label=0, count=2, seed=1))
        _, b, _ = sample(ctx["ckpt"], SampleRequest(label=0, count=2, seed=2))
        assert not np.array_equal(a, b)

    def test_ema_and_raw_weights_differ(self, ctx):
        req_ema = SampleRequest(label=0, count=2, seed=4, use_ema=True)
        req_raw = SampleRequest(label=0, count=2, seed=4, use_ema=False)
        _, a, _ = sample(ctx["ckpt"], req_ema)
        _, b, _ = sample(ctx["ckpt"], req_raw)
        assert not np.array_equal(a, b)

    def test_unconditional_sampling(self, ctx):
        clips, raw, _ = sample(ctx["ckpt"],
                               SampleRequest(label=None, count=2, seed=3))
        assert raw.shape == (2, 16, 85)
        assert clips[0].label == -1

    def test_discriminator_untouched(self, ctx):
        def disc_hash():
            blob = b"".join(p.data.tobytes()
                            for _, p in named_parameters(ctx["ckpt"].disc))
            return hashlib.sha256(blob).hexdigest()

        before = disc_hash()
        sample(ctx["ckpt"], SampleRequest(label=0, count=2, seed=0))
        assert disc_hash() == before

    def test_single_step_single_generator_call(self, ctx):
        reset_generator_calls()
        sample(ctx["ckpt1"], SampleRequest(label=0, scale=1.0, count=2,
                                           seed=5))
        assert GENERATOR_CALLS[0] == 1

    def test_calls_scale_with_steps_and_guidance(self, ctx):
        reset_generator_calls()
        sample(ctx["ckpt"], SampleRequest(label=0, scale=1.0, count=2, seed=5))
        assert GENERATOR_CALLS[0] == 4
        reset_generator_calls()
        sample(ctx["ckpt"], SampleRequest(label=0, scale=2.5, count=2, seed=5))
        assert GENERATOR_CALLS[0] == 8

    def test_nonfinite_state_reports_step(self, ctx):
        import copy
        broken = copy.deepcopy(ctx["ckpt"])
        broken.gen.in_w.data = np.full_like(broken.gen.in_w.data, np.inf)
        for name in broken.ema:
            broken.ema[name] = np.full_like(broken.ema[name], np.inf)
        with pytest.raises(NonFiniteError):
            sample(broken, SampleRequest(label=0, count=1, seed=0))


class TestSampleChain:
    def test_chain_shape_and_final_state(self, ctx):
        req = SampleRequest(label=1, count=2, seed=21)
        chain = sample_chain(ctx["ckpt"], req)
        assert len(chain.states) == 5          # T + 1 states
        assert len(chain.predictions) == 4
        _, raw, _ = sample(ctx["ckpt"], req)
        final = ctx["ckpt"].stats.denormalize(chain.states[-1])
        assert np.array_equal(final, raw)

    def test_initial_state_is_standard_normal_draw(self, ctx):
        req = SampleRequest(label=0, count=2, seed=33)
        chain = sample_chain(ctx["ckpt"], req)
        expected = np.random.default_rng(33).standard_normal((2, 16, 85))
        assert np.array_equal(chain.states[0], expected)


class TestPositionsCsv:
    def test_rows_and_header(self, ctx, tmp_path):
        clips, _, _ = sample(ctx["ckpt"], SampleRequest(label=0, count=1,
                                                        seed=2))
        path = tmp_path / "pos.csv"
        write_positions_csv(clips[0], ctx["ckpt"].skeleton, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "frame,joint,x,y,z"
        assert len(lines) == 1 + 16 * 8
        parts = lines[1].split(",")
        assert parts[0] == "0" and parts[1] == "0"
        float(parts[2]), float(parts[3]), float(parts[4])
