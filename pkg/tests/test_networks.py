"""Architecture contracts: embeddings, forwards, and gradient fidelity."""

import numpy as np
import pytest

from motiongan.networks import (GENERATOR_CALLS, ModelConfig,
                                condition_indices, discriminator_forward,
                                generator_forward, init_discriminator,
                                init_generator, make_dropout_masks,
                                named_parameters, one_hot, parameter_count,
                                reset_generator_calls, sinusoidal_embed)
from motiongan.tensor import Tensor, grad, grad_check


def small_config(**kw):
    defaults = dict(N=5, frame_dim=11, num_classes=3, latent=32, layers=2,
                    heads=4, z_dim=8, t_embed_dim=16, disc_width=32,
                    disc_layers=4, disc_groups=8)
    defaults.update(kw)
    return ModelConfig(**defaults)


@pytest.fixture(scope="module")
def setup():
    cfg = small_config()
    rng = np.random.default_rng(42)
    gen = init_generator(cfg, rng)
    disc = init_discriminator(cfg, rng)
    B = 3
    data = np.random.default_rng(7)
    return {
        "cfg": cfg, "gen": gen, "disc": disc,
        "x_t": Tensor(data.normal(size=(B, cfg.N, cfg.frame_dim))),
        "z": Tensor(data.normal(size=(B, cfg.z_dim))),
        "labels": np.array([0, 1, 2]),
    }


class TestEmbeddings:
    def test_time_zero_embedding(self):
        emb = sinusoidal_embed(0.0, 8)
        assert np.array_equal(emb[:4], np.zeros(4))
        assert np.array_equal(emb[4:], np.ones(4))

    def test_frozen_values_dim_four(self):
        emb = sinusoidal_embed(1.0, 4)
        expected = [np.sin(1.0), np.sin(0.01), np.cos(1.0), np.cos(0.01)]
        assert np.allclose(emb, expected, atol=1e-15)

    def test_batch_shape_and_range(self):
        emb = sinusoidal_embed(np.array([1, 2, 3]), 16)
        assert emb.shape == (3, 16)
        assert np.all(np.abs(emb) <= 1.0)

    def test_odd_dim_rejected(self):
        with pytest.raises(ValueError):
            sinusoidal_embed(1.0, 7)

    def test_distinct_steps_distinct_embeddings(self):
        embs = sinusoidal_embed(np.arange(1, 51), 128)
        dists = np.linalg.norm(embs[:, None] - embs[None, :], axis=-1)
        np.fill_diagonal(dists, np.inf)
        assert dists.min() > 1e-3

    def test_one_hot(self):
        oh = one_hot(np.array([0, 2]), 4)
        assert np.array_equal(oh, [[1, 0, 0, 0], [0, 0, 1, 0]])
        with pytest.raises(ValueError):
            one_hot(np.array([4]), 4)
        with pytest.raises(ValueError):
            one_hot(np.array([-1]), 4)

    def test_condition_indices(self):
        labels = np.array([0, 1, 2])
        assert np.array_equal(condition_indices(labels, 3), labels)
        uncond = np.array([False, True, False])
        assert np.array_equal(condition_indices(labels, 3, uncond), [0, 3, 2])
        with pytest.raises(ValueError):
            condition_indices(np.array([3]), 3)


class TestModelConfig:
    def test_token_count_and_disc_input(self):
        cfg = ModelConfig()
        assert cfg.tokens == 63
        assert cfg.disc_input_dim == 2 * 60 * 85 + 128 + 7

    def test_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(latent=130, heads=4)
        with pytest.raises(ValueError):
            ModelConfig(t_embed_dim=127)
        with pytest.raises(ValueError):
            ModelConfig(disc_width=250, disc_groups=8)

    def test_config_round_trip(self):
        cfg = small_config()
        assert ModelConfig.from_config(cfg.to_config()) == cfg


class TestInitialization:
    def test_deterministic_under_seed(self):
        cfg = small_config()
        a = init_generator(cfg, np.random.default_rng(5))
        b = init_generator(cfg, np.random.default_rng(5))
        for (na, pa), (nb, pb) in zip(named_parameters(a),
                                      named_parameters(b)):
            assert na == nb
            assert np.array_equal(pa.data, pb.data)

    def test_xavier_bounds_and_zero_biases(self):
        cfg = small_config()
        gen = init_generator(cfg, np.random.default_rng(5))
        limit = np.sqrt(6.0 / (cfg.latent + cfg.latent))
        assert np.abs(gen.blocks[0].wq.data).max() <= limit
        assert not gen.blocks[0].bq.data.any()
        assert not gen.out_b.data.any()
        disc = init_discriminator(cfg, np.random.default_rng(5))
        for _, b in disc.linears:
            assert not b.data.any()

    def test_every_parameter_requires_grad(self, setup):
        for container in (setup["gen"], setup["disc"]):
            for name, p in named_parameters(container):
                assert p.requires_grad, name

    def test_parameter_count_matches_manual_sum(self, setup):
        total = sum(p.size for _, p in named_parameters(setup["gen"]))
        assert parameter_count(setup["gen"]) == total > 0


class TestGeneratorForward:
    def test_output_shape(self, setup):
        out = generator_forward(setup["gen"], setup["x_t"], setup["z"],
                                setup["labels"], 2)
        cfg = setup["cfg"]
        assert out.shape == (3, cfg.N, cfg.frame_dim)

    def test_bitwise_deterministic(self, setup):
        args = (setup["gen"], setup["x_t"], setup["z"], setup["labels"], 2)
        assert np.array_equal(generator_forward(*args).data,
                              generator_forward(*args).data)

    def test_call_counter(self, setup):
        reset_generator_calls()
        generator_forward(setup["gen"], setup["x_t"], setup["z"],
                          setup["labels"], 1)
        generator_forward(setup["gen"], setup["x_t"], setup["z"],
                          setup["labels"], 1)
        assert GENERATOR_CALLS[0] == 2

    def test_scalar_and_array_t_agree(self, setup):
        a = generator_forward(setup["gen"], setup["x_t"], setup["z"],
                              setup["labels"], 3)
        b = generator_forward(setup["gen"], setup["x_t"], setup["z"],
                              setup["labels"], np.array([3, 3, 3]))
        assert np.array_equal(a.data, b.data)

    def test_sensitive_to_step_condition_and_noise(self, setup):
        base = generator_forward(setup["gen"], setup["x_t"], setup["z"],
                                 setup["labels"], 2).data
        other_t = generator_forward(setup["gen"], setup["x_t"], setup["z"],
                                    setup["labels"], 3).data
        other_c = generator_forward(setup["gen"], setup["x_t"], setup["z"],
                                    np.array([1, 2, 0]), 2).data
        other_z = generator_forward(setup["gen"], setup["x_t"],
                                    setup["z"] * 1.5, setup["labels"], 2).data
        assert not np.array_equal(base, other_t)
        assert not np.array_equal(base, other_c)
        assert not np.array_equal(base, other_z)

    def test_dropped_condition_ignores_labels(self, setup):
        uncond = np.ones(3, dtype=bool)
        a = generator_forward(setup["gen"], setup["x_t"], setup["z"],
                              np.array([0, 0, 0]), 2, uncond=uncond)
        b = generator_forward(setup["gen"], setup["x_t"], setup["z"],
                              np.array([2, 1, 2]), 2, uncond=uncond)
        assert np.array_equal(a.data, b.data)

    def test_dropout_masks_change_output(self, setup):
        cfg = setup["cfg"]
        masks = make_dropout_masks(cfg, 3, np.random.default_rng(0))
        a = generator_forward(setup["gen"], setup["x_t"], setup["z"],
                              setup["labels"], 2)
        b = generator_forward(setup["gen"], setup["x_t"], setup["z"],
                              setup["labels"], 2, dropout_masks=masks)
        assert not np.array_equal(a.data, b.data)

    def test_survives_wide_noise_input(self, setup):
        rng = np.random.default_rng(11)
        cfg = setup["cfg"]
        wide = Tensor(rng.normal(0.0, 3.0, size=(3, cfg.N, cfg.frame_dim)))
        out = generator_forward(setup["gen"], wide, setup["z"],
                                setup["labels"], 1)
        assert np.all(np.isfinite(out.data))

    def test_condition_grads_accumulate_per_row(self, setup):
        # two items share label 0: its table row collects both contributions
        out = generator_forward(setup["gen"], setup["x_t"], setup["z"],
                                np.array([0, 0, 1]), 2)
        (g,) = grad((out * out).mean(), [setup["gen"].cond_table])
        assert np.abs(g.data[0]).max() > 0
        assert np.abs(g.data[1]).max() > 0
        assert not g.data[2].any()          # label 2 unused
        assert not g.data[3].any()          # null row unused


class TestDiscriminatorForward:
    def test_shape_and_determinism(self, setup):
        args = (setup["disc"], setup["x_t"], setup["x_t"] * 0.5,
                setup["labels"], 2)
        a = discriminator_forward(*args)
        assert a.shape == (3,)
        assert np.array_equal(a.data, discriminator_forward(*args).data)

    def test_sensitive_to_all_inputs(self, setup):
        base = discriminator_forward(setup["disc"], setup["x_t"],
                                     setup["x_t"] * 0.5, setup["labels"],
                                     2).data
        vary = [
            discriminator_forward(setup["disc"], setup["x_t"] * 1.01,
                                  setup["x_t"] * 0.5, setup["labels"], 2),
            discriminator_forward(setup["disc"], setup["x_t"],
                                  setup["x_t"] * 0.51, setup["labels"], 2),
            discriminator_forward(setup["disc"], setup["x_t"],
                                  setup["x_t"] * 0.5, np.array([1, 2, 0]), 2),
            discriminator_forward(setup["disc"], setup["x_t"],
                                  setup["x_t"] * 0.5, setup["labels"], 3),
        ]
        for other in vary:
            assert not np.array_equal(base, other.data)

    def test_null_condition_row(self, setup):
        uncond = np.array([True, True, True])
        a = discriminator_forward(setup["disc"], setup["x_t"],
                                  setup["x_t"], np.array([0, 1, 2]), 2,
                                  uncond=uncond)
        b = discriminator_forward(setup["disc"], setup["x_t"],
                                  setup["x_t"], np.array([2, 0, 1]), 2,
                                  uncond=uncond)
        assert np.array_equal(a.data, b.data)

    def test_survives_wide_noise_input(self, setup):
        rng = np.random.default_rng(13)
        cfg = setup["cfg"]
        wide = Tensor(rng.normal(0.0, 3.0, size=(3, cfg.N, cfg.frame_dim)))
        out = discriminator_forward(setup["disc"], wide, wide * -1.0,
                                    setup["labels"], 1)
        assert np.all(np.isfinite(out.data))


class TestDropoutMasks:
    def test_mask_contract(self):
        cfg = small_config(dropout=0.25)
        masks = make_dropout_masks(cfg, 4, np.random.default_rng(3))
        assert len(masks) == 2 * cfg.layers
        for m in masks:
            assert m.shape == (4, cfg.tokens, cfg.latent)
            assert set(np.unique(m)) <= {0.0, 1.0}
        keep = np.mean([m.mean() for m in masks])
        sigma = np.sqrt(0.75 * 0.25 / (4 * cfg.tokens * cfg.latent
                                       * len(masks)))
        assert abs(keep - 0.75) < 4 * sigma


# gradient fidelity at the architecture-check size (2 blocks, width 64)
@pytest.fixture(scope="module")
def check_setup():
    cfg = small_config(latent=64, layers=2, heads=4, disc_width=64,
                       disc_layers=7, disc_groups=8)
    rng = np.random.default_rng(21)
    gen = init_generator(cfg, rng)
    disc = init_discriminator(cfg, rng)
    data = np.random.default_rng(22)
    B = 2
    mix_g = Tensor(data.normal(size=(B, cfg.N, cfg.frame_dim)))
    mix_d = Tensor(data.normal(size=(B,)))
    return {
        "cfg": cfg, "gen": gen, "disc": disc, "mix_g": mix_g, "mix_d": mix_d,
        "x_t": Tensor(data.normal(size=(B, cfg.N, cfg.frame_dim))),
        "x_p": Tensor(data.normal(size=(B, cfg.N, cfg.frame_dim))),
        "z": Tensor(data.normal(size=(B, cfg.z_dim))),
        "labels": np.array([0, 2]),
        "t": np.array([1, 2]),
    }


class TestGradientFidelity:
    def check(self, f, x, sample=12, tol=1e-4):
        err = grad_check(f, x, sample=sample, rng=np.random.default_rng(0))
        assert err < tol

    def test_generator_wrt_input(self, check_setup):
        s = check_setup
        self.check(lambda x: (generator_forward(s["gen"], x, s["z"],
                                                s["labels"], s["t"])
                              * s["mix_g"]).sum(), s["x_t"])

    def test_generator_wrt_attention_weight(self, check_setup):
        s = check_setup
        self.check(lambda w: (generator_forward(s["gen"], s["x_t"], s["z"],
                                                s["labels"], s["t"])
                              * s["mix_g"]).sum(),
                   s["gen"].blocks[0].wq)

    def test_generator_wrt_condition_table(self, check_setup):
        s = check_setup
        self.check(lambda w: (generator_forward(s["gen"], s["x_t"], s["z"],
                                                s["labels"], s["t"])
                              * s["mix_g"]).sum(),
                   s["gen"].cond_table)

    def test_generator_wrt_output_projection(self, check_setup):
        s = check_setup
        self.check(lambda w: (generator_forward(s["gen"], s["x_t"], s["z"],
                                                s["labels"], s["t"])
                              * s["mix_g"]).sum(),
                   s["gen"].out_w)

    def test_discriminator_wrt_input(self, check_setup):
        s = check_setup
        self.check(lambda x: (discriminator_forward(s["disc"], x, s["x_t"],
                                                    s["labels"], s["t"])
                              * s["mix_d"]).sum(), s["x_p"])

    def test_discriminator_wrt_groupnorm_gain(self, check_setup):
        s = check_setup
        self.check(lambda w: (discriminator_forward(s["disc"], s["x_p"],
                                                    s["x_t"], s["labels"],
                                                    s["t"])
                              * s["mix_d"]).sum(),
                   s["disc"].gn[2][0])

    def test_discriminator_wrt_hidden_weight(self, check_setup):
        s = check_setup
        self.check(lambda w: (discriminator_forward(s["disc"], s["x_p"],
                                                    s["x_t"], s["labels"],
                                                    s["t"])
                              * s["mix_d"]).sum(),
                   s["disc"].linears[2][0])

    def test_r1_double_backward_matches_finite_differences(self, check_setup):
        s = check_setup

        def penalty(_):
            x = Tensor(s["x_p"].data, requires_grad=True)
            score = discriminator_forward(s["disc"], x, s["x_t"],
                                          s["labels"], s["t"])
            (g,) = grad(score.sum(), [x], create_graph=True)
            return g.square().sum() * 0.5

        for param in (s["disc"].linears[0][0], s["disc"].linears[3][0],
                      s["disc"].gn[2][0]):
            err = grad_check(penalty, param, sample=6,
                             rng=np.random.default_rng(1))
            assert err < 1e-3
