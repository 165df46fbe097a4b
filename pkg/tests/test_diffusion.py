"""Schedules, DDIM stepping, toy predictors, codecs, and the registry."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidinsert.compositor import Frame
from vidinsert.diffusion import (
    SPATIAL_ATTENTION,
    SPATIAL_FEATURE,
    TEMPORAL_ATTENTION,
    BlockCodec,
    Condition,
    ConstantPredictorBackend,
    IdentityCodec,
    LatentClip,
    LinearPredictorBackend,
    NoiseSchedule,
    NoopInjector,
    ReplayNoiseBackend,
    ZeroPredictorBackend,
    available_backends,
    create_backend,
    ddim_invert_step,
    ddim_step,
    forward_noise,
    invert_sequence,
    make_codec,
    sample_sequence,
)


class TestNoiseSchedule:
    def test_linear_beta_matches_sequential_product(self):
        # independent loop construction; must agree bit for bit
        T = 50
        betas = np.linspace(1e-4, 0.02, T)
        ab, seq = 1.0, [1.0]
        for b in betas:
            ab *= 1.0 - b
            seq.append(ab)
        sched = NoiseSchedule.linear_beta(T=T)
        assert np.array_equal(sched.alpha_bar, np.array(seq))

    def test_default_schedule_frozen_values(self):
        sched = NoiseSchedule.linear_beta()
        assert sched.T == 1000
        assert sched.alpha_bar[0] == 1.0
        assert sched.alpha_bar[1] == 0.9999
        assert math.isclose(sched.alpha_bar[500], 0.07858724288177824, rel_tol=0, abs_tol=1e-15)
        assert math.isclose(sched.alpha_bar[1000], 4.035829765375676e-05, rel_tol=0, abs_tol=1e-18)

    def test_strictly_decreasing_enforced(self):
        with pytest.raises(ValueError, match="decreasing"):
            NoiseSchedule(np.array([1.0, 0.5, 0.5]))

    def test_range_enforced(self):
        with pytest.raises(ValueError, match="0, 1"):
            NoiseSchedule(np.array([1.0, 1.5, 0.5]))
        with pytest.raises(ValueError, match="0, 1"):
            NoiseSchedule(np.array([1.0, 0.5, 0.0]))

    def test_head_must_be_clean(self):
        with pytest.raises(ValueError, match="0.999"):
            NoiseSchedule(np.array([0.9, 0.5, 0.2]))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            NoiseSchedule(np.array([1.0, np.nan, 0.2]))

    def test_uniform_grid_frozen(self):
        sched = NoiseSchedule.linear_beta()
        grid = sched.uniform_grid(50)
        assert grid[0] == 0 and grid[-1] == 1000 and len(grid) == 51
        assert (np.diff(grid) == 20).all()

    def test_uniform_grid_divisibility(self):
        sched = NoiseSchedule.linear_beta()
        with pytest.raises(ValueError, match="evenly"):
            sched.uniform_grid(7)
        with pytest.raises(ValueError, match="exceeds"):
            sched.uniform_grid(1001)
        with pytest.raises(ValueError, match="at least 1"):
            sched.uniform_grid(0)

    def test_digest_stable_and_distinct(self):
        a = NoiseSchedule.linear_beta(T=20)
        b = NoiseSchedule.linear_beta(T=20)
        c = NoiseSchedule.linear_beta(T=40)
        assert a.digest == b.digest and len(a.digest) == 16
        assert a.digest != c.digest

    @given(T=st.integers(1, 200))
    @settings(max_examples=40, deadline=None)
    def test_linear_beta_always_valid(self, T):
        sched = NoiseSchedule.linear_beta(T=T)
        ab = sched.alpha_bar
        assert ab.shape == (T + 1,)
        assert ab[0] == 1.0
        assert (np.diff(ab) < 0).all()
        assert (ab > 0).all() and (ab <= 1).all()


class TestForwardNoise:
    def test_formula_frozen(self, short_schedule):
        z0 = np.full((1, 3, 2, 2), 1.0)
        eps = np.full((1, 3, 2, 2), 2.0)
        t = 10
        ab = short_schedule.alpha_bar[t]
        out = forward_noise(z0, t, eps, short_schedule)
        assert np.allclose(out, math.sqrt(ab) + 2 * math.sqrt(1 - ab), atol=1e-15)

    def test_endpoints(self, short_schedule, rng):
        z0 = rng.standard_normal((1, 3, 2, 2))
        eps = rng.standard_normal((1, 3, 2, 2))
        assert np.array_equal(forward_noise(z0, 0, eps, short_schedule), z0)

    def test_range_and_shape_checks(self, short_schedule):
        z0 = np.zeros((1, 3, 2, 2))
        with pytest.raises(ValueError, match="outside"):
            forward_noise(z0, 21, z0, short_schedule)
        with pytest.raises(ValueError, match="mismatch"):
            forward_noise(z0, 1, np.zeros((1, 3, 2, 3)), short_schedule)


class TestDdimSteps:
    def test_const_predictor_single_step_closed_form(self, short_schedule):
        backend = ConstantPredictorBackend(short_schedule, value=0.5)
        z = np.full((1, 3, 2, 2), 1.5)
        t_from, t_to = 10, 7
        ab_f = short_schedule.alpha_bar[t_from]
        ab_t = short_schedule.alpha_bar[t_to]
        scale = math.sqrt(ab_t / ab_f)
        coeff = math.sqrt(1 - ab_t) - scale * math.sqrt(1 - ab_f)
        expected = scale * 1.5 + coeff * 0.5
        got = ddim_step(z, t_from, None, backend, t_prev=t_to)
        assert np.allclose(got, expected, atol=1e-15)

    def test_invert_step_closed_form(self, short_schedule):
        backend = ConstantPredictorBackend(short_schedule, value=-0.25)
        z = np.full((1, 3, 2, 2), 0.75)
        t_from, t_to = 4, 9
        ab_f = short_schedule.alpha_bar[t_from]
        ab_t = short_schedule.alpha_bar[t_to]
        scale = math.sqrt(ab_t / ab_f)
        coeff = math.sqrt(1 - ab_t) - scale * math.sqrt(1 - ab_f)
        expected = scale * 0.75 + coeff * -0.25
        got = ddim_invert_step(z, t_from, None, backend, t_next=t_to)
        assert np.allclose(got, expected, atol=1e-15)

    def test_single_step_pair_is_inverse(self, short_schedule, rng):
        backend = ReplayNoiseBackend(short_schedule, seed=2)
        z = rng.standard_normal((2, 3, 4, 4))
        up = ddim_invert_step(z, 3, None, backend, t_next=8)
        back = ddim_step(up, 8, None, backend, t_prev=3)
        assert np.allclose(back, z, atol=1e-12)

    def test_index_bounds(self, short_schedule):
        backend = ZeroPredictorBackend(short_schedule)
        z = np.zeros((1, 3, 2, 2))
        with pytest.raises(ValueError, match="denoise range"):
            ddim_step(z, 0, None, backend)
        with pytest.raises(ValueError, match="t_prev"):
            ddim_step(z, 5, None, backend, t_prev=5)
        with pytest.raises(ValueError, match="invert range"):
            ddim_invert_step(z, 20, None, backend)
        with pytest.raises(ValueError, match="t_next"):
            ddim_invert_step(z, 5, None, backend, t_next=4)


class TestSequences:
    @pytest.mark.parametrize("name", ["toy-zero", "toy-const", "toy-replay"])
    def test_latent_free_predictors_round_trip_exactly(self, name, rng):
        backend = create_backend(name, seed=6)
        z0 = LatentClip(rng.standard_normal((2, 3, 4, 4)))
        inv = invert_sequence(z0, None, backend, 50)
        rec = sample_sequence(inv, None, backend, 50)
        assert np.allclose(rec.latents, z0.latents, atol=1e-10)

    def test_replay_inversion_is_closed_form_noising(self, rng):
        backend = create_backend("toy-replay", seed=3)
        z0 = LatentClip(rng.standard_normal((2, 3, 4, 4)))
        inv = invert_sequence(z0, None, backend, 50)
        field = backend.replay_field(z0.latents.shape)
        expected = forward_noise(z0.latents, backend.schedule.T, field, backend.schedule)
        assert np.allclose(inv.latents, expected, atol=1e-10)

    def test_zero_predictor_sampling_is_pure_rescale(self, rng):
        backend = create_backend("toy-zero")
        z_top = LatentClip(rng.standard_normal((1, 3, 4, 4)))
        out = sample_sequence(z_top, None, backend, 50)
        ab_T = backend.schedule.alpha_bar[-1]
        assert np.allclose(out.latents, z_top.latents / math.sqrt(ab_T), rtol=1e-12)

    def test_linear_predictor_round_trip_error_shrinks(self, rng):
        backend = create_backend("toy-linear", seed=0)
        z0 = LatentClip(rng.standard_normal((2, 3, 4, 4)))

        def err(steps):
            inv = invert_sequence(z0, None, backend, steps)
            rec = sample_sequence(inv, None, backend, steps)
            return float(np.max(np.abs(rec.latents - z0.latents)))

        e50, e100 = err(50), err(100)
        assert 0 < e100 < e50

    def test_partial_grid_round_trip(self, rng):
        backend = create_backend("toy-const")
        z0 = LatentClip(rng.standard_normal((1, 3, 2, 2)))
        grid = backend.schedule.uniform_grid(50)[:11]  # depth 10 of 50
        inv = invert_sequence(z0, None, backend, 10, grid=grid)
        rec = sample_sequence(inv, None, backend, 10, grid=grid)
        assert np.allclose(rec.latents, z0.latents, atol=1e-12)

    def test_grid_validation(self, rng):
        backend = create_backend("toy-zero")
        z = LatentClip(np.zeros((1, 3, 2, 2)))
        with pytest.raises(ValueError, match="at least two"):
            invert_sequence(z, None, backend, 1, grid=[0])
        with pytest.raises(ValueError, match="increasing"):
            invert_sequence(z, None, backend, 2, grid=[0, 20, 20])
        with pytest.raises(ValueError, match="within"):
            invert_sequence(z, None, backend, 2, grid=[0, 2000])

    def test_on_step_observer_sees_descending_targets(self, rng):
        backend = create_backend("toy-zero")
        z = LatentClip(rng.standard_normal((1, 3, 2, 2)))
        seen = []
        sample_sequence(z, None, backend, 5, on_step=lambda s, t, z_: seen.append((s, t)))
        grid = backend.schedule.uniform_grid(5)
        assert seen == [(i + 1, int(grid[::-1][i + 1])) for i in range(5)]
        assert seen[-1][1] == 0

    def test_noop_injector_bit_identical(self, rng):
        backend = create_backend("toy-linear", seed=1)
        z = LatentClip(rng.standard_normal((2, 3, 4, 4)))
        plain = sample_sequence(z, None, backend, 10)
        noop = sample_sequence(z, None, backend, 10, injector=NoopInjector())
        assert np.array_equal(plain.latents, noop.latents)

    def test_unknown_injector_site_rejected(self, rng):
        class Bogus:
            sites = frozenset({"made_up_site"})

            def override(self, site, step, value):
                return None

        backend = create_backend("toy-linear", seed=1)
        z = LatentClip(np.zeros((1, 3, 2, 2)))
        with pytest.raises(ValueError, match="made_up_site"):
            sample_sequence(z, None, backend, 5, injector=Bogus())

    def test_on_site_reports_override_results(self, rng):
        class ZeroFeature:
            sites = frozenset({SPATIAL_FEATURE})

            def override(self, site, step, value):
                if site == SPATIAL_FEATURE and step <= 2:
                    return np.zeros_like(value)
                return None

        backend = create_backend("toy-linear", seed=1)
        z = LatentClip(np.ones((1, 3, 2, 2)))
        used = {}
        sample_sequence(
            z, None, backend, 5,
            injector=ZeroFeature(),
            on_site=lambda s, site, v: used.setdefault((s, site), v.copy()),
        )
        assert not used[(1, SPATIAL_FEATURE)].any()
        assert not used[(2, SPATIAL_FEATURE)].any()
        assert used[(3, SPATIAL_FEATURE)].any()


class TestCodecs:
    def test_identity_round_trip(self, rng):
        codec = IdentityCodec()
        frames = rng.uniform(0, 1, (2, 4, 4, 3))
        z = codec.encode(frames)
        assert z.shape == (2, 3, 4, 4)
        assert np.array_equal(codec.decode(z), frames)

    @pytest.mark.parametrize("factor", [2, 4, 8])
    def test_block_round_trip(self, rng, factor):
        codec = BlockCodec(factor)
        frames = rng.uniform(0, 1, (2, 2 * factor, 3 * factor, 3))
        z = codec.encode(frames)
        assert z.shape == (2, 3 * factor * factor, 2, 3)
        assert np.array_equal(codec.decode(z), frames)

    def test_block_layout_frozen(self):
        # channel index is c*f*f + fy*f + fx for the pixel at block offset
        # (fy, fx) of channel c
        f = 2
        frames = np.arange(1 * 2 * 2 * 3, dtype=np.float64).reshape(1, 2, 2, 3)
        z = BlockCodec(f).encode(frames)
        for c in range(3):
            for fy in range(f):
                for fx in range(f):
                    assert z[0, c * f * f + fy * f + fx, 0, 0] == frames[0, fy, fx, c]

    def test_block_divisibility(self):
        with pytest.raises(ValueError, match="divisible"):
            BlockCodec(4).encode(np.zeros((1, 6, 8, 3)))

    def test_block_factor_validation(self):
        with pytest.raises(ValueError, match=">= 2"):
            BlockCodec(1)

    @given(factor=st.integers(2, 6), n=st.integers(1, 3), hb=st.integers(1, 4), wb=st.integers(1, 4))
    @settings(max_examples=40, deadline=None)
    def test_block_round_trip_property(self, factor, n, hb, wb):
        codec = BlockCodec(factor)
        rng = np.random.default_rng(factor * 1000 + n * 100 + hb * 10 + wb)
        frames = rng.standard_normal((n, hb * factor, wb * factor, 3))
        assert np.array_equal(codec.decode(codec.encode(frames)), frames)

    def test_make_codec(self):
        assert isinstance(make_codec("identity"), IdentityCodec)
        assert isinstance(make_codec("block", 8), BlockCodec)
        with pytest.raises(ValueError, match="factor 1"):
            make_codec("identity", 8)
        with pytest.raises(ValueError, match=">= 2"):
            make_codec("block", 1)
        with pytest.raises(ValueError, match="unknown codec"):
            make_codec("vae")


class TestToyBackends:
    def test_latent_shape_enforced(self, short_schedule):
        backend = ZeroPredictorBackend(short_schedule)
        with pytest.raises(ValueError, match="N, C, h, w"):
            backend.predict_noise(np.zeros((3, 2, 2)), 1)

    def test_replay_fields_keyed_by_shape(self):
        backend = ReplayNoiseBackend(seed=4)
        a = backend.replay_field((1, 3, 2, 2))
        b = backend.replay_field((1, 3, 2, 2))
        c = backend.replay_field((2, 3, 2, 2))
        assert np.array_equal(a, b)
        assert a.shape != c.shape
        assert ReplayNoiseBackend(seed=5).replay_field((1, 3, 2, 2)).std() != pytest.approx(0)

    def test_replay_seed_validation(self):
        with pytest.raises(ValueError, match="non-negative"):
            ReplayNoiseBackend(seed=-1)

    def test_linear_operator_norms(self):
        backend = LinearPredictorBackend(seed=0)
        assert np.isclose(np.linalg.norm(backend._w_feature, 2), 0.45)
        assert np.isclose(np.linalg.norm(backend._w_attention, 2), 0.30)
        assert np.isclose(np.linalg.norm(backend._w_temporal, 2), 0.20)

    def test_linear_sites_depend_on_video_flag(self):
        image = LinearPredictorBackend(video=False)
        video = LinearPredictorBackend(video=True)
        assert image.sites == (SPATIAL_FEATURE, SPATIAL_ATTENTION)
        assert video.sites == (SPATIAL_FEATURE, SPATIAL_ATTENTION, TEMPORAL_ATTENTION)

    def test_linear_condition_is_constant_shift(self, rng):
        backend = LinearPredictorBackend(seed=0)
        z = rng.standard_normal((2, 3, 4, 4))
        base = backend.predict_noise(z, 5, None)
        conditioned = backend.predict_noise(z, 5, Condition(text="a red ball"))
        shift = conditioned - base
        assert np.allclose(shift, shift.ravel()[0])
        assert abs(shift.ravel()[0]) > 0

    def test_linear_first_frame_bias(self, rng):
        backend = LinearPredictorBackend(seed=0)
        z = rng.standard_normal((1, 3, 2, 2))
        frame = Frame(np.full((4, 4, 3), 0.9))
        base = backend.predict_noise(z, 5, None)
        got = backend.predict_noise(z, 5, Condition(first_frame=frame))
        assert np.allclose(got - base, 0.05 * (0.9 - 0.5), atol=1e-12)

    def test_linear_hook_sees_sites_in_order(self, rng):
        backend = LinearPredictorBackend(video=True, seed=0)
        z = rng.standard_normal((3, 3, 2, 2))
        order = []
        backend.predict_noise(z, 1, None, hook=lambda site, v: (order.append(site), v)[1])
        assert order == [SPATIAL_FEATURE, SPATIAL_ATTENTION, TEMPORAL_ATTENTION]

    def test_linear_identity_hook_changes_nothing(self, rng):
        backend = LinearPredictorBackend(seed=2)
        z = rng.standard_normal((2, 3, 4, 4))
        assert np.array_equal(
            backend.predict_noise(z, 1, None, hook=lambda site, v: v),
            backend.predict_noise(z, 1, None),
        )

    def test_linear_video_couples_neighbor_frames(self, rng):
        backend = LinearPredictorBackend(video=True, seed=0)
        z = rng.standard_normal((4, 3, 2, 2))
        base = backend.predict_noise(z, 1, None)
        bumped = z.copy()
        bumped[2] += 1.0
        got = backend.predict_noise(bumped, 1, None)
        # frames 1 and 3 see frame 2 through the temporal term
        assert not np.allclose(got[1], base[1])
        assert not np.allclose(got[3], base[3])
        assert np.allclose(got[0], base[0])

    def test_image_mode_is_per_frame(self, rng):
        backend = LinearPredictorBackend(video=False, seed=0)
        z = rng.standard_normal((4, 3, 2, 2))
        full = backend.predict_noise(z, 1, None)
        single = backend.predict_noise(z[2:3], 1, None)
        assert np.allclose(full[2:3], single, atol=1e-15)


class TestRegistry:
    def test_available_names(self):
        names = available_backends()
        assert {"toy-zero", "toy-const", "toy-linear", "toy-replay"} <= set(names)

    def test_create_each_toy(self):
        for name, cls in [
            ("toy-zero", ZeroPredictorBackend),
            ("toy-const", ConstantPredictorBackend),
            ("toy-linear", LinearPredictorBackend),
            ("toy-replay", ReplayNoiseBackend),
        ]:
            backend = create_backend(name, video=True)
            assert isinstance(backend, cls)
            assert backend.video

    def test_const_value_passthrough(self):
        backend = create_backend("toy-const", const_value=0.75)
        assert backend.value == 0.75

    def test_block_codec_wiring(self):
        backend = create_backend("toy-linear", codec="block", downsample=8)
        assert backend.downsample == 8
        assert backend.channels == 192

    def test_identity_with_downsample_rejected(self):
        with pytest.raises(ValueError, match="factor 1"):
            create_backend("toy-zero", downsample=8)

    def test_unknown_backend(self):
        with pytest.raises(ValueError, match="unknown backend"):
            create_backend("sd-v2")

    def test_external_requires_adapter_id(self):
        with pytest.raises(ValueError, match="adapter-id"):
            create_backend("external:")


class TestLatentClip:
    def test_shape_and_properties(self, rng):
        z = LatentClip(rng.standard_normal((2, 3, 4, 5)))
        assert (z.n_frames, z.channels, z.height, z.width) == (2, 3, 4, 5)

    def test_validation(self):
        with pytest.raises(ValueError, match="N, C, h, w"):
            LatentClip(np.zeros((3, 2, 2)))
        bad = np.zeros((1, 3, 2, 2))
        bad[0, 0, 0, 0] = np.inf
        with pytest.raises(ValueError, match="finite"):
            LatentClip(bad)


class TestCondition:
    def test_defaults_and_equality(self):
        assert Condition() == Condition(text="", first_frame=None)
        assert Condition(text="x") != Condition(text="y")
