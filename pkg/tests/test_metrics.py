"""Scores, embedders, prompt library, and report round trips."""

import numpy as np
import pytest

from vidinsert.compositor import Clip, Frame
from vidinsert.geometry import BBox, TrajectorySequence
from vidinsert.metrics import (
    DownsampleEmbedder,
    MetricReport,
    ProjectionEmbedder,
    PromptEntry,
    PromptLibrary,
    adv_viclip,
    available_embedders,
    clip_i,
    clip_t,
    create_embedder,
    dino_bbox,
    evaluate_case,
    prompt_probabilities,
)
from vidinsert.resample import resize_bilinear


def random_clip(rng, n=4, size=16):
    return Clip(tuple(Frame(rng.uniform(0, 1, (size, size, 3))) for _ in range(n)))


class TestEmbedders:
    def test_image_embeddings_unit_norm(self, rng):
        frame = Frame(rng.uniform(0, 1, (16, 16, 3)))
        for emb in (ProjectionEmbedder(), DownsampleEmbedder()):
            v = emb.image_embed(frame)
            assert v.shape == (emb.dim,)
            assert np.isclose(np.linalg.norm(v), 1.0)

    def test_black_frame_embeddable(self):
        # the constant feature keeps the norm positive for flat frames
        frame = Frame(np.zeros((8, 8, 3)))
        for emb in (ProjectionEmbedder(), DownsampleEmbedder()):
            assert np.isclose(np.linalg.norm(emb.image_embed(frame)), 1.0)

    def test_downsample_embedder_frozen_oracle(self):
        # constant frame c: pooled features are 192 copies of c plus 1.0
        c = 0.6
        frame = Frame(np.full((16, 16, 3), c))
        raw = np.concatenate([np.full(192, c), [1.0]])
        expected = raw / np.linalg.norm(raw)
        assert np.allclose(DownsampleEmbedder().image_embed(frame), expected, atol=1e-12)

    def test_projection_deterministic_across_instances(self, rng):
        frame = Frame(rng.uniform(0, 1, (8, 8, 3)))
        a = ProjectionEmbedder(dim=32, seed=5).image_embed(frame)
        b = ProjectionEmbedder(dim=32, seed=5).image_embed(frame)
        c = ProjectionEmbedder(dim=32, seed=6).image_embed(frame)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_projection_dim_validation(self):
        with pytest.raises(ValueError, match="dim"):
            ProjectionEmbedder(dim=1)

    def test_text_embed_properties(self):
        emb = ProjectionEmbedder()
        assert np.isclose(np.linalg.norm(emb.text_embed("a cat sat")), 1.0)
        assert np.array_equal(emb.text_embed("Cat DOG"), emb.text_embed("cat dog"))
        assert np.array_equal(emb.text_embed("a b"), emb.text_embed("b a"))
        assert np.isclose(np.linalg.norm(emb.text_embed("")), 1.0)

    def test_video_embed_is_normalized_mean(self, rng):
        emb = ProjectionEmbedder()
        clip = random_clip(rng, n=3)
        mean = np.mean([emb.image_embed(f) for f in clip], axis=0)
        expected = mean / np.linalg.norm(mean)
        assert np.allclose(emb.video_embed(clip), expected, atol=1e-12)

    def test_create_embedder(self):
        assert isinstance(create_embedder("toy"), ProjectionEmbedder)
        assert isinstance(create_embedder("toy-identity"), DownsampleEmbedder)
        assert create_embedder("toy", dim=16).dim == 16
        with pytest.raises(ValueError, match="unknown embedder"):
            create_embedder("clip-vit")
        with pytest.raises(ValueError, match="adapter-id"):
            create_embedder("external:")
        assert "toy" in available_embedders()


class TestClipScores:
    def test_clip_i_self_is_100(self, rng):
        clip = random_clip(rng)
        assert clip_i(clip, clip, ProjectionEmbedder()) == 100.0

    def test_clip_i_matches_manual_loop(self, rng):
        emb = ProjectionEmbedder()
        pred, ref = random_clip(rng), random_clip(rng)
        manual = np.mean(
            [
                float(np.dot(emb.image_embed(p), emb.image_embed(r)))
                for p, r in zip(pred, ref)
            ]
        )
        assert np.isclose(clip_i(pred, ref, emb), 100 * manual, atol=1e-9)

    def test_clip_i_length_mismatch(self, rng):
        with pytest.raises(ValueError, match="frames"):
            clip_i(random_clip(rng, n=3), random_clip(rng, n=4), ProjectionEmbedder())

    def test_clip_t_matches_manual_loop(self, rng):
        emb = ProjectionEmbedder()
        pred = random_clip(rng)
        text = emb.text_embed("a boat on water")
        manual = np.mean([float(np.dot(emb.image_embed(f), text)) for f in pred])
        assert np.isclose(clip_t(pred, "a boat on water", emb), 100 * manual, atol=1e-9)

    def test_clip_t_requires_prompt(self, rng):
        with pytest.raises(ValueError, match="non-empty"):
            clip_t(random_clip(rng), "   ", ProjectionEmbedder())

    def test_scores_bounded(self, rng):
        emb = ProjectionEmbedder()
        pred, ref = random_clip(rng), random_clip(rng)
        assert -100.0 <= clip_i(pred, ref, emb) <= 100.0
        assert -100.0 <= clip_t(pred, "anything", emb) <= 100.0


class TestDinoBbox:
    def test_exact_when_crop_equals_object(self, rng):
        # object pasted as-is: crop == object image, similarity exactly 1
        size, osz = 16, 4
        obj = Frame(rng.uniform(0, 1, (osz, osz, 3)))
        frames, boxes = [], []
        for i in range(3):
            bg = rng.uniform(0, 1, (size, size, 3))
            x0 = 2 + i
            bg[3 : 3 + osz, x0 : x0 + osz] = obj.pixels
            frames.append(Frame(bg))
            boxes.append(BBox(x0, 3, osz, osz))
        traj = TrajectorySequence(tuple(boxes), size, size)
        clip = Clip(tuple(frames))
        for emb in (DownsampleEmbedder(), ProjectionEmbedder()):
            assert dino_bbox(clip, traj, obj, emb) == pytest.approx(1.0, abs=1e-12)

    def test_zeroed_bbox_oracle(self, rng):
        # black crop against the object: cosine computed directly
        size, osz = 16, 4
        obj = Frame(rng.uniform(0.2, 1, (osz, osz, 3)))
        bg = rng.uniform(0, 1, (size, size, 3))
        box = BBox(5, 5, osz, osz)
        bg[box.slices()] = 0.0
        clip = Clip((Frame(bg),))
        traj = TrajectorySequence((box,), size, size)
        emb = DownsampleEmbedder()
        expected = float(
            np.dot(emb.image_embed(Frame(np.zeros((osz, osz, 3)))), emb.image_embed(obj))
        )
        assert np.isclose(dino_bbox(clip, traj, obj, emb), expected, atol=1e-12)

    def test_crop_restored_to_object_dims(self, rng):
        # box twice the object size: the crop is resized back down
        size, osz = 24, 4
        obj = Frame(rng.uniform(0, 1, (osz, osz, 3)))
        bg = rng.uniform(0, 1, (size, size, 3))
        box = BBox(4, 4, 2 * osz, 2 * osz)
        clip = Clip((Frame(bg),))
        traj = TrajectorySequence((box,), size, size)
        emb = DownsampleEmbedder()
        crop = bg[box.slices()]
        restored = resize_bilinear(crop, osz, osz)
        expected = float(np.dot(emb.image_embed(Frame(restored)), emb.image_embed(obj)))
        assert np.isclose(dino_bbox(clip, traj, obj, emb), expected, atol=1e-12)

    def test_length_and_size_validation(self, rng):
        obj = Frame(rng.uniform(0, 1, (4, 4, 3)))
        clip = random_clip(rng, n=2)
        traj = TrajectorySequence((BBox(0, 0, 4, 4),), 16, 16)
        with pytest.raises(ValueError, match="frames"):
            dino_bbox(clip, traj, obj, DownsampleEmbedder())
        wrong = TrajectorySequence((BBox(0, 0, 4, 4), BBox(0, 0, 4, 4)), 8, 8)
        with pytest.raises(ValueError, match="does not match"):
            dino_bbox(clip, wrong, obj, DownsampleEmbedder())


class TestAdvViclip:
    def test_probabilities_sum_to_one(self, rng):
        library = PromptLibrary.from_json(
            [
                {"case_id": "a", "optimal": "red square", "fake": "blue square"},
                {"case_id": "b", "optimal": "green dot", "fake": "yellow dot"},
            ]
        )
        probs = prompt_probabilities(random_clip(rng), library, ProjectionEmbedder())
        assert len(probs) == 4
        assert abs(sum(probs.values()) - 1.0) < 1e-12
        assert all(p > 0 for p in probs.values())

    def test_equal_similarity_pair_is_half(self, rng):
        library = PromptLibrary.from_json(
            [{"case_id": "a", "optimal": "same words", "fake": "same words"}]
        )
        score = adv_viclip(random_clip(rng), "a", library, ProjectionEmbedder())
        assert abs(score - 0.5) < 1e-12

    def test_permutation_invariance(self, rng):
        entries = [
            {"case_id": "a", "optimal": "red square", "fake": "blue square"},
            {"case_id": "b", "optimal": "green dot", "fake": "yellow dot"},
            {"case_id": "c", "optimal": "tiny boat", "fake": "huge boat"},
        ]
        clip = random_clip(rng)
        emb = ProjectionEmbedder()
        forward = prompt_probabilities(clip, PromptLibrary.from_json(entries), emb)
        backward = prompt_probabilities(
            clip, PromptLibrary.from_json(entries[::-1]), emb
        )
        for key, p in forward.items():
            assert backward[key] == pytest.approx(p, abs=1e-15)

    def test_rescaling_preserves_argmax(self, rng):
        library = PromptLibrary.from_json(
            [
                {"case_id": "a", "optimal": "red square", "fake": "blue square"},
                {"case_id": "b", "optimal": "green dot", "fake": "yellow dot"},
            ]
        )
        clip = random_clip(rng)
        emb = ProjectionEmbedder()
        lo = prompt_probabilities(clip, library, emb, logit_scale=10.0)
        hi = prompt_probabilities(clip, library, emb, logit_scale=500.0)
        assert max(lo, key=lo.get) == max(hi, key=hi.get)

    def test_unknown_case_raises(self, rng):
        library = PromptLibrary.from_json(
            [{"case_id": "a", "optimal": "x y", "fake": "y z"}]
        )
        with pytest.raises(KeyError, match="nope"):
            adv_viclip(random_clip(rng), "nope", library, ProjectionEmbedder())

    def test_logit_scale_positive(self, rng):
        library = PromptLibrary.from_json(
            [{"case_id": "a", "optimal": "x y", "fake": "y z"}]
        )
        with pytest.raises(ValueError, match="logit_scale"):
            prompt_probabilities(random_clip(rng), library, ProjectionEmbedder(), 0.0)


class TestPromptLibrary:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            PromptLibrary.from_json(
                [
                    {"case_id": "a", "optimal": "x", "fake": "y"},
                    {"case_id": "a", "optimal": "p", "fake": "q"},
                ]
            )

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            PromptLibrary(())

    def test_blank_fields_rejected(self):
        with pytest.raises(ValueError, match="optimal"):
            PromptEntry("a", "  ", "y")

    def test_single_dict_accepted(self):
        lib = PromptLibrary.from_json({"case_id": "a", "optimal": "x", "fake": "y"})
        assert len(lib) == 1

    def test_all_prompts_optimal_first(self):
        lib = PromptLibrary.from_json(
            [
                {"case_id": "a", "optimal": "oa", "fake": "fa"},
                {"case_id": "b", "optimal": "ob", "fake": "fb"},
            ]
        )
        kinds = [kind for _, kind, _ in lib.all_prompts()]
        assert kinds == ["optimal", "optimal", "fake", "fake"]

    def test_get(self):
        lib = PromptLibrary.from_json([{"case_id": "a", "optimal": "x", "fake": "y"}])
        assert lib.get("a").optimal == "x"
        with pytest.raises(KeyError):
            lib.get("b")

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "library.json"
        path.write_text('[{"case_id": "a", "optimal": "x", "fake": "y"}]')
        assert PromptLibrary.from_json(path).get("a").fake == "y"


class TestMetricReport:
    def test_average(self):
        report = MetricReport(
            cases={
                "a": {"clip_i": 80.0, "adv_viclip": 0.6},
                "b": {"clip_i": 90.0, "adv_viclip": 0.8},
            }
        )
        assert report.average == {"clip_i": 85.0, "adv_viclip": pytest.approx(0.7)}

    def test_write_round_trip(self, tmp_path):
        report = MetricReport(cases={"a": {"clip_i": 80.0}}, config={"embedder": "toy"})
        path = tmp_path / "report.json"
        report.write(path)
        loaded = MetricReport.from_json(path)
        assert loaded.cases == report.cases
        assert loaded.config == report.config
        assert loaded.schema_version == report.schema_version

    def test_evaluate_case_shape(self, rng):
        clip = random_clip(rng, n=2)
        traj = TrajectorySequence((BBox(0, 0, 4, 4), BBox(1, 0, 4, 4)), 16, 16)
        obj = Frame(rng.uniform(0, 1, (4, 4, 3)))
        library = PromptLibrary.from_json(
            [{"case_id": "case", "optimal": "up", "fake": "down"}]
        )
        report = evaluate_case(
            clip, clip, "up", traj, obj, "case", library, ProjectionEmbedder()
        )
        scores = report.cases["case"]
        assert set(scores) == {"clip_i", "clip_t", "dino_bbox", "adv_viclip"}
        assert scores["clip_i"] == 100.0
        assert 0 < scores["adv_viclip"] < 1
        assert report.config["library_size"] == 1
