"""Latent tables, conditioned prediction, checkpoint format."""

import hashlib

import numpy as np
import pytest

from steershape.autodiff import ShapeError
from steershape.dataset import generate_population
from steershape.model import (LatentCode, LatentTable, ModelParams, build_model,
                              init_latents, init_mlp, load_checkpoint,
                              predict_sdf, save_checkpoint)


@pytest.fixture(scope="module")
def population():
    return generate_population(4, seed=21, n_surface=800, n_perturbed=200)


@pytest.fixture(scope="module")
def conditioned(population):
    return build_model(population,
                       ("volume", "isthmus_area", "symmetry"),
                       latent_dim=16, hidden=(32, 32, 32), seed=3)


class TestInitLatents:
    def test_initial_std(self):
        table = init_latents(200, 64, 0.01, rng=5)
        flat = table.trainable.reshape(-1)
        assert abs(flat.std() - 0.01) / 0.01 < 0.10
        assert abs(flat.mean()) < 0.001

    def test_fixed_slots_copied_exactly(self, population, conditioned):
        from steershape.dataset import FeatureScaler

        scaler = conditioned.scaler
        expected = scaler.transform(population.feature_matrix())
        assert np.abs(conditioned.latents.fixed - expected).max() < 1e-12

    def test_seed_determinism(self):
        a = init_latents(10, 8, rng=7)
        b = init_latents(10, 8, rng=7)
        assert np.array_equal(a.trainable, b.trainable)

    def test_code_concatenation_layout(self):
        table = LatentTable(np.array([[1.0, 2.0]]), np.array([[3.0, 4.0, 5.0]]))
        code = table.code(0)
        assert code.full().tolist() == [1.0, 2.0, 3.0, 4.0, 5.0]
        assert len(code) == 5


class TestPredict:
    def test_batch_order_preserved(self, conditioned):
        rng = np.random.default_rng(0)
        pts = rng.uniform(0, 1, (64, 3))
        code = conditioned.latents.code(0)
        out = predict_sdf(conditioned, code, pts)
        assert out.shape == (64,)
        # position i corresponds to input i; single-point evaluation agrees
        # up to BLAS batch tiling
        single = np.array([predict_sdf(conditioned, code, pts[i:i + 1])[0]
                           for i in range(len(pts))])
        np.testing.assert_allclose(out, single, rtol=1e-12, atol=1e-14)
        # identical batches are bit-identical
        assert np.array_equal(out, predict_sdf(conditioned, code, pts))

    def test_duplicate_point_identical(self, conditioned):
        # duplicates inside one batch agree to the last few ulps (row tiling
        # may differ with batch position)
        pts = np.array([[0.5, 0.5, 0.5], [0.2, 0.3, 0.4], [0.5, 0.5, 0.5]])
        out = predict_sdf(conditioned, conditioned.latents.code(0), pts)
        assert out[0] == pytest.approx(out[2], rel=1e-12, abs=1e-15)

    def test_code_width_checked(self, conditioned):
        bad = LatentCode(np.zeros(2), np.zeros(16))
        with pytest.raises(ShapeError):
            predict_sdf(conditioned, bad, np.zeros((4, 3)))

    def test_chunking_consistent(self, conditioned):
        rng = np.random.default_rng(1)
        pts = rng.uniform(0, 1, (1000, 3))
        code = conditioned.latents.code(1)
        a = predict_sdf(conditioned, code, pts, chunk=64)
        b = predict_sdf(conditioned, code, pts, chunk=100000)
        assert np.array_equal(a, b)

    def test_trainable_slots_influence_output(self, conditioned):
        pts = np.array([[0.4, 0.5, 0.5]])
        code = conditioned.latents.code(0)
        base = predict_sdf(conditioned, code, pts)[0]
        bumped = LatentCode(code.fixed, code.trainable + 0.05)
        assert predict_sdf(conditioned, bumped, pts)[0] != base

    def test_fixed_slots_influence_output(self, conditioned):
        pts = np.array([[0.4, 0.5, 0.5]])
        code = conditioned.latents.code(0)
        base = predict_sdf(conditioned, code, pts)[0]
        bumped = LatentCode(code.fixed + 0.5, code.trainable)
        assert predict_sdf(conditioned, bumped, pts)[0] != base


class TestBuildModel:
    def test_baseline_has_no_fixed_slots(self, population):
        model = build_model(population, (), latent_dim=8, hidden=(16,), seed=0)
        assert model.k == 0
        assert model.input_dim == 3 + 8

    def test_conditioned_dimensions(self, conditioned):
        assert conditioned.k == 3
        assert conditioned.input_dim == 3 + 3 + 16
        assert conditioned.layers[0].weight.rows == conditioned.input_dim

    def test_unknown_feature_rejected(self, population):
        with pytest.raises(ValueError):
            build_model(population, ("girth",), 8)

    def test_init_weights_bounded(self):
        layers = init_mlp(10, (32, 32), rng=0)
        bound0 = np.sqrt(6.0 / 10)
        assert np.abs(layers[0].weight.a).max() <= bound0
        assert np.all(layers[0].bias.a == 0.0)


class TestCheckpoint:
    def test_byte_exact_round_trip(self, conditioned, tmp_path):
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        save_checkpoint(conditioned, p1)
        again = load_checkpoint(p1)
        save_checkpoint(again, p2)
        assert (hashlib.sha256(p1.read_bytes()).digest()
                == hashlib.sha256(p2.read_bytes()).digest())

    def test_loaded_model_predicts_identically(self, conditioned, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(conditioned, path)
        again = load_checkpoint(path)
        pts = np.random.default_rng(2).uniform(0, 1, (32, 3))
        code = conditioned.latents.code(2)
        assert np.array_equal(predict_sdf(conditioned, code, pts),
                              predict_sdf(again, again.latents.code(2), pts))

    def test_metadata_preserved(self, conditioned, tmp_path):
        conditioned.metadata["grid_convention"] = "cell_centers"
        path = tmp_path / "m.ckpt"
        save_checkpoint(conditioned, path)
        again = load_checkpoint(path)
        assert again.metadata["grid_convention"] == "cell_centers"
        assert again.feature_names == conditioned.feature_names
        assert again.shape_ids == conditioned.shape_ids

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_unknown_shape_id(self, conditioned):
        with pytest.raises(KeyError):
            conditioned.code_for_shape("missing")
