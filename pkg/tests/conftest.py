"""Shared fixtures: a small population and quickly trained models."""

import pytest

from steershape.dataset import generate_population
from steershape.training import TrainConfig, train


@pytest.fixture(scope="session")
def mini_dataset():
    return generate_population(4, seed=77, n_surface=6000, n_perturbed=1500)


@pytest.fixture(scope="session")
def mini_baseline(mini_dataset):
    cfg = TrainConfig(epochs=300, points_per_shape_per_epoch=400,
                      latent_dim=16, hidden=(64, 64, 64), rng_seed=5)
    model, _ = train(mini_dataset, cfg)
    return model


@pytest.fixture(scope="session")
def mini_conditioned(mini_dataset):
    cfg = TrainConfig(epochs=300, points_per_shape_per_epoch=400,
                      latent_dim=16, hidden=(64, 64, 64), rng_seed=5,
                      fixed_features=("volume", "isthmus_area", "symmetry"),
                      corr_enabled=True, corr_weight=1.0)
    model, _ = train(mini_dataset, cfg)
    return model
