"""Shared fixtures: small worlds, tiny encoders and toy datasets."""

import numpy as np
import pytest

from src.core.datagen import DatasetSplit, LabelKind, TraversalSample
from src.core.gridmap import map_from_world
from src.core.terrain import HeightField, TerrainFeature, flat_recipe, generate_world
from src.learning.encoder import EncoderConfig, init_state


@pytest.fixture
def flat_world():
    return generate_world(0, flat_recipe(width=64, height=64, resolution=0.25))


@pytest.fixture
def obstacle_world():
    """Flat 16 x 16 m world with one obstacle disc of radius 1 m at (8, 8)."""
    return generate_world(0, flat_recipe(features=[TerrainFeature('obstacle', 8.0, 8.0, size=1.0)]))


@pytest.fixture
def bump_world():
    return generate_world(0, flat_recipe(features=[TerrainFeature('bump', 8.0, 8.0, 0.4, 1.0)]))


@pytest.fixture
def flat_grid(flat_world):
    return map_from_world(flat_world)


@pytest.fixture
def tiny_config():
    return EncoderConfig(k=6, point_widths=(5,), embedding_dim=3, head_widths=(4,))


@pytest.fixture
def tiny_state(tiny_config):
    return init_state(tiny_config, seed=3)


def make_toy_pu_split(k: int = 6, n_pos: int = 48, n_unl: int = 96, seed: int = 0) -> DatasetSplit:
    """Flat positive patches against a 50/50 unlabeled mix of flat and tall patches."""
    rng = np.random.default_rng(seed)

    def flat_patch():
        p = rng.uniform(-0.3, 0.3, size=(k, 3))
        p[:, 2] = rng.normal(0.0, 0.01, size=k)
        return p

    def tall_patch():
        p = rng.uniform(-0.3, 0.3, size=(k, 3))
        p[:, 2] = rng.uniform(0.5, 1.5, size=k)
        return p

    train = [TraversalSample(np.zeros(3), flat_patch(), LabelKind.POSITIVE, float(rng.uniform()))
             for _ in range(n_pos)]
    for i in range(n_unl):
        patch = flat_patch() if i % 2 == 0 else tall_patch()
        train.append(TraversalSample(np.zeros(3), patch, LabelKind.UNLABELED))
    evaluation = ([TraversalSample(np.zeros(3), flat_patch(), LabelKind.POSITIVE) for _ in range(40)]
                  + [TraversalSample(np.zeros(3), tall_patch(), LabelKind.NEGATIVE) for _ in range(40)])
    return DatasetSplit(train, evaluation, seed)


@pytest.fixture
def toy_split():
    return make_toy_pu_split()


def world_from_elevation(elevation, mask=None, resolution=0.25):
    elevation = np.asarray(elevation, dtype=np.float64)
    mask = np.zeros(elevation.shape, dtype=bool) if mask is None else mask
    return HeightField((0.0, 0.0), resolution, elevation.shape[1], elevation.shape[0], elevation, mask)
