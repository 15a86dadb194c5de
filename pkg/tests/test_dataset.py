import numpy as np
import pytest

from mtpscnn.dataset import (
    TRAIN_KINDS,
    DatasetSample,
    random_crop,
    subsample_lights,
    synthetic_dataset,
    synthetic_sample,
)
from mtpscnn.errors import DimensionMismatch, InvalidConfig, MissingData
from mtpscnn.render import LightSet


def _sample(q=6, size=16, seed=0):
    return synthetic_sample("blinn_phong-sphere", seed, size=size, q=q)


def test_subsample_keeps_pairs_in_order():
    s = _sample(q=8)
    sub = subsample_lights(s, 5, seed=1)
    assert sub.num_frames == 5
    idx = [int(np.flatnonzero((s.lights.directions == d).all(axis=1))[0]) for d in sub.lights.directions]
    assert idx == sorted(idx) and len(set(idx)) == 5
    for k, i in enumerate(idx):
        np.testing.assert_array_equal(sub.images[k], s.images[i])
    np.testing.assert_array_equal(sub.mask, s.mask)


def test_subsample_is_seeded_and_validated():
    s = _sample(q=8)
    a, b = subsample_lights(s, 3, seed=4), subsample_lights(s, 3, seed=4)
    np.testing.assert_array_equal(a.lights.directions, b.lights.directions)
    assert subsample_lights(s, 8, seed=0).num_frames == 8
    for k in (0, 9):
        with pytest.raises(InvalidConfig):
            subsample_lights(s, k)


def test_random_crop_contains_foreground():
    s = _sample(size=24)
    for seed in range(10):
        c = random_crop(s, 9, seed=seed)
        assert c.images.shape == (6, 9, 9, 3)
        assert c.mask.any()
        assert c.normals.normals.shape == (9, 9, 3)
    with pytest.raises(InvalidConfig):
        random_crop(s, 25)
    empty = DatasetSample(s.images, s.lights, np.zeros(s.size, bool))
    with pytest.raises(MissingData):
        random_crop(empty, 8)


def test_random_crop_is_a_window():
    s = _sample(size=20)
    c = random_crop(s, 7, seed=3)
    H, W = s.size
    hits = [(t, l) for t in range(H - 6) for l in range(W - 6)
            if np.array_equal(s.images[:, t:t + 7, l:l + 7], c.images)]
    assert hits
    t, l = hits[0]
    np.testing.assert_array_equal(s.mask[t:t + 7, l:l + 7], c.mask)


def test_sample_validation():
    s = _sample()
    with pytest.raises(DimensionMismatch):
        DatasetSample(s.images[:3], s.lights, s.mask)
    with pytest.raises(DimensionMismatch):
        DatasetSample(s.images, s.lights, s.mask[:4])
    with pytest.raises(DimensionMismatch):
        DatasetSample(s.images[..., 0], s.lights, s.mask)


def test_synthetic_dataset_is_deterministic_and_mixed():
    a = synthetic_dataset(TRAIN_KINDS, 8, seed=7, size=16, q=4)
    b = synthetic_dataset(TRAIN_KINDS, 8, seed=7, size=16, q=4)
    assert [s.name for s in a] == [s.name for s in b]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.images, y.images)
    assert {s.name.rsplit("-", 1)[0] for s in a} == set(TRAIN_KINDS)
    for s in a:
        np.testing.assert_allclose(np.linalg.norm(s.normals.normals[s.mask], axis=1), 1, atol=1e-9)
        assert s.images.dtype == np.float32 and s.images.min() >= 0


def test_fixed_albedo_and_unknown_kind():
    s = synthetic_sample("lambertian-sphere", 0, size=16, q=3, albedo=(0.05, 0.05, 0.05))
    assert s.images.max() <= 0.05 + 1e-6
    with pytest.raises(InvalidConfig):
        synthetic_sample("lambertian-cube", 0)
    assert isinstance(s.lights, LightSet)
