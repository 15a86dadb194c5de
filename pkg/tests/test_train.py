import numpy as np
import pytest

from mtpscnn.dataset import DatasetSample, synthetic_dataset, synthetic_sample
from mtpscnn.errors import InvalidConfig, MissingData, NumericalError
from mtpscnn.geometry import NormalMap
from mtpscnn.model import ModelConfig, build_model
from mtpscnn.train import (
    EvalReport,
    TrainConfig,
    ablate_variants,
    baseline_estimator,
    evaluate,
    network_estimator,
    train,
)


@pytest.fixture(scope="module")
def sphere():
    return synthetic_sample("lambertian-sphere", 0, size=16, q=6)


def _small(**kw):
    cfg = dict(C=8, K=1, L=1, M=3, N=3, dropout_rate=0.0, seed=0)
    cfg.update(kw)
    return build_model(**cfg)


def test_config_validation_and_schedule():
    for bad in (dict(epochs=0), dict(batch_size=0), dict(lr=-1e-3), dict(lr=float("nan")), dict(crop=-1),
                dict(precision="float16"), dict(lr_decay_every=0)):
        with pytest.raises(InvalidConfig):
            TrainConfig(**bad)
    cfg = TrainConfig(lr=1e-3, lr_decay=0.5, lr_decay_every=5)
    assert [cfg.lr_at(e) for e in (0, 4, 5, 10)] == [1e-3, 1e-3, 5e-4, 2.5e-4]
    assert TrainConfig().to_dict()["batch_size"] == 32


def test_single_sphere_loss_decreases(sphere):
    model = _small()
    _, hist = train(model, [sphere], TrainConfig(epochs=5, batch_size=1, lr=1e-2, frames=6, lr_decay_every=100))
    assert all(b < a for a, b in zip(hist, hist[1:]))
    np.testing.assert_allclose(hist, [1.54381, 1.50571, 1.46611, 1.41692, 1.35193], rtol=1e-3)
    assert model.step == 5


def test_zero_learning_rate_leaves_parameters(sphere):
    model = _small(dropout_rate=0.2)
    before = {n: p.data.copy() for n, p in model.named_parameters()}
    train(model, [sphere, sphere], TrainConfig(epochs=2, batch_size=1, lr=0.0, frames=4))
    for n, p in model.named_parameters():
        np.testing.assert_array_equal(p.data, before[n])


def test_training_is_deterministic():
    data = synthetic_dataset(("lambertian-sphere", "blinn_phong-heightfield"), 4, seed=1, size=16, q=6)
    cfg = TrainConfig(epochs=2, batch_size=2, lr=1e-3, frames=4, crop=10, seed=3)
    runs = []
    for _ in range(2):
        model = _small(dropout_rate=0.2)
        _, hist = train(model, data, cfg)
        runs.append((hist, [p.data.copy() for p in model.parameters()]))
    assert runs[0][0] == runs[1][0]
    for a, b in zip(runs[0][1], runs[1][1]):
        np.testing.assert_array_equal(a, b)


def test_mixed_sizes_in_one_batch():
    data = [synthetic_sample("lambertian-sphere", 0, size=12, q=4), synthetic_sample("lambertian-sphere", 1, size=16, q=5)]
    _, hist = train(_small(), data, TrainConfig(epochs=1, batch_size=2, lr=1e-3, frames=8))
    assert np.isfinite(hist[0])


def test_training_errors(sphere):
    no_gt = DatasetSample(sphere.images, sphere.lights, sphere.mask)
    with pytest.raises(MissingData):
        train(_small(), [no_gt], TrainConfig(epochs=1))
    with pytest.raises(MissingData):
        train(_small(), [], TrainConfig(epochs=1))
    model = _small()
    model.params["head3.bias"].data[...] = np.nan
    with pytest.raises(NumericalError, match="epoch 0, batch 0"):
        train(model, [sphere], TrainConfig(epochs=1, batch_size=1))


def test_ground_truth_scores_zero(sphere):
    report = evaluate(lambda s: s.normals, [sphere, sphere])
    assert report.mae == {"lambertian-sphere": 0.0, "lambertian-sphere'": 0.0}
    assert report.mean == 0.0
    assert report.error_maps["lambertian-sphere"].shape == (16, 16)


def test_aggregate_is_mean_of_objects(sphere):
    data = synthetic_dataset(("blinn_phong-sphere",), 3, seed=2, size=16, q=6)
    report = evaluate(baseline_estimator, data)
    assert report.mean == pytest.approx(np.mean(list(report.mae.values())))
    assert report.lines()[-1].split()[0] == "mean"
    assert isinstance(report, EvalReport)


def test_undetermined_pixels_count_as_right_angles(sphere):
    blank = lambda s: NormalMap(np.zeros(s.normals.normals.shape), np.zeros(s.mask.shape, bool))  # noqa: E731
    assert evaluate(blank, [sphere]).mean == pytest.approx(90.0)


def test_evaluate_models_and_missing_truth(sphere):
    model = _small()
    a = evaluate(model, [sphere]).mean
    b = evaluate(network_estimator(model), [sphere]).mean
    assert a == b and 0 <= a <= 180
    with pytest.raises(MissingData):
        evaluate(model, [DatasetSample(sphere.images, sphere.lights, sphere.mask)])
    with pytest.raises(MissingData):
        evaluate(model, [])


def test_ablation_covers_variants(sphere):
    base = ModelConfig(C=2, K=1, L=1, M=1, N=1, dropout_rate=0.0)
    table = ablate_variants([sphere], base, TrainConfig(epochs=1, batch_size=1, frames=3))
    assert set(table) == {"t-irfe-iafe", "t-iafe-irfe", "m-irfe-iafe"}
    assert all(0 <= v <= 180 for v in table.values())
