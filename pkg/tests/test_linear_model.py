import numpy as np
import pytest

from viseme_toolkit.errors import DimensionMismatchError, TrainingError
from viseme_toolkit.linear_model import (
    load_model,
    procrustes_align,
    project,
    project_all,
    reconstruct,
    residual_fraction,
    save_model,
    select_mode_count,
    train_linear_model,
)


def oracle_mode_count(data: np.ndarray, fraction: float) -> int:
    covariance = np.cov(data, rowvar=False)
    eigenvalues = np.sort(np.linalg.eigvalsh(covariance))[::-1]
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    ratios = np.cumsum(eigenvalues) / eigenvalues.sum()
    return int(np.argmax(ratios >= fraction)) + 1


def random_data(seed: int, count: int, dim: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    # Anisotropic so the retained-mode count varies between draws
    scales = rng.uniform(0.1, 3.0, size=dim) ** 2
    return rng.standard_normal((count, dim)) * scales + rng.normal(size=dim)


def test_identical_rows_give_mean_only_model():
    row = np.array([1.0, -2.0, 3.5])
    model = train_linear_model(np.tile(row, (6, 1)), 0.95)
    assert model.n_modes == 0
    assert np.array_equal(model.mean, row)
    assert np.allclose(model.reconstruct(np.zeros(0)), row)


def test_fraction_met_exactly():
    assert select_mode_count(np.array([9.0, 1.0]), 0.9) == 1
    a, b = np.sqrt(13.5), np.sqrt(1.5)
    data = np.array([[a, 0.0], [-a, 0.0], [0.0, b], [0.0, -b]])
    model = train_linear_model(data, 0.9)
    assert model.n_modes == 1
    assert model.eigenvalues[0] == pytest.approx(9.0)


@pytest.mark.parametrize("seed", range(100))
def test_mode_count_matches_full_eigendecomposition(seed):
    count, dim = (50, 20) if seed % 2 == 0 else (12, 30)
    data = random_data(seed, count, dim)
    model = train_linear_model(data, 0.95)
    assert model.n_modes == oracle_mode_count(data, 0.95)
    gram = model.modes.T @ model.modes
    assert np.allclose(gram, np.eye(model.n_modes), atol=1e-8)
    assert np.all(model.eigenvalues >= 0)
    assert np.all(np.diff(model.eigenvalues) <= 1e-12)


def test_projection_examples():
    model = train_linear_model(random_data(1, 40, 6), 0.99)
    assert np.allclose(project(model, model.mean), 0.0)
    params = project(model, model.mean + 2.0 * model.modes[:, 0])
    expected = np.zeros(model.n_modes)
    expected[0] = 2.0
    assert np.allclose(params, expected, atol=1e-10)


def test_reconstruct_examples():
    model = train_linear_model(random_data(2, 40, 6), 0.99)
    assert np.allclose(reconstruct(model, np.zeros(model.n_modes)), model.mean)
    unit = np.zeros(model.n_modes)
    unit[0] = 1.0
    assert np.allclose(reconstruct(model, unit), model.mean + model.modes[:, 0])


def test_round_trip_within_span():
    rng = np.random.default_rng(3)
    model = train_linear_model(random_data(3, 60, 10), 0.9)
    for _ in range(20):
        x = model.mean + model.modes @ rng.normal(size=model.n_modes)
        assert np.allclose(model.reconstruct(model.project(x)), x, atol=1e-8)


def test_residual_matches_discarded_variance():
    data = random_data(4, 80, 12)
    model = train_linear_model(data, 0.8)
    assert residual_fraction(model, data) == pytest.approx(1.0 - model.explained_fraction, rel=1e-6, abs=1e-12)
    assert model.explained_fraction >= 0.8 - 1e-12


def test_full_fraction_reconstructs_training_rows():
    data = random_data(5, 8, 25)
    model = train_linear_model(data, 1.0)
    rebuilt = model.reconstruct(project_all(model, data))
    assert np.allclose(rebuilt, data, rtol=1e-6, atol=1e-6)


def test_deterministic_and_sign_normalized():
    data = random_data(6, 30, 8)
    first = train_linear_model(data, 0.95)
    second = train_linear_model(data, 0.95)
    assert np.array_equal(first.modes, second.modes)
    assert np.array_equal(first.eigenvalues, second.eigenvalues)
    pivots = np.argmax(np.abs(first.modes), axis=0)
    assert np.all(first.modes[pivots, np.arange(first.n_modes)] > 0)


def test_dimension_checks():
    model = train_linear_model(random_data(7, 20, 4), 0.95)
    with pytest.raises(DimensionMismatchError):
        model.project(np.zeros(5))
    with pytest.raises(DimensionMismatchError):
        model.reconstruct(np.zeros(model.n_modes + 1))


def test_training_preconditions():
    with pytest.raises(TrainingError):
        train_linear_model(np.zeros((1, 3)), 0.95)
    with pytest.raises(TrainingError):
        train_linear_model(np.zeros((4, 3)), 0.0)


def test_model_file_round_trip():
    model = train_linear_model(random_data(8, 30, 7), 0.9, domain_note="mouth-region")
    loaded = load_model(save_model(model))
    assert np.array_equal(loaded.mean, model.mean)
    assert np.array_equal(loaded.modes, model.modes)
    assert np.array_equal(loaded.eigenvalues, model.eigenvalues)
    assert loaded.domain_note == "mouth-region"
    assert save_model(loaded) == save_model(model)


def test_procrustes_removes_similarity_transforms():
    triangle = np.array([[0.0, 0.0], [4.0, 0.0], [1.0, 3.0], [2.5, 5.0]])
    shapes = []
    for angle, scale, shift in ((0.0, 1.0, (0, 0)), (0.7, 2.0, (5, -1)), (-1.2, 0.5, (-3, 8))):
        rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        shapes.append((scale * triangle @ rotation.T + shift).reshape(-1))
    aligned, mean = procrustes_align(np.array(shapes))
    assert np.allclose(aligned[1], aligned[0], atol=1e-8)
    assert np.allclose(aligned[2], aligned[0], atol=1e-8)
    assert np.linalg.norm(mean) == pytest.approx(1.0)
