import io

import numpy as np
import pytest

from coreselect.data_model import EmbeddingMatrix
from coreselect.errors import ConfigError, DataError, NumericError
from coreselect.pca import fit, fit_transform, load_model, save_model, transform


def matrix(data, labels=None):
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    labels = labels if labels is not None else np.zeros(n, dtype=int)
    return EmbeddingMatrix(ids=np.arange(n), labels=labels, data=data, class_names=["a"])


def random_matrix(rng, n, d):
    return matrix(rng.normal(size=(n, d)) * rng.uniform(0.5, 3.0, size=d))


def test_rank1_line():
    t = np.arange(1, 6, dtype=float)
    m = matrix(np.column_stack([0.6 * t, 0.8 * t]))
    model = fit(m, 0.95)
    assert model.retained == 1
    assert model.explained_ratio[0] == pytest.approx(1.0, abs=1e-12)
    v = model.basis[:, 0]
    assert np.allclose(np.abs(v), [0.6, 0.8], atol=1e-10)


def test_isotropic_needs_both_components():
    # symmetric cross pattern: equal variance on both axes
    m = matrix([[1, 0], [-1, 0], [0, 1], [0, -1]])
    model = fit(m, 0.95)
    assert model.retained == 2


def test_trace_preservation():
    rng = np.random.default_rng(0)
    m = random_matrix(rng, 100, 10)
    model = fit(m, 1.0)
    centered = m.data - m.data.mean(axis=0)
    total = np.trace(centered.T @ centered / m.n)
    assert abs(model.eigenvalues.sum() - total) <= 1e-8 * max(1.0, total)


def test_transform_centers_fitting_data():
    rng = np.random.default_rng(1)
    m = random_matrix(rng, 50, 6)
    model, red = fit_transform(m, 0.95)
    assert np.all(np.abs(red.data.mean(axis=0)) <= 1e-10)
    assert red.dim == model.retained
    assert np.array_equal(red.ids, m.ids)


def test_full_rank_isometry():
    # k = d: pairwise distances preserved (orthogonal change of basis)
    rng = np.random.default_rng(2)
    m = random_matrix(rng, 30, 5)
    model, red = fit_transform(m, 1.0)
    assert model.retained == 5
    from scipy.spatial.distance import pdist
    assert np.allclose(pdist(m.data), pdist(red.data), atol=1e-8)


def test_mean_row_maps_to_zero():
    rng = np.random.default_rng(3)
    m = random_matrix(rng, 20, 4)
    model = fit(m, 0.95)
    probe = matrix(model.mean[None, :])
    out = transform(model, probe)
    assert np.allclose(out.data, 0.0, atol=1e-12)


def test_variance_ratio_at_least_threshold():
    rng = np.random.default_rng(4)
    for _ in range(20):
        m = random_matrix(rng, 60, 8)
        thr = rng.uniform(0.5, 1.0)
        model, red = fit_transform(m, thr)
        in_var = np.var(m.data, axis=0).sum()
        out_var = np.var(red.data, axis=0).sum()
        assert out_var / in_var >= thr - 1e-9


def test_orthonormality_and_residual():
    rng = np.random.default_rng(5)
    for _ in range(20):
        m = random_matrix(rng, rng.integers(10, 80), rng.integers(2, 16))
        model = fit(m, 1.0)
        k = model.retained
        gram = model.basis.T @ model.basis
        assert np.max(np.abs(gram - np.eye(k))) <= 1e-8
        centered = m.data - model.mean
        cov = centered.T @ centered / m.n
        scale = max(1.0, model.eigenvalues[0])
        for j in range(k):
            resid = cov @ model.basis[:, j] - model.eigenvalues[j] * model.basis[:, j]
            assert np.max(np.abs(resid)) <= 1e-7 * scale


def test_sign_convention():
    rng = np.random.default_rng(6)
    m = random_matrix(rng, 40, 6)
    model = fit(m, 1.0)
    for j in range(model.retained):
        i = np.argmax(np.abs(model.basis[:, j]))
        assert model.basis[i, j] >= 0


def test_threshold_monotonicity():
    rng = np.random.default_rng(7)
    m = random_matrix(rng, 50, 10)
    ks = [fit(m, t).retained for t in (0.5, 0.7, 0.9, 0.99, 1.0)]
    assert ks == sorted(ks)


def test_errors():
    with pytest.raises(DataError):
        fit(matrix([[1.0, 2.0]]), 0.95)
    with pytest.raises(NumericError):
        fit(matrix([[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]), 0.95)
    with pytest.raises(ConfigError):
        fit(matrix(np.eye(3)), 1.5)
    model = fit(matrix(np.random.default_rng(0).normal(size=(5, 3))), 0.95)
    with pytest.raises(DataError, match="mismatch"):
        transform(model, matrix(np.eye(4)))


def test_model_persistence_bit_exact():
    rng = np.random.default_rng(8)
    m = random_matrix(rng, 30, 7)
    model = fit(m, 0.9)
    buf = io.BytesIO()
    save_model(model, buf)
    buf.seek(0)
    back = load_model(buf)
    assert back.input_dim == model.input_dim and back.retained == model.retained
    assert back.mean.tobytes() == model.mean.tobytes()
    assert back.basis.tobytes() == model.basis.tobytes()
    assert back.eigenvalues.tobytes() == model.eigenvalues.tobytes()
    assert back.explained_ratio.tobytes() == model.explained_ratio.tobytes()
