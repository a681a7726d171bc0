"""PCA reduction checks: exact-subspace recovery, symmetry, the dense
eigensolver oracle, reconstruction identities, and serialization."""

import numpy as np
import pytest

from drsmpc.errors import DegenerateData, DimensionMismatch
from drsmpc.reduction import PcaBasis, PcaReducer, StateNormalizer, choose_q, fit_pca


def test_exact_low_dimensional_subspace():
    rng = np.random.default_rng(0)
    latent = rng.normal(size=(100, 3))
    lift = rng.normal(size=(3, 12))
    x = latent @ lift + rng.normal(size=12)
    basis = fit_pca(x).with_q(3)
    recon = basis.inverse_transform(basis.transform(x))
    np.testing.assert_allclose(recon, x, atol=1e-9)
    assert np.sum(basis.explained_variance_ratio[:3]) == pytest.approx(1.0, abs=1e-12)


def test_symmetric_line_gives_diagonal_component():
    t = np.linspace(-2.0, 2.0, 9)
    x = np.stack([t, t], axis=1)
    basis = fit_pca(x)
    np.testing.assert_allclose(basis.components[0], [1.0, 1.0] / np.sqrt(2.0), atol=1e-12)


def test_matches_dense_eigensolver_oracle():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(200, 50)) * rng.uniform(0.5, 3.0, size=50)
    basis = fit_pca(x)
    centered = x - x.mean(axis=0)
    evals, evecs = np.linalg.eigh(centered.T @ centered / x.shape[0])
    evals, evecs = evals[::-1], evecs[:, ::-1]
    np.testing.assert_allclose(basis.singular_values**2 / x.shape[0], evals, atol=1e-8)
    # directions agree up to sign
    dots = np.abs(np.sum(basis.components * evecs.T, axis=1))
    np.testing.assert_allclose(dots, 1.0, atol=1e-8)


def test_orthonormal_rows():
    rng = np.random.default_rng(2)
    basis = fit_pca(rng.normal(size=(60, 20)))
    gram = basis.components @ basis.components.T
    np.testing.assert_allclose(gram, np.eye(basis.rank), atol=1e-10)


def test_transform_of_mean_is_zero():
    rng = np.random.default_rng(3)
    basis = fit_pca(rng.normal(size=(40, 7))).with_q(4)
    np.testing.assert_allclose(basis.transform(basis.mean), np.zeros(4), atol=1e-12)


def test_reconstruction_matches_discarded_spectrum():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(300, 30)) * np.linspace(5.0, 0.1, 30)
    basis = fit_pca(x)
    q = choose_q(basis, 0.99)
    basis = basis.with_q(q)
    recon = basis.inverse_transform(basis.transform(x))
    mse = np.mean((recon - x) ** 2)
    total_var = np.sum(basis.singular_values**2) / x.size
    expected = (1.0 - np.sum(basis.explained_variance_ratio[:q])) * total_var
    assert mse == pytest.approx(expected, rel=1e-6)


def test_choose_q_threshold_one_returns_rank():
    rng = np.random.default_rng(5)
    basis = fit_pca(rng.normal(size=(50, 10)))
    assert choose_q(basis, 1.0) == basis.rank
    assert choose_q(basis, 1e-9) == 1
    with pytest.raises(ValueError):
        choose_q(basis, 0.0)


def test_row_permutation_invariance():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(80, 9))
    a = fit_pca(x)
    b = fit_pca(x[rng.permutation(80)])
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-12)
    np.testing.assert_allclose(a.components, b.components, atol=1e-8)


def test_degenerate_and_dimension_errors():
    with pytest.raises(DegenerateData):
        fit_pca(np.ones((10, 4)))
    with pytest.raises(DegenerateData):
        fit_pca(np.ones((1, 4)))
    rng = np.random.default_rng(7)
    basis = fit_pca(rng.normal(size=(20, 5))).with_q(2)
    with pytest.raises(DimensionMismatch):
        basis.transform(np.zeros(6))
    with pytest.raises(DimensionMismatch):
        basis.inverse_transform(np.zeros(3))


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    basis = fit_pca(rng.normal(size=(30, 6))).with_q(3)
    basis.save(tmp_path / "basis")
    loaded = PcaBasis.load(tmp_path / "basis")
    assert loaded.q == 3
    np.testing.assert_allclose(loaded.mean, basis.mean, rtol=1e-15)
    np.testing.assert_allclose(loaded.components, basis.components, rtol=1e-15)
    x = rng.normal(size=6)
    np.testing.assert_allclose(loaded.transform(x), basis.transform(x), rtol=1e-12)


def test_estimator_front_end():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(100, 8)) * np.linspace(3.0, 0.05, 8)
    red = PcaReducer(variance_threshold=0.95).fit(x)
    assert red.n_components_ == choose_q(red.basis_, 0.95)
    z = red.transform(x)
    assert z.shape == (100, red.n_components_)
    np.testing.assert_allclose(
        red.inverse_transform(z), red.basis_.inverse_transform(z), rtol=1e-12
    )
    with pytest.raises(ValueError):
        PcaReducer(n_components=2, variance_threshold=0.9).fit(x)
    params = PcaReducer(n_components=4).get_params()
    assert params == {"n_components": 4, "variance_threshold": None}


def test_state_normalizer_roundtrip():
    from drsmpc.plant import default_params, initial_state

    p = default_params()
    norm = StateNormalizer.from_params(p)
    x = initial_state(0.4, p).flatten()
    z = norm.normalize(x)
    assert np.all(z > 0) and z.max() < 2.0
    np.testing.assert_allclose(norm.denormalize(z), x, rtol=1e-14)
    with pytest.raises(DimensionMismatch):
        norm.normalize(np.zeros(3))
