import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spike_dyn import DomainError
from spike_dyn.adapted_basis import basis_for_model
from spike_dyn.spiked_data import (
    Dataset,
    empirical_moments,
    input_output_correlation,
    load_dataset_csv,
    make_model,
    population_covariance,
    random_rotation,
    sample,
    save_dataset_csv,
)

sigma2s = st.floats(0.5, 4.0)
rhos = st.floats(0.0, 50.0)
alignments = st.floats(0.0, 1.0)


def test_make_model_aligned():
    m = make_model(3, 1.0, 0.0, 1.0)
    assert np.array_equal(m.mu, [1.0, 0.0, 0.0])
    assert np.array_equal(m.beta, [1.0, 0.0, 0.0])


def test_make_model_orthogonal():
    m = make_model(3, 1.0, 5.0, 0.0)
    assert m.mu @ m.beta == 0.0


def test_rotation_preserves_alignment():
    m = make_model(30, 1.0, 20.0, 0.3, rotate_seed=7)
    assert m.mu @ m.beta == pytest.approx(0.3, abs=1e-12)
    assert np.linalg.norm(m.mu) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(m.beta) == pytest.approx(1.0, abs=1e-12)
    # genuinely rotated, not the canonical embedding
    assert abs(m.mu[0]) < 0.99


def test_random_rotation_is_orthogonal_and_seeded():
    Q = random_rotation(12, 4)
    assert np.allclose(Q.T @ Q, np.eye(12), atol=1e-12)
    assert np.array_equal(Q, random_rotation(12, 4))
    assert not np.array_equal(Q, random_rotation(12, 5))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(d=3, sigma2=1.0, rho=1.0, A=1.2),
        dict(d=3, sigma2=1.0, rho=1.0, A=-0.1),
        dict(d=1, sigma2=1.0, rho=1.0, A=0.5),
        dict(d=3, sigma2=0.0, rho=1.0, A=0.5),
        dict(d=3, sigma2=1.0, rho=-1.0, A=0.5),
    ],
)
def test_make_model_domain_errors(kwargs):
    with pytest.raises(DomainError):
        make_model(**kwargs)


def test_covariance_isotropic():
    m = make_model(4, 2.5, 0.0, 0.4)
    assert np.array_equal(population_covariance(m), 2.5 * np.eye(4))


def test_covariance_axis_aligned():
    m = make_model(2, 1.0, 3.0, 0.5)
    assert np.array_equal(population_covariance(m), np.diag([4.0, 1.0]))


def test_covariance_generic_spectrum():
    m = make_model(10, 2.0, 20.0, 0.6, rotate_seed=3)
    ev = np.linalg.eigvalsh(population_covariance(m))
    assert ev[-1] == pytest.approx(42.0, rel=1e-12)
    assert np.allclose(ev[:-1], 2.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(sigma2s, rhos, alignments, st.integers(2, 12), st.integers(0, 1000))
def test_spectrum_is_spike_plus_bulk(s2, rho, A, d, seed):
    ev = np.linalg.eigvalsh(population_covariance(make_model(d, s2, rho, A, rotate_seed=seed)))
    expected = np.r_[np.full(d - 1, s2), s2 * (1 + rho)]
    assert np.allclose(np.sort(ev), np.sort(expected), rtol=0, atol=1e-10 * s2 * (1 + rho))


def test_correlation_isotropic():
    m = make_model(5, 1.7, 0.0, 0.3)
    assert np.allclose(input_output_correlation(m), 1.7 * m.beta, atol=1e-15)


def test_correlation_aligned_norm():
    m = make_model(5, 1.0, 3.0, 1.0)
    assert np.linalg.norm(input_output_correlation(m)) == pytest.approx(4.0, rel=1e-14)


def test_correlation_against_explicit_matrix():
    m = make_model(30, 1.0, 20.0, 0.3, rotate_seed=11)
    explicit = population_covariance(m) @ m.beta
    assert np.allclose(input_output_correlation(m), explicit, atol=1e-13)
    assert np.linalg.norm(explicit) == pytest.approx(math.sqrt(40.6), rel=1e-12)
    assert math.sqrt(40.6) == pytest.approx(6.3718, abs=1e-4)


def test_sample_covariance_isotropic_monte_carlo():
    m = make_model(5, 1.3, 0.0, 0.5)
    S, _ = empirical_moments(sample(m, 1_000_000, 0))
    assert np.max(np.abs(S - 1.3 * np.eye(5))) < 0.01


def test_sample_single_row_labels_exact():
    m = make_model(6, 1.0, 4.0, 0.7, rotate_seed=2)
    data = sample(m, 1, 9)
    assert data.n == 1
    assert data.y[0] == data.X[0] @ m.beta


def test_sample_spike_variance():
    m = make_model(30, 1.0, 20.0, 0.3)
    S, _ = empirical_moments(sample(m, 100_000, 1))
    assert m.mu @ S @ m.mu == pytest.approx(21.0, rel=0.05)


def test_sample_deterministic():
    m = make_model(8, 1.0, 5.0, 0.3, rotate_seed=1)
    a, b = sample(m, 50, 3), sample(m, 50, 3)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.X, sample(m, 50, 4).X)


def test_sample_covariance_converges():
    m = make_model(6, 1.0, 5.0, 0.5, rotate_seed=0)
    Sigma = population_covariance(m)
    errs = []
    for n in (1_000, 10_000, 100_000):
        # average over a few seeds so the comparison is not a coin flip
        e = np.mean([np.linalg.norm(empirical_moments(sample(m, n, s))[0] - Sigma) for s in range(5)])
        errs.append(e)
    assert errs[0] > errs[1] > errs[2]
    assert errs[0] / errs[2] == pytest.approx(10.0, rel=0.5)


def test_empirical_moments_single_sample():
    data = Dataset(np.array([[1.0, 0.0]]), np.array([2.0]))
    S, Sxy = empirical_moments(data)
    assert np.array_equal(S, [[1.0, 0.0], [0.0, 0.0]])
    assert np.array_equal(Sxy, [2.0, 0.0])


@settings(max_examples=30, deadline=None)
@given(rhos, alignments, st.integers(1, 40), st.integers(0, 10_000))
def test_noiseless_identity(rho, A, n, seed):
    m = make_model(7, 1.0, rho, A, rotate_seed=seed)
    S, Sxy = empirical_moments(sample(m, n, seed))
    assert np.allclose(Sxy, S @ m.beta, rtol=1e-10, atol=1e-10 * (1 + rho))
    assert np.all(np.linalg.eigvalsh(S) > -1e-10 * (1 + rho))


def test_empirical_correlation_converges():
    m = make_model(10, 1.0, 20.0, 0.3)
    _, Sxy = empirical_moments(sample(m, 200_000, 5))
    target = input_output_correlation(m)
    # standard error of each entry is O(sqrt(lambda1 * |beta|^2_Sigma / n)) < 0.05 here
    assert np.max(np.abs(Sxy - target)) < 0.1


@settings(max_examples=25, deadline=None)
@given(sigma2s, rhos, alignments, st.integers(0, 10_000))
def test_rotation_invariance_of_scalars(s2, rho, A, seed):
    b0 = basis_for_model(make_model(9, s2, rho, A))
    b1 = basis_for_model(make_model(9, s2, rho, A, rotate_seed=seed))
    scale = s2 * (1 + rho)
    for x, y in [
        (b0.sigma_xy_norm, b1.sigma_xy_norm),
        (b0.lambda1, b1.lambda1),
        (b0.lambda2, b1.lambda2),
        (b0.nu, b1.nu),
    ]:
        assert abs(x - y) <= 1e-10 * scale


def test_csv_round_trip(tmp_path):
    m = make_model(4, 1.0, 5.0, 0.5, rotate_seed=1)
    data = sample(m, 7, 2)
    path = tmp_path / "data.csv"
    save_dataset_csv(data, path)
    assert path.read_text().splitlines()[0] == "x_1,x_2,x_3,x_4,y"
    back = load_dataset_csv(path)
    assert np.array_equal(back.X, data.X) and np.array_equal(back.y, data.y)


def test_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,y\n1,2,3\n")
    with pytest.raises(ValueError):
        load_dataset_csv(path)


def test_types_are_immutable():
    m = make_model(4, 1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        m.mu[0] = 2.0
    data = sample(m, 3, 0)
    with pytest.raises(ValueError):
        data.X[0, 0] = 1.0
