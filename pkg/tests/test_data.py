import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sps_regions.core import least_squares_estimate
from sps_regions.data import (
    DataModelError,
    Gaussian,
    GenerationSpec,
    RegressionDataset,
    SignSymmetric,
    SingularPrefixError,
    Uniform,
    check_completely_exciting,
    coherence,
    estimate_constants,
    generate_dataset,
    gram_matrices,
    load_csv,
    load_generation_spec,
    save_csv,
)
from sps_regions.linalg import thin_qr

REFERENCE = dict(n=2000, d=2, theta_star=[5.0, 5.0], noise=Uniform(-1, 1), regressor=Uniform(1, 2))


def test_noiseless_dataset():
    ds = generate_dataset(GenerationSpec(n=30, d=2, theta_star=[1.0, -2.0], noise=Uniform(0, 0), seed=3))
    np.testing.assert_array_equal(ds.y, ds.Phi @ ds.theta_star)
    np.testing.assert_array_equal(ds.w, 0.0)


def test_reference_dataset_lse_near_truth():
    ds = generate_dataset(GenerationSpec(**REFERENCE, seed=11))
    assert ds.Phi.shape == (2000, 2)
    assert np.all((ds.Phi >= 1) & (ds.Phi <= 2))
    assert np.all(np.abs(ds.w) <= 1)
    np.testing.assert_array_equal(ds.y, ds.Phi @ ds.theta_star + ds.w)
    assert np.linalg.norm(least_squares_estimate(ds) - 5.0) < 0.5


def test_same_seed_bit_identical():
    a = generate_dataset(GenerationSpec(**REFERENCE, seed=99))
    b = generate_dataset(GenerationSpec(**REFERENCE, seed=99))
    assert a.Phi.tobytes() == b.Phi.tobytes() and a.y.tobytes() == b.y.tobytes()
    c = generate_dataset(GenerationSpec(**REFERENCE, seed=100))
    assert not np.array_equal(a.Phi, c.Phi)


def test_asymmetric_noise_rejected():
    with pytest.raises(DataModelError):
        GenerationSpec(n=10, d=1, theta_star=[1.0], noise=Uniform(-1, 2))
    with pytest.raises(DataModelError):
        GenerationSpec(n=10, d=1, theta_star=[1.0], noise=Gaussian(1.0, mean=0.5))


def test_uniform_noise_is_centered():
    ds = generate_dataset(GenerationSpec(n=10**5, d=1, theta_star=[0.0], noise=Uniform(-2, 2), seed=5))
    assert abs(ds.w.mean()) <= 4 * 2 / math.sqrt(12 * 10**5)


def test_sign_symmetric_custom_noise():
    noise = SignSymmetric(lambda rng, size: rng.exponential(1.0, size), sigma=2.0)
    ds = generate_dataset(GenerationSpec(n=10**5, d=1, theta_star=[0.0], noise=noise, seed=2))
    assert np.mean(ds.w > 0) == pytest.approx(0.5, abs=0.01)
    assert abs(ds.w.mean()) < 0.02


def test_variance_proxies():
    assert Uniform(-1, 1).variance_proxy ** 2 == pytest.approx(1 / 3)
    assert Gaussian(0.7).variance_proxy == 0.7


def test_generation_spec_from_config(tmp_path):
    path = tmp_path / "gen.json"
    path.write_text(
        '{"n": 50, "d": 2, "theta_star": [5, 5], "seed": 4,'
        ' "noise": {"kind": "gaussian", "sigma": 0.5},'
        ' "regressor": {"kind": "uniform", "low": 1, "high": 2}}'
    )
    spec = load_generation_spec(path)
    assert spec.noise == Gaussian(0.5) and spec.regressor == Uniform(1.0, 2.0)
    assert GenerationSpec.from_dict(spec.to_dict()).to_dict() == spec.to_dict()


def test_csv_round_trip(tmp_path):
    ds = generate_dataset(GenerationSpec(n=25, d=3, theta_star=[1.0, 2.0, 3.0], seed=1))
    path = tmp_path / "data.csv"
    save_csv(ds, path)
    assert path.read_text().splitlines()[0] == "phi_1,phi_2,phi_3,y"
    back = load_csv(path)
    np.testing.assert_array_equal(back.Phi, ds.Phi)
    np.testing.assert_array_equal(back.y, ds.y)


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(DataModelError):
        load_csv(path)


def test_dataset_shape_mismatch():
    with pytest.raises(DataModelError):
        RegressionDataset(np.ones((3, 2)), np.ones(4))


# -- Gram matrices --------------------------------------------------------------


def test_gram_examples():
    R, Rbar = gram_matrices(np.eye(2))
    np.testing.assert_array_equal(R, np.eye(2))
    np.testing.assert_array_equal(Rbar, np.eye(2) / 2)
    R, _ = gram_matrices([[1.0, 0.0], [1.0, 0.0]])
    np.testing.assert_array_equal(R, [[2.0, 0.0], [0.0, 0.0]])


def test_gram_matches_outer_product_sum():
    Phi = np.random.default_rng(0).standard_normal((100, 3))
    R, Rbar = gram_matrices(Phi)
    brute = sum(np.outer(row, row) for row in Phi)
    np.testing.assert_allclose(R, brute, atol=1e-10)
    np.testing.assert_allclose(Rbar, brute / 100, atol=1e-12)


def test_gram_lambda_min_matches_qr_factor():
    Phi = np.random.default_rng(1).uniform(1, 2, (300, 2))
    _, Rbar = gram_matrices(Phi)
    _, Phi_R = thin_qr(Phi)
    a = np.linalg.eigvalsh(Rbar)[0]
    b = np.linalg.eigvalsh(Phi_R.T @ Phi_R)[0] / 300
    assert abs(a - b) <= 1e-9


# -- coherence --------------------------------------------------------------------


def test_coherence_examples():
    assert coherence(np.eye(3)) == pytest.approx(1.0)
    assert coherence([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]) == pytest.approx(1.5)


def test_coherence_rank_deficient():
    with pytest.raises(ValueError):
        coherence([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(4, 40), d=st.integers(1, 4))
def test_coherence_range_and_invariance(seed, n, d):
    rng = np.random.default_rng(seed)
    Phi = rng.standard_normal((n, d))
    mu = coherence(Phi)
    assert 1 - 1e-9 <= mu <= n / d + 1e-9
    T = rng.standard_normal((d, d)) + 3 * np.eye(d)
    assert coherence(Phi @ T) == pytest.approx(mu, rel=1e-8, abs=1e-8)


# -- constants ----------------------------------------------------------------------


def _brute_constants(trajs, t0, rho):
    lam0, kappa = math.inf, 0.0
    for ds in trajs:
        for t in range(t0, ds.n + 1):
            head = ds.Phi[:t]
            lam0 = min(lam0, np.linalg.eigvalsh(head.T @ head / t)[0])
            kappa = max(kappa, coherence(head) / t ** (1 - rho))
    return lam0, kappa


def test_estimate_constants_identity_padded():
    rng = np.random.default_rng(4)
    Phi = np.vstack([np.eye(2), rng.uniform(1, 2, (40, 2))])
    ds = RegressionDataset(Phi, np.zeros(42))
    lam0, kappa = _brute_constants([ds], 2, 1.0)
    est = estimate_constants([ds], t0=2, rho=1.0, sigma=1.0)
    assert est.lambda0 == pytest.approx(lam0, rel=1e-9)
    assert est.kappa == pytest.approx(kappa, rel=1e-9)
    assert est.sigma == 1.0 and est.rho == 1.0


@pytest.mark.parametrize("rho", [1.0, 0.5])
def test_estimate_constants_matches_coherence_scan(rho):
    spec = GenerationSpec(n=120, d=2, theta_star=[5, 5])
    trajs = [generate_dataset(spec, seed=s) for s in range(3)]
    lam0, kappa = _brute_constants(trajs, 30, rho)
    est = estimate_constants(trajs, t0=30, rho=rho, sigma=3 ** -0.5)
    assert est.lambda0 == pytest.approx(lam0, rel=1e-9)
    assert est.kappa == pytest.approx(kappa, rel=1e-9)


def test_estimate_constants_reference_setting():
    spec = GenerationSpec(**REFERENCE)
    trajs = [generate_dataset(spec, seed=s) for s in range(5)]
    est = estimate_constants(trajs, t0=250, rho=1.0, sigma=3 ** -0.5)
    assert est.lambda0 > 0 and math.isfinite(est.kappa) and est.kappa >= 1


def test_estimate_constants_singular_prefix():
    Phi = np.vstack([np.ones((5, 2)), np.random.default_rng(0).uniform(1, 2, (10, 2))])
    trajs = [RegressionDataset(np.random.default_rng(1).uniform(1, 2, (15, 2)), np.zeros(15)),
             RegressionDataset(Phi, np.zeros(15))]
    with pytest.raises(SingularPrefixError) as info:
        estimate_constants(trajs, t0=2, rho=1.0, sigma=1.0)
    assert (info.value.trajectory, info.value.t) == (1, 2)


# -- complete excitation ------------------------------------------------------------


def test_completely_exciting_examples():
    assert not check_completely_exciting([[1.0, 2.0], [1.0, 2.0], [0.0, 1.0]], mode="exhaustive")
    assert check_completely_exciting([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], mode="exhaustive")


def test_completely_exciting_random_rows_exhaustive():
    Phi = np.random.default_rng(8).uniform(1, 2, (20, 2))
    brute = all(abs(np.linalg.det(Phi[list(T)])) > 1e-12 for T in itertools.combinations(range(20), 2))
    assert brute
    assert check_completely_exciting(Phi, mode="exhaustive") == brute


def test_completely_exciting_randomized():
    Phi = np.random.default_rng(8).uniform(1, 2, (2000, 2))
    assert check_completely_exciting(Phi, mode="randomized", k=10_000, seed=1)
    Phi[7] = Phi[1234]
    small = Phi[[7, 1234, 5]]
    assert not check_completely_exciting(small, mode="randomized", k=200, seed=1)


def test_exhaustive_limit():
    with pytest.raises(DataModelError, match="randomized"):
        check_completely_exciting(np.random.default_rng(0).uniform(size=(2000, 2)), mode="exhaustive")
