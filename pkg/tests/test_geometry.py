import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sps_regions.core import SpsConfig, compute_sums, least_squares_estimate, sps_indicator, sps_initialize
from sps_regions.data import GenerationSpec, RegressionDataset, Uniform, generate_dataset, gram_matrices
from sps_regions.geometry import (
    Frame,
    GeometryError,
    QuadraticRegion,
    affine_sum_maps,
    all_affine_maps,
    bounding_ball,
    build_certificate,
    empirical_diameter,
    exact_diameter_m2,
    indicator_batch,
    is_bounded,
    load_points_csv,
    pairwise_region,
    sample_region_points,
    save_points_csv,
    theta_tilde_region,
)
from sps_regions.linalg import principal_sqrt


def _dataset(n=200, d=2, seed=0, noise=Uniform(-1, 1)):
    return generate_dataset(GenerationSpec(n=n, d=d, theta_star=[5.0] * d, noise=noise, seed=seed))


def _m2(ds, signs):
    _, Rbar = gram_matrices(ds.Phi)
    return SpsConfig(2, 1, np.asarray(signs).reshape(1, -1), [0, 1], np.linalg.inv(principal_sqrt(Rbar)), 0)


# -- affine maps ---------------------------------------------------------------------


def test_affine_maps_reproduce_sums():
    ds = _dataset(n=50, d=3)
    cfg = sps_initialize(6, 2, ds.Phi, seed=1)
    theta = np.array([4.0, 6.0, 5.5])
    S = compute_sums(ds, cfg, theta)
    F, c = all_affine_maps(ds, cfg)
    for i in range(6):
        Fi, ci = affine_sum_maps(ds, cfg, i)
        np.testing.assert_allclose(ci - Fi @ theta, S[i], atol=1e-10)
        np.testing.assert_allclose(F[i], Fi, atol=1e-12)
        np.testing.assert_allclose(c[i], ci, atol=1e-10)


def test_reference_map_is_gram_square_root():
    ds = _dataset(n=80)
    cfg = sps_initialize(2, 1, ds.Phi, seed=0)
    F0, _ = affine_sum_maps(ds, cfg, 0)
    np.testing.assert_allclose(F0, principal_sqrt(gram_matrices(ds.Phi)[1]), atol=1e-12)


def test_indicator_batch_matches_scalar():
    ds = _dataset(n=100)
    cfg = sps_initialize(10, 2, ds.Phi, seed=3)
    thetas = 5 + np.random.default_rng(0).standard_normal((300, 2)) * 0.3
    batch = indicator_batch(ds, cfg, thetas)
    assert batch.any() and not batch.all()
    assert batch.tolist() == [sps_indicator(ds, cfg, t) for t in thetas]


# -- pairwise regions -------------------------------------------------------------------


def test_pairwise_region_is_norm_difference():
    ds = _dataset(n=60)
    cfg = sps_initialize(4, 1, ds.Phi, seed=2)
    rng = np.random.default_rng(1)
    for theta in 5 + rng.standard_normal((40, 2)):
        S = compute_sums(ds, cfg, theta)
        for i in range(1, 4):
            val = pairwise_region(ds, cfg, i).value(theta)
            assert val == pytest.approx(S[0] @ S[0] - S[i] @ S[i], rel=1e-8, abs=1e-10)


def test_all_plus_region_is_degenerate():
    ds = _dataset(n=30)
    region = pairwise_region(ds, _m2(ds, np.ones(30)), 1)
    assert np.abs(region.A).max() <= 1e-12 and np.abs(region.b).max() <= 1e-10
    rep = exact_diameter_m2(region)
    assert not rep.bounded and rep.diameter == math.inf


def test_tilde_frame_change_of_variables():
    ds = _dataset(n=40)
    signs = 2.0 * np.random.default_rng(5).integers(0, 2, 40) - 1
    tilde = theta_tilde_region(ds, signs)
    region = pairwise_region(ds, _m2(ds, signs), 1)
    assert tilde.frame is Frame.THETA_TILDE and region.frame is Frame.THETA
    for theta in 5 + np.random.default_rng(2).standard_normal((20, 2)):
        a = tilde.value(ds.theta_star - theta)
        assert a == pytest.approx(ds.n * region.value(theta), rel=1e-8, abs=1e-8)
    assert exact_diameter_m2(tilde).diameter == pytest.approx(exact_diameter_m2(region).diameter, rel=1e-8)


def test_tilde_frame_needs_noise():
    ds = RegressionDataset(np.eye(2), np.ones(2))
    with pytest.raises(GeometryError):
        theta_tilde_region(ds, [1, -1])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_m2_region_matches_indicator(seed):
    rng = np.random.default_rng(seed)
    ds = _dataset(n=int(rng.integers(5, 60)), seed=seed % 13)
    cfg = sps_initialize(2, 1, ds.Phi, seed=seed)
    region = pairwise_region(ds, cfg, 1)
    for theta in 5 + rng.standard_normal((30, 2)):
        v = region.value(theta)
        if abs(v) <= 1e-9 * (1 + abs(region.c)):
            continue
        assert (v < 0) == sps_indicator(ds, cfg, theta)


# -- certificate ----------------------------------------------------------------------


def test_certificate_all_plus():
    Phi = np.random.default_rng(0).standard_normal((10, 2))
    cert = build_certificate(Phi, np.ones(10))
    np.testing.assert_allclose(cert.K, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(cert.M, 0.0, atol=1e-12)
    assert not is_bounded(cert)


def test_certificate_square_design_is_unbounded():
    Phi = np.random.default_rng(1).standard_normal((3, 3))
    cert = build_certificate(Phi, [1, -1, 1])
    np.testing.assert_allclose(np.abs(cert.k_eigenvalues), 1.0, atol=1e-12)
    np.testing.assert_allclose(cert.M, 0.0, atol=1e-10)
    assert not is_bounded(cert)
    ds = RegressionDataset(Phi, Phi @ np.ones(3) + 0.1, np.ones(3), np.full(3, 0.1))
    assert not exact_diameter_m2(pairwise_region(ds, _m2(ds, [1, -1, 1]), 1)).bounded


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(3, 40), d=st.integers(1, 3))
def test_certificate_projection_properties(seed, n, d):
    rng = np.random.default_rng(seed)
    Phi = rng.standard_normal((max(n, d), d))
    signs = 2.0 * rng.integers(0, 2, Phi.shape[0]) - 1
    cert = build_certificate(Phi, signs)
    M, K, M0 = cert.M, cert.K, cert.M0
    assert np.linalg.norm(M - M.T) <= 1e-8
    assert np.linalg.norm(M @ M - M) <= 1e-8 * (1 + np.linalg.norm(M))
    assert np.sum(np.linalg.eigvalsh(M) > 0.5) <= d
    assert np.max(np.abs(cert.k_eigenvalues)) <= 1 + 1e-9
    np.testing.assert_allclose(M0.T @ M0, np.eye(d) - K @ K, atol=1e-10)


def test_certificate_streaming_mode_skips_projection():
    Phi = np.random.default_rng(0).standard_normal((20, 2))
    assert build_certificate(Phi, np.ones(20), materialize=False).M is None


def test_bounded_flag_agrees_with_diameter():
    for seed in range(20):
        ds = _dataset(n=8, seed=seed)
        cfg = sps_initialize(2, 1, ds.Phi, seed=seed)
        rep = exact_diameter_m2(pairwise_region(ds, cfg, 1))
        assert rep.bounded == is_bounded(build_certificate(ds.Phi, cfg.signs[0]))


# -- diameters --------------------------------------------------------------------------


def test_diameter_unit_ball():
    rep = exact_diameter_m2(QuadraticRegion(np.eye(2), np.zeros(2), -1.0))
    assert rep.diameter == pytest.approx(2.0) and rep.bounded
    np.testing.assert_allclose(rep.center, 0.0)


def test_diameter_axis_aligned_ellipse():
    rep = exact_diameter_m2(QuadraticRegion(np.diag([1.0, 4.0]), np.zeros(2), -4.0))
    assert rep.diameter == pytest.approx(4.0)
    assert rep.lambda_min_A == pytest.approx(1.0)


def test_diameter_shifted_center():
    # (x - 1)^2 + (y + 2)^2 <= 9
    rep = exact_diameter_m2(QuadraticRegion(np.eye(2), [-1.0, 2.0], 1 + 4 - 9))
    assert rep.diameter == pytest.approx(6.0)
    np.testing.assert_allclose(rep.center, [1.0, -2.0])


def test_empty_region_has_zero_diameter():
    rep = exact_diameter_m2(QuadraticRegion(np.eye(2), np.zeros(2), 1.0))
    assert rep.diameter == 0.0 and rep.bounded


def test_indefinite_region_rejected():
    with pytest.raises(GeometryError):
        exact_diameter_m2(QuadraticRegion(np.diag([1.0, -1.0]), np.zeros(2), -1.0))


def test_asymmetric_matrix_rejected():
    with pytest.raises(GeometryError):
        QuadraticRegion([[1.0, 1.0], [0.0, 1.0]], np.zeros(2), -1.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_diameter_matches_boundary_sampling(seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((2, 2))
    A = G @ G.T + 0.2 * np.eye(2)
    center = rng.standard_normal(2)
    r2 = float(rng.uniform(0.5, 4.0))
    region = QuadraticRegion(A, -A @ center, center @ A @ center - r2)
    vals, vecs = np.linalg.eigh(A)
    angle = np.linspace(0, 2 * np.pi, 4001)
    circle = np.column_stack([np.cos(angle), np.sin(angle)])
    boundary = center + (circle * np.sqrt(r2 / vals)) @ vecs.T
    np.testing.assert_allclose(region.value(boundary), 0.0, atol=1e-9)
    rep = exact_diameter_m2(region)
    assert rep.diameter == pytest.approx(empirical_diameter(boundary), rel=1e-5)


def test_empirical_diameter_examples():
    assert empirical_diameter([[0, 0], [3, 4], [1, 1]]) == pytest.approx(5.0)
    assert empirical_diameter([0.0, 2.0, -1.0]) == pytest.approx(3.0)
    with pytest.raises(GeometryError):
        empirical_diameter([[1.0, 2.0]])


def test_empirical_diameter_brute_force():
    pts = np.random.default_rng(3).standard_normal((60, 3))
    brute = max(np.linalg.norm(a - b) for a in pts for b in pts)
    assert empirical_diameter(pts) == pytest.approx(brute, rel=1e-12)


# -- sampling ---------------------------------------------------------------------------


@pytest.mark.parametrize("m,q", [(2, 1), (10, 2)])
def test_sampled_points_are_members(m, q):
    ds = _dataset(n=200, seed=4)
    cfg = sps_initialize(m, q, ds.Phi, seed=7)
    pts = sample_region_points(ds, cfg, 100, seed=1)
    assert pts.shape == (100, 2)
    assert all(sps_indicator(ds, cfg, p) for p in pts)
    if m == 2:
        rep = exact_diameter_m2(pairwise_region(ds, cfg, 1))
        assert empirical_diameter(pts) <= rep.diameter + 1e-12
    else:
        center, radius = bounding_ball(ds, cfg)
        assert np.max(np.linalg.norm(pts - center, axis=1)) <= radius


def test_sampling_deterministic():
    ds = _dataset(n=100)
    cfg = sps_initialize(2, 1, ds.Phi, seed=0)
    a = sample_region_points(ds, cfg, 50, seed=9)
    b = sample_region_points(ds, cfg, 50, seed=9)
    assert a.tobytes() == b.tobytes()


def test_noiseless_region_collapses():
    ds = _dataset(n=50, noise=Uniform(0, 0))
    cfg = sps_initialize(2, 1, ds.Phi, seed=0)
    rep = exact_diameter_m2(pairwise_region(ds, cfg, 1))
    assert rep.diameter <= 1e-6
    pts = sample_region_points(ds, cfg, 10, seed=0)
    np.testing.assert_allclose(pts, np.tile(ds.theta_star, (10, 1)), atol=1e-8)
    np.testing.assert_allclose(least_squares_estimate(ds), ds.theta_star, atol=1e-10)


def test_unbounded_region_sampling_errors():
    ds = _dataset(n=30)
    with pytest.raises(GeometryError, match="unbounded"):
        sample_region_points(ds, _m2(ds, np.ones(30)), 5, seed=0)


def test_points_csv_round_trip(tmp_path):
    ds = _dataset(n=100)
    cfg = sps_initialize(2, 1, ds.Phi, seed=0)
    rep = exact_diameter_m2(pairwise_region(ds, cfg, 1))
    pts = sample_region_points(ds, cfg, 20, seed=2)
    path = tmp_path / "pts.csv"
    save_points_csv(pts, path, rep)
    text = path.read_text()
    assert "# diameter:" in text and "x_1,x_2" in text.splitlines()
    np.testing.assert_array_equal(load_points_csv(path), pts)
