"""Quadratic form of pairwise SPS regions, certificate matrices, diameters, sampling.

A pairwise region is ``{theta : ||S_0(theta)||^2 <= ||S_i(theta)||^2}``,
the m = 2 region built from sums 0 and i. Each sum is affine in theta,
``S_i(theta) = c_i - F_i theta``, so the region is a (possibly degenerate)
ellipsoid ``x^T A x + 2 x^T b + c <= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial.distance import pdist

from ._rng import make_rng
from .core import SpsConfig, least_squares_estimate, sps_indicator
from .data import RegressionDataset, gram_matrices
from .linalg import pseudoinverse, sym_eigh, thin_qr

UNBOUNDED_TOL = 1e-10
PSD_SLACK = 1e-9
MATERIALIZE_LIMIT = 2000


class GeometryError(ValueError):
    pass


class Frame(str, Enum):
    THETA = "theta_space"
    THETA_TILDE = "theta_tilde_space"


@dataclass(frozen=True, eq=False)
class QuadraticRegion:
    A: np.ndarray
    b: np.ndarray
    c: float
    frame: Frame = Frame.THETA
    # natural size of A (largest eigenvalue of the unperturbed Gram term);
    # rank decisions are made relative to it, falling back to lambda_max(A)
    scale: float | None = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        scale = max(np.abs(A).max(initial=0.0), 1.0)
        if np.abs(A - A.T).max(initial=0.0) > 1e-10 * scale:
            raise GeometryError("A must be symmetric")
        object.__setattr__(self, "A", 0.5 * (A + A.T))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "frame", Frame(self.frame))

    def value(self, x) -> np.ndarray | float:
        """``x^T A x + 2 x^T b + c`` for one point or a stack of points."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return float(x @ self.A @ x + 2.0 * x @ self.b + self.c)
        return np.einsum("ki,ij,kj->k", x, self.A, x) + 2.0 * x @ self.b + self.c

    def contains(self, x) -> np.ndarray | bool:
        return self.value(x) <= 0.0


# -- affine maps and quadratic coefficients --------------------------------------


def _sign_column(config: SpsConfig, i: int) -> np.ndarray:
    if not 0 <= i < config.m:
        raise GeometryError(f"sum index {i} outside 0..{config.m - 1}")
    if i == 0:
        return np.ones(config.n)
    return config.signs[i - 1].astype(float)


def affine_sum_maps(dataset: RegressionDataset, config: SpsConfig, i: int) -> tuple[np.ndarray, np.ndarray]:
    """``(F_i, c_i)`` with ``S_i(theta) = c_i - F_i @ theta``."""
    alpha = _sign_column(config, i)
    W = config.sqrt_inv_gram
    weighted = dataset.Phi * alpha[:, None]
    F = W @ (weighted.T @ dataset.Phi) / dataset.n
    c = W @ (weighted.T @ dataset.y) / dataset.n
    return F, c


def all_affine_maps(dataset: RegressionDataset, config: SpsConfig) -> tuple[np.ndarray, np.ndarray]:
    """Stacked ``F`` of shape (m, d, d) and ``c`` of shape (m, d)."""
    alpha = np.vstack([np.ones((1, config.n)), config.signs.astype(float)])
    Phi, W, n = dataset.Phi, config.sqrt_inv_gram, dataset.n
    G = np.einsum("it,tj,tk->ijk", alpha, Phi, Phi) / n
    F = np.einsum("ab,ibk->iak", W, G)
    c = (alpha @ (Phi * dataset.y[:, None]) / n) @ W.T
    return F, c


def indicator_batch(dataset: RegressionDataset, config: SpsConfig, thetas, maps=None) -> np.ndarray:
    """Vectorized SPS indicator over the rows of ``thetas`` via the affine maps."""
    F, c = all_affine_maps(dataset, config) if maps is None else maps
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    S = c[None, :, :] - np.einsum("iab,kb->kia", F, thetas)
    z = np.einsum("kia,kia->ki", S, S)
    ties = z[:, 1:] == z[:, :1]
    beats = (z[:, :1] > z[:, 1:]) | (ties & (config.perm[0] > config.perm[1:])[None, :])
    return 1 + beats.sum(axis=1) <= config.m - config.q


def pairwise_region(dataset: RegressionDataset, config: SpsConfig, i: int) -> QuadraticRegion:
    if i < 1:
        raise GeometryError("pairwise regions are indexed by i >= 1")
    F0, c0 = affine_sum_maps(dataset, config, 0)
    Fi, ci = affine_sum_maps(dataset, config, i)
    A = F0.T @ F0 - Fi.T @ Fi
    b = Fi.T @ ci - F0.T @ c0
    c = c0 @ c0 - ci @ ci
    return QuadraticRegion(A, b, c, Frame.THETA, scale=float(np.linalg.norm(F0, 2)) ** 2)


def theta_tilde_region(dataset: RegressionDataset, signs_row) -> QuadraticRegion:
    """The pairwise region in ``theta_tilde = theta_star - theta``, scaled by n.

    Uses the noise realization directly: ``A = R - Q R^-1 Q``,
    ``b = (Phi^T - Q R^-1 Phi^T D) w`` and
    ``c = w^T (Phi R^-1 Phi^T - D Phi R^-1 Phi^T D) w`` with
    ``Q = Phi^T D Phi`` and ``D = diag(signs_row)``.
    """
    if not dataset.synthetic:
        raise GeometryError("theta_tilde frame needs theta_star and the noise w")
    alpha = np.asarray(signs_row, dtype=float).reshape(-1)
    Phi, w = dataset.Phi, dataset.w
    R, _ = gram_matrices(Phi)
    Qn = (Phi * alpha[:, None]).T @ Phi
    u = Phi.T @ w
    v = Phi.T @ (alpha * w)
    Rinv_Q = np.linalg.solve(R, Qn)
    Rinv_v = np.linalg.solve(R, v)
    A = R - Qn @ Rinv_Q
    b = u - Qn @ Rinv_v
    c = u @ np.linalg.solve(R, u) - v @ Rinv_v
    return QuadraticRegion(A, b, c, Frame.THETA_TILDE, scale=float(np.linalg.norm(R, 2)))


# -- certificate -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProjectionCertificate:
    K: np.ndarray  # Q^T D Q
    M0: np.ndarray  # Q K - D Q
    M: np.ndarray | None  # M0 (M0^T M0)^+ M0^T, only when n <= MATERIALIZE_LIMIT

    @property
    def k_eigenvalues(self) -> np.ndarray:
        return sym_eigh(self.K).values


def build_certificate(Phi, signs_row, materialize: bool | None = None) -> ProjectionCertificate:
    Q, _ = thin_qr(Phi)
    alpha = np.asarray(signs_row, dtype=float).reshape(-1)
    if alpha.shape[0] != Q.shape[0]:
        raise GeometryError(f"signs_row has length {alpha.shape[0]}, expected n={Q.shape[0]}")
    K = (Q * alpha[:, None]).T @ Q
    K = 0.5 * (K + K.T)
    M0 = Q @ K - alpha[:, None] * Q
    if materialize is None:
        materialize = Q.shape[0] <= MATERIALIZE_LIMIT
    M = None
    if materialize:
        # M0^T M0 = I - K^2 has eigenvalues in [0, 1]; cut off round-off on that scale
        G = M0.T @ M0
        M = M0 @ pseudoinverse(0.5 * (G + G.T), rank_tol=1e-10, scale=1.0) @ M0.T
        M = 0.5 * (M + M.T)
    return ProjectionCertificate(K, M0, M)


def is_bounded(certificate: ProjectionCertificate) -> bool:
    return float(np.max(np.abs(certificate.k_eigenvalues))) < 1.0 - UNBOUNDED_TOL


# -- diameters -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiameterReport:
    diameter: float
    bounded: bool
    center: np.ndarray
    lambda_min_A: float
    radius_sq: float = math.nan  # b^T A^+ b - c, clamped at 0

    def as_dict(self) -> dict:
        return {
            "diameter": self.diameter,
            "bounded": self.bounded,
            "center": self.center.tolist(),
            "lambda_min_A": self.lambda_min_A,
            "radius_sq": self.radius_sq,
        }


def exact_diameter_m2(region: QuadraticRegion) -> DiameterReport:
    """Diameter of ``{x : x^T A x + 2 x^T b + c <= 0}``, infinite if A is singular."""
    vals, _ = sym_eigh(region.A)
    lam_min, lam_max = float(vals[0]), float(vals[-1])
    scale = lam_max if region.scale is None else region.scale
    if lam_min < -PSD_SLACK * max(abs(scale), 1e-300):
        raise GeometryError(f"A is not positive semidefinite: lambda_min = {lam_min:.6g}")
    Apinv = pseudoinverse(region.A, rank_tol=UNBOUNDED_TOL, scale=scale)
    center = -Apinv @ region.b
    if lam_max <= 0.0 or lam_min <= UNBOUNDED_TOL * scale:
        return DiameterReport(math.inf, False, center, lam_min)
    radius_sq = max(float(region.b @ Apinv @ region.b - region.c), 0.0)
    return DiameterReport(2.0 * math.sqrt(radius_sq / lam_min), True, center, lam_min, radius_sq)


def empirical_diameter(points) -> float:
    """Largest Euclidean distance between any two of the points."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 2:
        raise GeometryError("need at least two points")
    return float(pdist(pts).max())


# -- sampling --------------------------------------------------------------------

MIN_ACCEPTANCE = 1e-6


def _unit_ball(rng, count: int, d: int) -> np.ndarray:
    g = rng.standard_normal((count, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random(count)[:, None] ** (1.0 / d)


def bounding_ball(dataset: RegressionDataset, config: SpsConfig) -> tuple[np.ndarray, float]:
    """Center (the LSE) and radius of a ball enclosing the SPS region.

    A member of the region satisfies ``||S_0||^2 <= ||S_i||^2`` for at least
    q indices i, so it lies within ``r_i = semi_i + ||center_i - lse||`` of
    the LSE for q of them; the (m-q)-th smallest ``r_i`` therefore bounds
    every member's distance.
    """
    lse = least_squares_estimate(dataset)
    reach = []
    for i in range(1, config.m):
        rep = exact_diameter_m2(pairwise_region(dataset, config, i))
        reach.append(rep.diameter / 2.0 + float(np.linalg.norm(rep.center - lse)) if rep.bounded else math.inf)
    return lse, sorted(reach)[config.m - config.q - 1]


def sample_region_points(
    dataset: RegressionDataset, config: SpsConfig, n_points: int, seed: int, batch: int = 4096
) -> np.ndarray:
    """Uniform points from the SPS region, shape ``(n_points, d)``.

    For m = 2 the candidates are drawn uniformly from the pairwise
    ellipsoid, otherwise from the bounding ball; either way a candidate is
    kept only if the SPS indicator accepts it.
    """
    d = dataset.d
    rng = make_rng(seed)
    if config.m == 2:
        region = pairwise_region(dataset, config, 1)
        rep = exact_diameter_m2(region)
        if not rep.bounded:
            raise GeometryError("SPS region is unbounded")
        vals, vecs = sym_eigh(region.A)
        center = rep.center
        shape = vecs * np.sqrt(rep.radius_sq / vals)  # unit ball -> ellipsoid
        scale = rep.diameter / 2.0
    else:
        center, scale = bounding_ball(dataset, config)
        if not math.isfinite(scale):
            raise GeometryError("SPS region is unbounded")
        shape = scale * np.eye(d)
    if scale <= 1e-12 * (1.0 + float(np.linalg.norm(center))):
        # region collapsed to (at most) a single point
        return np.tile(center, (n_points, 1))
    maps = all_affine_maps(dataset, config)
    accepted: list[np.ndarray] = []
    count = tried = 0
    while count < n_points:
        cand = center + _unit_ball(rng, batch, d) @ shape.T
        keep = cand[indicator_batch(dataset, config, cand, maps)]
        # the batch route and the direct indicator may disagree on the boundary
        keep = [x for x in keep if sps_indicator(dataset, config, x)]
        accepted.extend(keep[: n_points - count])
        count = len(accepted)
        tried += batch
        if tried >= 10**6 and count / tried < MIN_ACCEPTANCE:
            raise GeometryError(
                f"acceptance rate {count / tried:.2g} below {MIN_ACCEPTANCE:g}; try a larger sample size"
            )
    return np.array(accepted)


# -- CSV -------------------------------------------------------------------------


def save_points_csv(points, path, report: DiameterReport | None = None) -> None:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if report is not None:
            for key, val in report.as_dict().items():
                fh.write(f"# {key}: {val}\n")
        fh.write(",".join(f"x_{j + 1}" for j in range(pts.shape[1])) + "\n")
        for row in pts:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_points_csv(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        rows = [line for line in fh if line.strip() and not line.startswith("#")]
    return np.array([[float(v) for v in line.split(",")] for line in rows[1:]], ndmin=2)
