"""Synthetic regression data and the excitation constants computed from it."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._rng import make_rng
from .linalg import RANK_RTOL, thin_qr


class DataModelError(ValueError):
    pass


class SingularPrefixError(DataModelError):
    def __init__(self, trajectory: int, t: int):
        self.trajectory = trajectory
        self.t = t
        super().__init__(f"Gram matrix of trajectory {trajectory} is singular at t={t}")


@dataclass(frozen=True)
class RegressionDataset:
    """Stacked regressors ``Phi`` (row t is phi_t) and outputs ``y``.

    In synthetic mode ``theta_star`` and the noise realization ``w`` are
    kept as well, with ``y = Phi @ theta_star + w``.
    """

    Phi: np.ndarray
    y: np.ndarray
    theta_star: np.ndarray | None = None
    w: np.ndarray | None = None

    def __post_init__(self):
        Phi = np.atleast_2d(np.asarray(self.Phi, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if Phi.shape[0] != y.shape[0]:
            raise DataModelError(f"Phi has {Phi.shape[0]} rows but y has {y.shape[0]} entries")
        if Phi.shape[0] < Phi.shape[1]:
            raise DataModelError(f"need n >= d, got n={Phi.shape[0]}, d={Phi.shape[1]}")
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "y", y)
        if self.theta_star is not None:
            object.__setattr__(self, "theta_star", np.asarray(self.theta_star, dtype=float).reshape(-1))
        if self.w is not None:
            object.__setattr__(self, "w", np.asarray(self.w, dtype=float).reshape(-1))

    @property
    def n(self) -> int:
        return self.Phi.shape[0]

    @property
    def d(self) -> int:
        return self.Phi.shape[1]

    @property
    def synthetic(self) -> bool:
        return self.theta_star is not None and self.w is not None

    def prefix(self, t: int) -> "RegressionDataset":
        """The first ``t`` samples."""
        return RegressionDataset(
            self.Phi[:t],
            self.y[:t],
            self.theta_star,
            None if self.w is None else self.w[:t],
        )


# -- distribution descriptors -------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def sample(self, rng, size):
        if self.low == self.high:
            return np.full(size, float(self.low))
        return rng.uniform(self.low, self.high, size)

    @property
    def symmetric(self) -> bool:
        return self.low == -self.high

    @property
    def variance_proxy(self) -> float:
        # a / sqrt(3) is the optimal proxy for Unif(-a, a)
        return self.high / math.sqrt(3.0)

    @property
    def variance(self) -> float:
        return (self.high - self.low) ** 2 / 12.0


@dataclass(frozen=True)
class Gaussian:
    sigma: float
    mean: float = 0.0

    def sample(self, rng, size):
        return self.mean + self.sigma * rng.standard_normal(size)

    @property
    def symmetric(self) -> bool:
        return self.mean == 0.0

    @property
    def variance_proxy(self) -> float:
        return float(self.sigma)

    @property
    def variance(self) -> float:
        return float(self.sigma) ** 2


@dataclass(frozen=True)
class SignSymmetric:
    """Custom noise ``s * |X|`` with ``s`` a Rademacher sign.

    ``magnitude`` draws ``size`` samples of ``X`` from a generator; the
    random sign makes the result symmetric about zero whatever ``X`` is.
    ``sigma`` is the caller's variance proxy for the result.
    """

    magnitude: Callable[[np.random.Generator, int], np.ndarray]
    sigma: float
    second_moment: float | None = None

    def sample(self, rng, size):
        mags = np.abs(np.asarray(self.magnitude(rng, size), dtype=float))
        return np.where(rng.integers(0, 2, size) == 1, mags, -mags)

    symmetric = True

    @property
    def variance_proxy(self) -> float:
        return float(self.sigma)

    @property
    def variance(self) -> float:
        if self.second_moment is None:
            return float(self.sigma) ** 2
        return float(self.second_moment)


@dataclass(frozen=True)
class GenerationSpec:
    n: int
    d: int
    theta_star: np.ndarray
    noise: Uniform | Gaussian | SignSymmetric = field(default_factory=lambda: Uniform(-1.0, 1.0))
    regressor: Uniform | Gaussian = field(default_factory=lambda: Uniform(1.0, 2.0))
    seed: int = 0

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=float).reshape(-1)
        object.__setattr__(self, "theta_star", theta)
        if self.d < 1 or self.n < self.d:
            raise DataModelError(f"need n >= d >= 1, got n={self.n}, d={self.d}")
        if theta.shape[0] != self.d:
            raise DataModelError(f"theta_star has length {theta.shape[0]}, expected d={self.d}")
        if not self.noise.symmetric:
            raise DataModelError(f"noise {self.noise!r} is not symmetric about zero")

    @property
    def sigma(self) -> float:
        return self.noise.variance_proxy

    @classmethod
    def from_dict(cls, cfg: dict) -> "GenerationSpec":
        """Build from the JSON config schema, e.g.

        ``{"n": 2000, "d": 2, "theta_star": [5, 5], "seed": 0,
        "noise": {"kind": "uniform", "low": -1, "high": 1},
        "regressor": {"kind": "uniform", "low": 1, "high": 2}}``
        """
        d = int(cfg.get("d", len(cfg["theta_star"])))
        return cls(
            n=int(cfg["n"]),
            d=d,
            theta_star=np.asarray(cfg["theta_star"], dtype=float),
            noise=_distribution_from_dict(cfg.get("noise", {"kind": "uniform", "low": -1, "high": 1})),
            regressor=_distribution_from_dict(cfg.get("regressor", {"kind": "uniform", "low": 1, "high": 2})),
            seed=int(cfg.get("seed", 0)),
        )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "theta_star": self.theta_star.tolist(),
            "noise": _distribution_to_dict(self.noise),
            "regressor": _distribution_to_dict(self.regressor),
            "seed": self.seed,
        }


def _distribution_from_dict(cfg: dict):
    kind = cfg.get("kind")
    if kind == "uniform":
        return Uniform(float(cfg["low"]), float(cfg["high"]))
    if kind == "gaussian":
        return Gaussian(float(cfg["sigma"]), float(cfg.get("mean", 0.0)))
    raise DataModelError(f"unknown distribution kind {kind!r}")


def _distribution_to_dict(dist) -> dict:
    if isinstance(dist, Uniform):
        return {"kind": "uniform", "low": dist.low, "high": dist.high}
    if isinstance(dist, Gaussian):
        return {"kind": "gaussian", "sigma": dist.sigma, "mean": dist.mean}
    raise DataModelError(f"{type(dist).__name__} has no config representation")


def load_generation_spec(path) -> GenerationSpec:
    with open(path, encoding="utf-8") as fh:
        return GenerationSpec.from_dict(json.load(fh))


def generate_dataset(spec: GenerationSpec, seed: int | None = None) -> RegressionDataset:
    """Draw ``Phi`` then ``w`` from one seeded stream and form ``y``."""
    rng = make_rng(spec.seed if seed is None else seed)
    Phi = spec.regressor.sample(rng, (spec.n, spec.d))
    w = spec.noise.sample(rng, spec.n)
    y = Phi @ spec.theta_star + w
    return RegressionDataset(Phi, y, spec.theta_star.copy(), w)


# -- CSV ----------------------------------------------------------------------


def save_csv(dataset: RegressionDataset, path) -> None:
    header = [f"phi_{j + 1}" for j in range(dataset.d)] + ["y"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row, yt in zip(dataset.Phi, dataset.y):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(yt))])


def load_csv(path) -> RegressionDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "y" or any(
            h != f"phi_{j + 1}" for j, h in enumerate(header[:-1])
        ):
            raise DataModelError(f"unexpected CSV header {header!r} in {Path(path).name}")
        rows = np.array([[float(v) for v in r] for r in reader if r], dtype=float)
    rows = rows.reshape(-1, len(header))
    return RegressionDataset(rows[:, :-1], rows[:, -1])


# -- Gram matrices and excitation constants ------------------------------------


def gram_matrices(Phi) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(R_n, Rbar_n) = (Phi^T Phi, Phi^T Phi / n)``."""
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    n = Phi.shape[0]
    if n < 1:
        raise DataModelError("need at least one regressor")
    R = Phi.T @ Phi
    R = 0.5 * (R + R.T)
    return R, R / n


def coherence(Phi) -> float:
    """(n/d) * max_i ||Q^T e_i||^2 with Q from the thin QR of ``Phi``."""
    Q, _ = thin_qr(Phi)
    n, d = Q.shape
    return n / d * float(np.max(np.einsum("ij,ij->i", Q, Q)))


@dataclass(frozen=True)
class AssumptionConstants:
    lambda0: float
    kappa: float
    rho: float
    sigma: float

    def __post_init__(self):
        if not (self.lambda0 > 0 and self.kappa > 0 and self.sigma > 0):
            raise DataModelError(f"constants must be positive: {self}")
        if not 0 < self.rho <= 1:
            raise DataModelError(f"rho must lie in (0, 1], got {self.rho}")


def prefix_profile(Phi, t0: int, rtol: float = RANK_RTOL) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scan the prefixes ``Phi[:t]`` for ``t0 <= t <= n``.

    Returns ``(ts, lam_min, max_leverage)`` where ``lam_min[k]`` is the
    smallest eigenvalue of the average Gram matrix at ``ts[k]`` and
    ``max_leverage[k] = max_{i<=t} phi_i^T R_t^{-1} phi_i``, the largest
    squared row norm of the orthonormal QR factor of the prefix. Raises
    ``SingularPrefixError`` (trajectory index -1) at the first singular
    prefix.
    """
    Phi = np.asarray(Phi, dtype=float)
    n, d = Phi.shape
    ts = np.arange(t0, n + 1)
    R = np.cumsum(np.einsum("ti,tj->tij", Phi, Phi), axis=0)[t0 - 1:]
    eig = np.linalg.eigvalsh(R)
    bad = eig[:, 0] <= rtol * eig[:, -1]
    if np.any(bad):
        raise SingularPrefixError(-1, int(ts[np.argmax(bad)]))
    Rinv = np.linalg.inv(R)
    lev = np.empty(ts.shape[0])
    for k, t in enumerate(ts):
        head = Phi[:t]
        lev[k] = np.max(np.einsum("ij,jk,ik->i", head, Rinv[k], head))
    return ts, eig[:, 0] / ts, lev


def estimate_constants(
    trajectories: Sequence[RegressionDataset], t0: int, rho: float, sigma: float
) -> AssumptionConstants:
    """Empirical lambda0 and kappa over all prefixes t0..n of all trajectories.

    ``lambda0`` is the smallest eigenvalue of the average Gram matrix seen
    anywhere in the window; ``kappa`` is the largest coherence divided by
    ``t ** (1 - rho)``, which makes ``mu(Phi_t) <= kappa * t**(1 - rho)``
    tight at the maximizer.
    """
    if not trajectories:
        raise DataModelError("need at least one trajectory")
    lam0 = math.inf
    kappa = 0.0
    for idx, ds in enumerate(trajectories):
        if t0 < ds.d:
            raise DataModelError(f"t0={t0} must be >= d={ds.d}")
        if ds.n < t0:
            raise DataModelError(f"trajectory {idx} has n={ds.n} < t0={t0}")
        try:
            ts, lam, lev = prefix_profile(ds.Phi, t0)
        except SingularPrefixError as exc:
            raise SingularPrefixError(idx, exc.t) from None
        lam0 = min(lam0, float(lam.min()))
        mu = ts / ds.d * lev
        kappa = max(kappa, float(np.max(mu / ts ** (1.0 - rho))))
    return AssumptionConstants(lam0, kappa, rho, sigma)


# -- complete excitation --------------------------------------------------------

EXHAUSTIVE_LIMIT = 10**6


def _subsets_singular(Phi, subsets: np.ndarray, tol: float) -> bool:
    blocks = Phi[subsets]  # (k, d, d)
    dets = np.abs(np.linalg.det(blocks))
    scale = np.prod(np.linalg.norm(blocks, axis=2), axis=1)
    return bool(np.any(dets <= tol * scale))


def check_completely_exciting(
    Phi,
    mode: str = "randomized",
    k: int = 10_000,
    seed: int = 0,
    tol: float = 1e-12,
    chunk: int = 50_000,
) -> bool:
    """Whether every set of d regressors spans R^d.

    A subset counts as singular when ``|det|`` falls below ``tol`` times the
    product of its row norms (Hadamard's bound). ``mode="exhaustive"`` tries
    all C(n, d) subsets; ``mode="randomized"`` tries ``k`` random subsets.
    """
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    n, d = Phi.shape
    if n < d:
        raise DataModelError(f"need n >= d, got n={n}, d={d}")
    if mode == "exhaustive":
        total = math.comb(n, d)
        if total > EXHAUSTIVE_LIMIT:
            raise DataModelError(
                f"C({n},{d}) = {total} subsets exceeds {EXHAUSTIVE_LIMIT}; use mode='randomized'"
            )
        combos = itertools.combinations(range(n), d)
        while True:
            block = np.array(list(itertools.islice(combos, chunk)), dtype=np.intp)
            if block.size == 0:
                return True
            if _subsets_singular(Phi, block.reshape(-1, d), tol):
                return False
    if mode == "randomized":
        rng = make_rng(seed)
        subsets = rng.integers(0, n, size=(k, d))
        # redraw rows with repeated indices; terminates since n >= d
        while True:
            srt = np.sort(subsets, axis=1)
            dup = np.any(srt[:, 1:] == srt[:, :-1], axis=1)
            if not dup.any():
                break
            subsets[dup] = rng.integers(0, n, size=(int(dup.sum()), d))
        for start in range(0, k, chunk):
            if _subsets_singular(Phi, subsets[start:start + chunk], tol):
                return False
        return True
    raise DataModelError(f"unknown mode {mode!r}")
