"""Sign-Perturbed Sums: initialization, perturbed sums, rank test, indicator.

Random stream contract (``seed`` -> config): a Philox generator keyed by
``seed`` (see ``_rng.make_rng``) first fills the ``(m-1, n)`` sign array
row-major via ``integers(0, 2)`` mapped to ``{-1, +1}``, then draws the
permutation by Fisher-Yates, ``for i = m-1 .. 1: swap(perm[i],
perm[integers(0, i+1)])`` starting from the identity. Storing the seed is
therefore enough to replay a configuration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._rng import make_rng
from .data import RegressionDataset, gram_matrices
from .linalg import NotPositiveDefiniteError, principal_sqrt_inverse


class SpsError(ValueError):
    pass


def _check_mq(m: int, q: int) -> None:
    if int(m) != m or int(q) != q or not 0 < q < m:
        raise SpsError(f"need integers m > q > 0, got m={m}, q={q}")


def coverage_probability(m: int, q: int) -> float:
    """Exact probability that the true parameter is in the region: 1 - q/m."""
    _check_mq(m, q)
    return float(Fraction(m - q, m))


@dataclass(frozen=True, eq=False)
class SpsConfig:
    m: int
    q: int
    signs: np.ndarray  # (m-1, n) of +-1
    perm: np.ndarray  # permutation of 0..m-1
    sqrt_inv_gram: np.ndarray  # Rbar_n^{-1/2}
    seed: int

    def __post_init__(self):
        _check_mq(self.m, self.q)
        signs = np.asarray(self.signs, dtype=np.int8)
        if signs.ndim != 2 or signs.shape[0] != self.m - 1:
            raise SpsError(f"signs must have shape (m-1, n) = ({self.m - 1}, n), got {signs.shape}")
        if not np.all(np.abs(signs) == 1):
            raise SpsError("signs must be +1 or -1")
        perm = np.asarray(self.perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(self.m)):
            raise SpsError(f"perm is not a permutation of 0..{self.m - 1}")
        signs.setflags(write=False)
        perm.setflags(write=False)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "sqrt_inv_gram", np.asarray(self.sqrt_inv_gram, dtype=float))

    @property
    def n(self) -> int:
        return self.signs.shape[1]

    @property
    def p(self) -> float:
        return coverage_probability(self.m, self.q)

    @property
    def p_exact(self) -> Fraction:
        return Fraction(self.m - self.q, self.m)

    def gram_residual(self, Phi) -> float:
        """Relative error of ``sqrt_inv_gram**2`` against ``inv(Rbar_n)``."""
        _, Rbar = gram_matrices(Phi)
        target = np.linalg.inv(Rbar)
        W = self.sqrt_inv_gram
        return float(np.linalg.norm(W @ W - target) / np.linalg.norm(target))

    def to_dict(self, expand: bool = False) -> dict:
        out = {"m": self.m, "q": self.q, "seed": self.seed, "n": self.n}
        if expand:
            out["signs"] = self.signs.tolist()
            out["perm"] = self.perm.tolist()
        return out

    def save(self, path, expand: bool = False) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(expand), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_dict(cls, cfg: dict, Phi) -> "SpsConfig":
        """Rebuild over ``Phi``; the seed alone reproduces signs and perm."""
        if "signs" not in cfg:
            config = sps_initialize(cfg["m"], cfg["q"], Phi, cfg["seed"])
            if "n" in cfg and cfg["n"] != config.n:
                raise SpsError(f"config was built for n={cfg['n']}, Phi has n={config.n}")
            return config
        _, Rbar = gram_matrices(Phi)
        return cls(
            m=int(cfg["m"]),
            q=int(cfg["q"]),
            signs=np.asarray(cfg["signs"]),
            perm=np.asarray(cfg["perm"]),
            sqrt_inv_gram=principal_sqrt_inverse(Rbar),
            seed=int(cfg["seed"]),
        )

    @classmethod
    def load(cls, path, Phi) -> "SpsConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), Phi)


def fisher_yates(rng: np.random.Generator, m: int) -> np.ndarray:
    perm = np.arange(m)
    for i in range(m - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def sps_initialize(m: int, q: int, Phi, seed: int) -> SpsConfig:
    """Draw the random signs and permutation and invert sqrt(Rbar_n)."""
    _check_mq(m, q)
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    _, Rbar = gram_matrices(Phi)
    try:
        W = principal_sqrt_inverse(Rbar)
    except NotPositiveDefiniteError as exc:
        raise SpsError(f"average Gram matrix is singular: {exc}") from exc
    rng = make_rng(seed)
    signs = 2 * rng.integers(0, 2, size=(m - 1, Phi.shape[0]), dtype=np.int8) - 1
    perm = fisher_yates(rng, m)
    return SpsConfig(m=int(m), q=int(q), signs=signs, perm=perm, sqrt_inv_gram=W, seed=int(seed))


def least_squares_estimate(dataset: RegressionDataset) -> np.ndarray:
    R, _ = gram_matrices(dataset.Phi)
    try:
        return np.linalg.solve(R, dataset.Phi.T @ dataset.y)
    except np.linalg.LinAlgError as exc:
        raise SpsError("Gram matrix R_n is singular") from exc


def compute_sums(dataset: RegressionDataset, config: SpsConfig, theta) -> np.ndarray:
    """Rows are S_0(theta), S_1(theta), ..., S_{m-1}(theta); shape (m, d)."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if config.n != dataset.n or theta.shape[0] != dataset.d:
        raise SpsError(
            f"dimension mismatch: config n={config.n}, data (n, d)={dataset.Phi.shape}, theta {theta.shape}"
        )
    eps = dataset.y - dataset.Phi @ theta
    terms = dataset.Phi * eps[:, None]
    raw = np.vstack([terms.sum(axis=0), config.signs @ terms]) / dataset.n
    return raw @ config.sqrt_inv_gram.T


@dataclass(frozen=True)
class RankResult:
    rank: int
    norms_sq: np.ndarray
    tie_broken: bool


def rank_with_tiebreak(norms_sq, perm) -> RankResult:
    """Rank of ``norms_sq[0]`` among all entries; ties go to the larger ``perm``."""
    z = np.asarray(norms_sq, dtype=float)
    perm = np.asarray(perm)
    if z.shape[0] < 2 or perm.shape[0] != z.shape[0]:
        raise SpsError("need at least two norms and a permutation of matching length")
    ties = z[1:] == z[0]
    beats = (z[0] > z[1:]) | (ties & (perm[0] > perm[1:]))
    return RankResult(int(1 + np.count_nonzero(beats)), z, bool(ties.any()))


def sps_rank(dataset: RegressionDataset, config: SpsConfig, theta) -> RankResult:
    S = compute_sums(dataset, config, theta)
    return rank_with_tiebreak(np.einsum("ij,ij->i", S, S), config.perm)


def sps_indicator(dataset: RegressionDataset, config: SpsConfig, theta) -> bool:
    """True iff ``theta`` lies in the SPS confidence region of level 1 - q/m."""
    return sps_rank(dataset, config, theta).rank <= config.m - config.q
