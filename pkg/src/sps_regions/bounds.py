"""Non-asymptotic diameter bounds for SPS regions and the shrinkage-rate fit.

``delta`` is always the user-facing failure probability; the general
bound evaluates ``f`` and ``g`` at ``delta / (m - q)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


class BoundError(ValueError):
    pass


class BelowValidityThreshold(BoundError):
    def __init__(self, n: int, min_n: int):
        self.n = n
        self.min_n = min_n
        super().__init__(f"bound needs n >= {min_n} (and n**rho > g), got n={n}")


@dataclass(frozen=True)
class BoundInputs:
    sigma: float
    lambda0: float
    kappa: float
    rho: float
    delta: float
    d: int
    n: int
    m: int = 2
    q: int = 1

    def __post_init__(self):
        if not (self.sigma > 0 and self.lambda0 > 0 and self.kappa > 0):
            raise BoundError("sigma, lambda0 and kappa must be positive")
        if not 0 < self.rho <= 1:
            raise BoundError(f"rho must lie in (0, 1], got {self.rho}")
        if not 0 < self.delta < 1:
            raise BoundError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0 < self.q < self.m:
            raise BoundError(f"need m > q > 0, got m={self.m}, q={self.q}")
        if self.d < 1 or self.n < self.d:
            raise BoundError(f"need n >= d >= 1, got n={self.n}, d={self.d}")

    @property
    def delta_split(self) -> float:
        return self.delta / (self.m - self.q)

    def with_n(self, n: int) -> "BoundInputs":
        return replace(self, n=int(n))


def f_delta(delta: float, sigma: float, d: int, n: int, lambda0: float) -> float:
    """Noise term of the bound.

    ``sigma * sqrt(8 d sqrt(ln(4/delta)) + d)`` when
    ``4 exp(-(n d lambda0)^2) <= delta <= 2``, else
    ``sigma * sqrt(8 ln(4/delta) + d)``.
    """
    if not 0 < delta <= 2:
        raise BoundError(f"delta must lie in (0, 2], got {delta}")
    log_term = math.log(4.0 / delta)
    if delta >= 4.0 * math.exp(-((n * d * lambda0) ** 2)):
        return sigma * math.sqrt(8.0 * d * math.sqrt(log_term) + d)
    return sigma * math.sqrt(8.0 * log_term + d)


def g_delta(delta: float, kappa: float, d: int) -> float:
    """Excitation term ``2 kappa d^2 ln(4 d / delta)``."""
    if not 0 < delta <= 4 * d:
        raise BoundError(f"delta must lie in (0, 4d], got {delta}")
    return math.log(4.0 * d / delta) * 2.0 * kappa * d * d


def min_valid_n(inputs: BoundInputs) -> int:
    g = g_delta(inputs.delta_split, inputs.kappa, inputs.d)
    if g <= 0:
        return 1
    return max(1, math.ceil(g ** (1.0 / inputs.rho)))


def _diameter_bound(inputs: BoundInputs, factor: float, delta: float) -> float:
    n, rho = inputs.n, inputs.rho
    g = g_delta(delta, inputs.kappa, inputs.d)
    gap = n**rho - g
    if n < min_valid_n(inputs) or gap <= 0:
        raise BelowValidityThreshold(n, min_valid_n(inputs))
    f = f_delta(delta, inputs.sigma, inputs.d, n, inputs.lambda0)
    return factor * f / math.sqrt(n ** (1.0 - rho) * inputs.lambda0 * gap)


def theorem2_bound(inputs: BoundInputs) -> float:
    """Diameter bound for general (m, q), holding with probability >= 1 - delta."""
    return _diameter_bound(inputs, 4.0, inputs.delta_split)


def lemma8_bound(inputs: BoundInputs) -> float:
    """The m = 2, q = 1 diameter bound, ``2 f(delta) / sqrt(n^(1-rho) lambda0 (n^rho - g(delta)))``."""
    if (inputs.m, inputs.q) != (2, 1):
        raise BoundError("the two-sum bound needs m=2, q=1")
    return _diameter_bound(inputs, 2.0, inputs.delta)


def bound_curve(inputs: BoundInputs, ns) -> list[tuple[int, float | None]]:
    """``(n, bound)`` pairs; ``None`` where n is below the validity threshold."""
    out = []
    for n in ns:
        try:
            out.append((int(n), theorem2_bound(inputs.with_n(n))))
        except BelowValidityThreshold:
            out.append((int(n), None))
    return out


def shrinkage_fit(ns, diameters) -> tuple[float, float]:
    """OLS fit ``log(diameter) = slope * log(n) + intercept``."""
    ns = np.asarray(ns, dtype=float)
    dia = np.asarray(diameters, dtype=float)
    if ns.shape != dia.shape or ns.size < 3:
        raise BoundError("need at least three (n, diameter) pairs")
    if np.any(ns <= 0) or np.any(dia <= 0) or not np.all(np.isfinite(dia)):
        raise BoundError("sample sizes and diameters must be positive and finite")
    X = np.column_stack([np.log(ns), np.ones_like(ns)])
    (slope, intercept), *_ = np.linalg.lstsq(X, np.log(dia), rcond=None)
    return float(slope), float(intercept)


# -- concentration inequalities used in the proof ---------------------------------


def quadratic_noise_tail(eps: float, n: int, lambda0: float, sigma: float, d: int) -> float:
    """Upper bound on ``P(|X - E X| / (n lambda0) >= eps)`` for ``X = w^T M w``."""
    if eps < 0:
        raise BoundError("eps must be nonnegative")
    if eps <= 8.0 * sigma**2 * d**2:
        return 2.0 * math.exp(-(eps**2) * n**2 * lambda0**2 / (64.0 * d**2 * sigma**4))
    return 2.0 * math.exp(-eps * n * lambda0 / (8.0 * sigma**2))


def perturbed_gram_tail(eps0: float, n: int, rho: float, kappa: float, d: int) -> float:
    """Upper bound on ``P(max_i |lambda_i(K)| >= eps0)`` for ``0 < eps0 <= 1``."""
    if not 0 < eps0 <= 1:
        raise BoundError("eps0 must lie in (0, 1]")
    return 2.0 * d * math.exp(-(n**rho) * eps0**2 / (2.0 * kappa * d**2))
