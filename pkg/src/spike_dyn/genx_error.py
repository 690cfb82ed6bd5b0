"""High-dimensional generalization error of ridge(less) regression on spiked data.

The effective regularization ``kappa(lambda)`` solves

    1 = lambda / kappa + gamma * sigma2 / (kappa + sigma2)

(the spike's spectral weight vanishes as ``d -> inf``), and the ridge risk is
``kappa' kappa^2 sum_i l_i (beta^T u_i)^2 / (kappa + l_i)^2`` over the two
eigen-directions the target touches.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DomainError
from .spiked_data import Dataset, SpikedModel, make_model, sample

PINV_RCOND = 1e-12


@dataclass(frozen=True)
class RiskModel:
    gamma: float
    sigma2: float
    rho: float
    A: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError("gamma must be positive")
        if not self.sigma2 > 0:
            raise DomainError("sigma2 must be positive")
        if not self.rho >= 0:
            raise DomainError("rho must be non-negative")
        if not 0.0 <= self.A <= 1.0:
            raise DomainError("A must lie in [0, 1]")

    @property
    def spectrum(self) -> "SpectrumSummary":
        return SpectrumSummary(self.sigma2 * (1.0 + self.rho), self.sigma2)

    @property
    def signal_variance(self) -> float:
        return self.sigma2 * (1.0 + self.rho * self.A**2)


@dataclass(frozen=True)
class SpectrumSummary:
    spike_eigenvalue: float
    bulk_eigenvalue: float
    bulk_multiplicity_fraction: float = 1.0

    def __post_init__(self):
        if not self.spike_eigenvalue >= self.bulk_eigenvalue > 0:
            raise DomainError("need spike >= bulk > 0")


def kappa_residual(kappa, lam, m: RiskModel) -> float:
    return 1.0 - lam / kappa - m.gamma * m.sigma2 / (kappa + m.sigma2)


def solve_kappa(lam, m: RiskModel) -> float:
    """Unique positive root of the self-consistent equation.

    Bisection on ``(max(lam, 1e-300), lam + gamma sigma2 + sigma2)`` followed
    by Newton polishing.  The right-hand side is strictly decreasing in
    ``kappa`` so the root is unique.
    """
    if lam < 0:
        raise DomainError("lambda must be non-negative")
    if lam == 0:
        if m.gamma <= 1:
            raise DomainError("ridgeless limit has no positive solution for gamma <= 1")
        return m.sigma2 * (m.gamma - 1.0)
    lo = max(lam, 1e-300)
    hi = lam + m.gamma * m.sigma2 + m.sigma2
    f = lambda k: kappa_residual(k, lam, m)  # noqa: E731
    # f increases with kappa: f(lo) <= 0 <= f(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-10 * hi:
            break
    k = 0.5 * (lo + hi)
    for _ in range(20):
        fk = f(k)
        dfk = lam / k**2 + m.gamma * m.sigma2 / (k + m.sigma2) ** 2
        step = fk / dfk
        k_new = k - step
        if not lo <= k_new <= hi:
            break
        k = k_new
        if abs(step) <= 1e-16 * k:
            break
    return k


def kappa_derivative(lam, m: RiskModel, kappa=None) -> float:
    """``d kappa / d lambda`` by implicit differentiation of the kappa equation."""
    if kappa is None:
        kappa = solve_kappa(lam, m)
    return (1.0 / kappa) / (lam / kappa**2 + m.gamma * m.sigma2 / (kappa + m.sigma2) ** 2)


def kappa_ridgeless_limit(m: RiskModel) -> tuple[float, float]:
    if m.gamma <= 1:
        raise DomainError("ridgeless limit requires gamma > 1")
    return m.sigma2 * (m.gamma - 1.0), m.gamma / (m.gamma - 1.0)


def _risk_from_kappa(kappa, dkappa, m: RiskModel) -> float:
    spike = m.sigma2 * (1.0 + m.rho)
    bracket = spike / (kappa + spike) ** 2 * m.A**2 + m.sigma2 / (kappa + m.sigma2) ** 2 * (
        1.0 - m.A**2
    )
    return dkappa * kappa**2 * bracket


def ridge_risk(lam, m: RiskModel) -> float:
    if not lam > 0:
        raise DomainError("ridge risk needs lambda > 0")
    k = solve_kappa(lam, m)
    return _risk_from_kappa(k, kappa_derivative(lam, m, k), m)


def ridgeless_risk(m: RiskModel) -> float:
    """Closed-form ``lambda -> 0+`` limit of :func:`ridge_risk` (requires ``gamma > 1``)."""
    if m.gamma <= 1:
        raise DomainError("ridgeless risk requires gamma > 1")
    g, rho = m.gamma, m.rho
    spike_factor = g * g * (1.0 + rho) / (g + rho) ** 2
    return m.sigma2 * (1.0 - 1.0 / g) * (1.0 - m.A**2 * (1.0 - spike_factor))


def normalized_risk(m: RiskModel) -> float:
    return ridgeless_risk(m) / m.signal_variance


def min_norm_estimator(data: Dataset) -> np.ndarray:
    """Minimum-norm least-squares solution ``X^+ y`` via SVD.

    Singular values below ``1e-12`` times the largest are discarded.
    """
    return np.linalg.pinv(data.X, rcond=PINV_RCOND) @ data.y


def ridge_estimator(data: Dataset, lam) -> np.ndarray:
    """``(X^T X + lam n I)^{-1} X^T y``, solved in the dual when ``d > n``."""
    if not lam > 0:
        raise DomainError("ridge estimator needs lambda > 0")
    X, y, n = data.X, data.y, data.n
    if data.d > n:
        return X.T @ np.linalg.solve(X @ X.T + lam * n * np.eye(n), y)
    return np.linalg.solve(X.T @ X + lam * n * np.eye(data.d), X.T @ y)


def population_risk_of(beta_hat, model: SpikedModel) -> float:
    """Exact excess risk ``(beta_hat - beta)^T Sigma (beta_hat - beta)``."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    if beta_hat.shape != (model.d,):
        raise DomainError("estimate dimension does not match the model")
    delta = beta_hat - model.beta
    return float(model.sigma2 * (delta @ delta + model.rho * (model.mu @ delta) ** 2))


@dataclass(frozen=True)
class RiskTrials:
    gamma: float
    d: int
    n: int
    risks: np.ndarray
    normalized: np.ndarray

    @property
    def n_trials(self) -> int:
        return self.risks.size

    @property
    def mean(self) -> float:
        return float(self.normalized.mean())

    @property
    def std(self) -> float:
        return float(self.normalized.std(ddof=1)) if self.n_trials > 1 else 0.0

    @property
    def stderr(self) -> float:
        return self.std / math.sqrt(self.n_trials)


def empirical_min_norm_risk(d, gamma, sigma2, rho, A, trials=10, seed_base=0, threads=1) -> RiskTrials:
    """Monte-Carlo risk of the min-norm interpolator with ``n = round(d / gamma)``.

    Trial ``i`` samples its data with seed ``seed_base + i``; results do not
    depend on ``threads``.
    """
    n = int(round(d / gamma))
    if n < 1:
        raise DegenerateInputError("gamma too large for this d: no samples")
    model = make_model(d, sigma2, rho, A)

    def one(i):
        data = sample(model, n, seed_base + i)
        return population_risk_of(min_norm_estimator(data), model)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            risks = np.array(list(pool.map(one, range(trials))))
    else:
        risks = np.array([one(i) for i in range(trials)])
    return RiskTrials(gamma, d, n, risks, risks / model.signal_variance)
