"""Spiked covariance generative model: population moments and Gaussian samples.

Inputs are drawn as ``x ~ N(0, sigma2 * (I + rho * mu mu^T))`` with noiseless
labels ``y = beta^T x``.  Both ``mu`` and ``beta`` are unit vectors and their
inner product ``A = mu^T beta`` is kept non-negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class SpikedModel:
    d: int
    sigma2: float
    rho: float
    mu: np.ndarray
    beta: np.ndarray
    alignment: float

    def __post_init__(self):
        if self.d < 2:
            raise DomainError(f"d must be >= 2, got {self.d}")
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.rho >= 0:
            raise DomainError(f"rho must be non-negative, got {self.rho}")
        for name in ("mu", "beta"):
            v = getattr(self, name)
            if v.shape != (self.d,):
                raise DomainError(f"{name} must have shape ({self.d},)")
            if abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise DomainError(f"{name} must be a unit vector")
            v.setflags(write=False)
        if not 0.0 <= self.alignment <= 1.0:
            raise DomainError(f"alignment must lie in [0, 1], got {self.alignment}")

    @property
    def A(self) -> float:
        return self.alignment

    @property
    def spike_eigenvalue(self) -> float:
        return self.sigma2 * (1.0 + self.rho)

    @property
    def signal_variance(self) -> float:
        """E[y^2] = beta^T Sigma beta."""
        return self.sigma2 * (1.0 + self.rho * self.alignment**2)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise DomainError("X must be (n, d) and y must be (n,)")
        self.X.setflags(write=False)
        self.y.setflags(write=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def random_rotation(d: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix from the QR of a seeded Gaussian matrix.

    The sign of each column is fixed so that ``R`` has a positive diagonal.
    """
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def make_model(d, sigma2, rho, A, rotate_seed=None) -> SpikedModel:
    """Build a model with ``mu = e1`` and ``beta = A e1 + sqrt(1 - A^2) e2``.

    If ``rotate_seed`` is given, both vectors are rotated by the same seeded
    orthogonal matrix, so ``mu^T beta`` is unchanged.
    """
    if not 0.0 <= A <= 1.0:
        raise DomainError(f"A must lie in [0, 1], got {A}")
    if d < 2:
        raise DomainError(f"d must be >= 2, got {d}")
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    if not rho >= 0:
        raise DomainError(f"rho must be non-negative, got {rho}")
    mu = np.zeros(d)
    mu[0] = 1.0
    beta = np.zeros(d)
    beta[0] = A
    beta[1] = math.sqrt(1.0 - A * A)
    if rotate_seed is not None:
        Q = random_rotation(d, rotate_seed)
        mu = Q @ mu
        beta = Q @ beta
        # rotation keeps unit norm only up to rounding
        mu /= np.linalg.norm(mu)
        beta /= np.linalg.norm(beta)
    return SpikedModel(int(d), float(sigma2), float(rho), mu, beta, float(A))


def population_covariance(model: SpikedModel) -> np.ndarray:
    mu = model.mu
    return model.sigma2 * (np.eye(model.d) + model.rho * np.outer(mu, mu))


def input_output_correlation(model: SpikedModel) -> np.ndarray:
    """Sigma beta = sigma2 * (beta + rho * A * mu)."""
    return model.sigma2 * (model.beta + model.rho * (model.mu @ model.beta) * model.mu)


def covariance_sqrt_apply(model: SpikedModel, Z: np.ndarray) -> np.ndarray:
    """Apply sigma * (I + (sqrt(1 + rho) - 1) mu mu^T) to the rows of ``Z``."""
    mu = model.mu
    c = math.sqrt(1.0 + model.rho) - 1.0
    return math.sqrt(model.sigma2) * (Z + c * np.outer(Z @ mu, mu))


def sample(model: SpikedModel, n: int, seed: int) -> Dataset:
    """Draw ``n`` samples.

    Draw order: a single ``(n, d)`` block of standard normals from
    ``numpy.random.default_rng(seed)``, row-major.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, model.d))
    X = covariance_sqrt_apply(model, Z)
    return Dataset(X, X @ model.beta)


def empirical_moments(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    X, y = data.X, data.y
    n = data.n
    Sigma_hat = X.T @ X / n
    Sigma_hat = 0.5 * (Sigma_hat + Sigma_hat.T)
    return Sigma_hat, X.T @ y / n


def save_dataset_csv(data: Dataset, path) -> None:
    header = ",".join([f"x_{i + 1}" for i in range(data.d)] + ["y"])
    table = np.column_stack([data.X, data.y])
    np.savetxt(Path(path), table, delimiter=",", header=header, comments="", fmt="%.17g")


def load_dataset_csv(path) -> Dataset:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    if header[-1] != "y" or header[:-1] != [f"x_{i + 1}" for i in range(len(header) - 1)]:
        raise ValueError(f"{path}: unexpected header {header}")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Dataset(np.ascontiguousarray(table[:, :-1]), np.ascontiguousarray(table[:, -1]))
