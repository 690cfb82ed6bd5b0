"""Data-adapted orthonormal basis and its scalar coefficients.

``v1`` points along the input-output correlation, ``v2`` completes the plane
spanned by the correlation and the target, and the remaining columns span the
orthogonal complement.  The coefficients ``lambda1``, ``lambda2`` and ``nu``
are the entries of the covariance restricted to ``(v1, v2)``.

Every quantity is available two ways: from explicit matrices
(:func:`build_basis`) and from closed forms in ``(sigma2, rho, A)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateInputError
from .spiked_data import (
    Dataset,
    SpikedModel,
    empirical_moments,
    input_output_correlation,
    population_covariance,
)

PARALLEL_TOL = 1e-10


@dataclass(frozen=True)
class AdaptedBasis:
    V: np.ndarray
    sigma_xy_norm: float
    lambda1: float
    lambda2: float
    nu: float
    overlap1: Optional[float]
    overlap2: Optional[float]
    parallel: bool

    @property
    def v1(self) -> np.ndarray:
        return self.V[:, 0]

    @property
    def v2(self) -> np.ndarray:
        return self.V[:, 1]

    def to_json(self) -> str:
        d = asdict(self)
        d["V"] = self.V.tolist()
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "AdaptedBasis":
        d = json.loads(text)
        d["V"] = np.asarray(d["V"], dtype=float)
        return cls(**d)


def _first_completion_vector(v1):
    # first standard basis vector that keeps a healthy residual after
    # projecting out v1; one always exists since min_k v1_k^2 <= 1/d
    for k in range(v1.size):
        e = np.zeros(v1.size)
        e[k] = 1.0
        r = e - v1[k] * v1
        if np.linalg.norm(r) >= 0.5:
            r -= (v1 @ r) * v1
            return r / np.linalg.norm(r)
    raise AssertionError("unreachable: no completion vector found")


def build_basis(Sigma, Sigma_xy, beta, mu=None) -> AdaptedBasis:
    """Construct ``V`` and evaluate the coefficients as quadratic forms of ``Sigma``.

    ``mu`` is optional; when given, ``overlap1``/``overlap2`` hold ``mu^T v1``
    and ``mu^T v2``, otherwise they are ``None``.  In the parallel case
    (``beta`` along ``Sigma_xy``) ``v2`` is ``-mu`` projected off ``v1`` when
    that is non-zero, else the first Gram-Schmidt completion vector.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    Sigma_xy = np.asarray(Sigma_xy, dtype=float)
    beta = np.asarray(beta, dtype=float)
    norm_xy = float(np.linalg.norm(Sigma_xy))
    if not norm_xy > 1e-300:
        raise DegenerateInputError("input-output correlation vanishes")
    v1 = Sigma_xy / norm_xy

    b_perp = beta - (v1 @ beta) * v1
    parallel = bool(np.linalg.norm(b_perp) < PARALLEL_TOL * np.linalg.norm(beta))
    mu_perp = None
    if mu is not None:
        mu = np.asarray(mu, dtype=float)
        mu_perp = mu - (v1 @ mu) * v1
    if parallel and mu_perp is not None and np.linalg.norm(mu_perp) >= PARALLEL_TOL * np.linalg.norm(mu):
        # continuous limit of the generic construction: v2 -> -mu_perp as A -> 0+,
        # which keeps the closed forms valid at A = 0
        mu_perp -= (v1 @ mu_perp) * v1
        v2 = -mu_perp / np.linalg.norm(mu_perp)
    elif parallel:
        v2 = _first_completion_vector(v1)
    else:
        b_perp -= (v1 @ b_perp) * v1
        v2 = b_perp / np.linalg.norm(b_perp)
        if v1 @ Sigma @ v2 > 0:
            v2 = -v2

    # Householder QR of [v1, v2]; trailing columns span the complement
    Q, _ = np.linalg.qr(np.column_stack([v1, v2]), mode="complete")
    V = np.array(Q)
    V[:, 0] = v1
    V[:, 1] = v2

    lam1 = float(v1 @ Sigma @ v1)
    lam2 = float(v2 @ Sigma @ v2)
    nu = 0.0 if parallel else float(-(v1 @ Sigma @ v2))
    if mu is not None:
        ov1, ov2 = float(mu @ v1), float(mu @ v2)
    else:
        ov1 = ov2 = None
    V.setflags(write=False)
    return AdaptedBasis(V, norm_xy, lam1, lam2, nu, ov1, ov2, parallel)


def basis_for_model(model: SpikedModel) -> AdaptedBasis:
    """Basis built from the population moments of ``model``."""
    return build_basis(
        population_covariance(model), input_output_correlation(model), model.beta, model.mu
    )


def basis_for_dataset(data: Dataset, beta, mu=None) -> AdaptedBasis:
    """Basis built from the empirical moments the network is actually trained on."""
    Sigma_hat, Sigma_xy_hat = empirical_moments(data)
    return build_basis(Sigma_hat, Sigma_xy_hat, beta, mu)


def _denominator(rho, A):
    return 1.0 + ((1.0 + rho) ** 2 - 1.0) * A * A


def correlation_norm(sigma2, rho, A) -> float:
    return sigma2 * math.sqrt(_denominator(rho, A))


def spike_basis_overlaps(rho, A) -> tuple[float, float]:
    """Closed forms for ``(mu^T v1, mu^T v2)``."""
    root = math.sqrt(_denominator(rho, A))
    # 1 - ov1^2 == (1 - A^2) / D, written without cancellation
    return (1.0 + rho) * A / root, -math.sqrt(1.0 - A * A) / root


def effective_coefficients(sigma2, rho, A) -> tuple[float, float, float]:
    """Closed forms for ``(lambda1, lambda2, nu)``."""
    D = _denominator(rho, A)
    lam1 = sigma2 * (1.0 + rho * (1.0 + rho) ** 2 * A * A / D)
    lam2 = sigma2 * (1.0 + rho * (1.0 - A * A) / D)
    nu = sigma2 * rho * (1.0 + rho) * A * math.sqrt(1.0 - A * A) / D
    return lam1, lam2, nu
