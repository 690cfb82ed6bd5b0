"""Two-variable reduced dynamics for the magnitudes ``(w1, w2)``.

With ``r^2 = w1^2 + w2^2`` the system is::

    tau dw1/dt = S r - lambda1 w1 r^2 + nu w2 r^2
    tau dw2/dt = nu w1 r^2 - lambda2 w2 r^2

where ``S`` is the norm of the input-output correlation.  Time is measured in
the same dimensionless units as :mod:`spike_dyn.linear_net` (``tau = 1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adapted_basis import AdaptedBasis
from .errors import DegenerateInputError, DivergenceError, DomainError


@dataclass(frozen=True)
class ReducedParams:
    sigma_xy_norm: float
    lambda1: float
    lambda2: float
    nu: float
    tau: float = 1.0

    def __post_init__(self):
        if not (self.sigma_xy_norm > 0 and self.lambda1 > 0 and self.lambda2 > 0 and self.tau > 0):
            raise DomainError("sigma_xy_norm, lambda1, lambda2 and tau must be positive")
        if self.nu < 0:
            raise DomainError(f"nu must be non-negative, got {self.nu}")
        if self.lambda1 * self.lambda2 < self.nu**2 * (1.0 - 1e-12):
            raise DomainError("restricted covariance is not positive semidefinite")

    @classmethod
    def from_basis(cls, basis: AdaptedBasis, tau=1.0) -> "ReducedParams":
        return cls(basis.sigma_xy_norm, basis.lambda1, basis.lambda2, basis.nu, tau)

    @property
    def saturation(self) -> float:
        """Early-phase plateau value sqrt(S / lambda1)."""
        return math.sqrt(self.sigma_xy_norm / self.lambda1)

    @property
    def lambda_max(self) -> float:
        return max(self.lambda1, self.lambda2, self.sigma_xy_norm)

    def default_dt(self) -> float:
        return 1e-3 * self.tau / self.lambda_max


@dataclass(frozen=True)
class ReducedState:
    w1: float
    w2: float

    def __iter__(self):
        return iter((self.w1, self.w2))


@dataclass(frozen=True)
class ReducedTrajectory:
    times: np.ndarray
    w: np.ndarray = field(repr=False)

    @property
    def w1(self) -> np.ndarray:
        return self.w[:, 0]

    @property
    def w2(self) -> np.ndarray:
        return self.w[:, 1]

    @property
    def final(self) -> ReducedState:
        return ReducedState(float(self.w[-1, 0]), float(self.w[-1, 1]))


def reduced_rhs(state, p: ReducedParams) -> tuple[float, float]:
    w1, w2 = state
    r2 = w1 * w1 + w2 * w2
    r = math.sqrt(r2)
    dw1 = p.sigma_xy_norm * r - p.lambda1 * w1 * r2 + p.nu * w2 * r2
    dw2 = p.nu * w1 * r2 - p.lambda2 * w2 * r2
    return dw1 / p.tau, dw2 / p.tau


def reduced_rhs_grid(W1, W2, p: ReducedParams):
    """Vectorised :func:`reduced_rhs` over arrays of states."""
    r2 = W1 * W1 + W2 * W2
    dw1 = p.sigma_xy_norm * np.sqrt(r2) - p.lambda1 * W1 * r2 + p.nu * W2 * r2
    dw2 = p.nu * W1 * r2 - p.lambda2 * W2 * r2
    return dw1 / p.tau, dw2 / p.tau


def reduced_jacobian(state, p: ReducedParams) -> np.ndarray:
    w1, w2 = state
    r2 = w1 * w1 + w2 * w2
    r = math.sqrt(r2)
    if r == 0.0:
        raise DomainError("Jacobian is undefined at the origin")
    S, l1, l2, nu = p.sigma_xy_norm, p.lambda1, p.lambda2, p.nu
    g1 = l1 * w1 - nu * w2
    g2 = nu * w1 - l2 * w2
    J = np.array(
        [
            [S * w1 / r - 2 * w1 * g1 - r2 * l1, S * w2 / r - 2 * w2 * g1 + r2 * nu],
            [2 * w1 * g2 + r2 * nu, 2 * w2 * g2 - r2 * l2],
        ]
    )
    return J / p.tau


def integrate_reduced(p: ReducedParams, init, t_end, dt=None, record_every=1) -> ReducedTrajectory:
    """Fixed-step classical RK4 from ``init`` to ``t_end``.

    The step is ``t_end / N`` with ``N = ceil(t_end / dt)``; when ``dt``
    divides ``t_end``, halving ``dt`` doubles ``N`` exactly.
    """
    if dt is None:
        dt = p.default_dt()
    if not (dt > 0 and t_end > 0):
        raise DomainError("dt and t_end must be positive")
    n_steps = max(1, math.ceil(t_end / dt - 1e-9))
    h = t_end / n_steps
    S, l1, l2, nu = p.sigma_xy_norm, p.lambda1, p.lambda2, p.nu
    inv_tau = 1.0 / p.tau
    sqrt = math.sqrt

    def f(a, b):
        r2 = a * a + b * b
        return (
            (S * sqrt(r2) - l1 * a * r2 + nu * b * r2) * inv_tau,
            (nu * a - l2 * b) * r2 * inv_tau,
        )

    w1, w2 = (float(v) for v in init)
    ts = [0.0]
    out1 = [w1]
    out2 = [w2]
    h2 = 0.5 * h
    h6 = h / 6.0
    for k in range(1, n_steps + 1):
        a1, b1 = f(w1, w2)
        a2, b2 = f(w1 + h2 * a1, w2 + h2 * b1)
        a3, b3 = f(w1 + h2 * a2, w2 + h2 * b2)
        a4, b4 = f(w1 + h * a3, w2 + h * b3)
        w1 += h6 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        w2 += h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        if k % record_every == 0 or k == n_steps:
            if not (abs(w1) < 1e6 and abs(w2) < 1e6):
                raise DivergenceError(f"reduced state left the bounded region at t={k * h:g}")
            ts.append(k * h)
            out1.append(w1)
            out2.append(w2)
    return ReducedTrajectory(np.array(ts), np.column_stack([out1, out2]))


def early_phase_magnitude(t, u0, p: ReducedParams):
    """Sigmoidal solution of ``tau du/dt = S u - lambda1 u^3`` from ``u(0) = u0``."""
    if not u0 > 0:
        raise DomainError("u0 must be positive")
    K = p.sigma_xy_norm / p.lambda1
    decay = np.exp(-2.0 * p.sigma_xy_norm * np.asarray(t, dtype=float) / p.tau)
    return np.sqrt(K / (1.0 + (K / u0**2 - 1.0) * decay))


def early_timescale(p: ReducedParams, s) -> float:
    if not s > 0:
        raise DomainError("initialization scale s must be positive")
    ratio = p.sigma_xy_norm / (p.lambda1 * s * s)
    if not ratio > 1.0:
        raise DomainError("early timescale requires 0 < lambda1 s^2 < S")
    return p.tau / (2.0 * p.sigma_xy_norm) * math.log(ratio)


def later_phase_bound(p: ReducedParams, delta=3.0) -> float:
    """Upper bound on the time ``w2`` needs to reach ``(1 - e^-delta) w2*``."""
    if p.nu == 0.0:
        raise DegenerateInputError("nu = 0: there is no later phase")
    if delta < 0:
        raise DomainError("delta must be non-negative")
    k = p.nu / p.lambda2
    x = k * (1.0 - math.exp(-delta))
    return p.tau / p.lambda2 * (k * math.atan(x) + 0.5 * math.log1p(x * x) + delta)


def fixed_point(p: ReducedParams) -> ReducedState:
    if p.nu == 0.0:
        return ReducedState(p.saturation, 0.0)
    k = p.nu / p.lambda2
    w1 = 1.0 / math.sqrt(1.0 + k * k)
    return ReducedState(w1, k * w1)


def later_phase_assumption_holds(traj: ReducedTrajectory, p: ReducedParams, t1, rtol=1e-6) -> bool:
    """Whether ``w1 >= w1*`` and ``w2 <= w2*`` for every recorded ``t >= t1``."""
    fp = fixed_point(p)
    sel = traj.times >= t1
    ok1 = np.all(traj.w1[sel] >= fp.w1 * (1.0 - rtol))
    ok2 = np.all(traj.w2[sel] <= fp.w2 * (1.0 + rtol))
    return bool(ok1 and ok2)


@dataclass(frozen=True)
class PhaseField:
    W1: np.ndarray
    W2: np.ndarray
    dW1: np.ndarray
    dW2: np.ndarray
    nullclines: dict  # "dw1" / "dw2" -> list of (k, 2) polylines
    degenerate: bool


def phase_plane_field(p: ReducedParams, w1_range=(-0.2, 1.2), w2_range=(-0.2, 1.2), resolution=101):
    """Evaluate the vector field on a grid and trace both zero contours."""
    import contourpy

    if resolution < 2 or not (w1_range[1] > w1_range[0] and w2_range[1] > w2_range[0]):
        raise DomainError("grid must be non-degenerate")
    g1 = np.linspace(*w1_range, resolution)
    g2 = np.linspace(*w2_range, resolution)
    W1, W2 = np.meshgrid(g1, g2)
    dW1, dW2 = reduced_rhs_grid(W1, W2, p)
    nullclines = {}
    for name, Z in (("dw1", dW1), ("dw2", dW2)):
        gen = contourpy.contour_generator(W1, W2, Z, line_type="Separate")
        nullclines[name] = [np.asarray(line) for line in gen.lines(0.0) if len(line) > 1]
    return PhaseField(W1, W2, dW1, dW2, nullclines, p.nu == 0.0)


def nullcline_intersection(field_: PhaseField, p: ReducedParams) -> ReducedState:
    """Non-origin crossing of the ``dw1 = 0`` contour with the ray ``w2 = (nu/lambda2) w1``."""
    hits = []
    for line in field_.nullclines["dw1"]:
        f = p.nu * line[:, 0] - p.lambda2 * line[:, 1]
        for i in np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) <= 0)[0]:
            if f[i] == f[i + 1]:
                continue
            t = f[i] / (f[i] - f[i + 1])
            pt = line[i] + t * (line[i + 1] - line[i])
            if pt[0] > 0 and np.hypot(*pt) > 1e-8:
                hits.append(pt)
    if not hits:
        raise DegenerateInputError("nullclines do not intersect inside the grid")
    best = max(hits, key=lambda q: q[0])
    return ReducedState(float(best[0]), float(best[1]))
