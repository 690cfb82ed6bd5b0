"""Two-layer linear network ``f(x) = a^T W x`` trained by full-batch gradient descent.

Time convention
---------------
A gradient step with learning rate ``eta`` advances the dimensionless time
``t_tilde`` by ``2 * eta``.  In these units the continuous flow reads
``dW/dt = a (Sxy^T - a^T W S)`` with unit time constant, which is the scale
every analytical timescale in :mod:`spike_dyn.reduced_dynamics` uses.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .adapted_basis import AdaptedBasis
from .errors import DivergenceError, DomainError, PhaseNotFoundError
from .reduced_dynamics import ReducedParams, fixed_point
from .spiked_data import (
    Dataset,
    SpikedModel,
    empirical_moments,
    input_output_correlation,
    population_covariance,
)

DIVERGENCE_THRESHOLD = 1e6
SATURATION_FRACTION = 0.99

TRAJECTORY_COLUMNS = (
    "step",
    "t_tilde",
    "loss",
    "w1_proj",
    "w2_proj",
    "a_proj",
    "conservation_residual",
    "deviation_energy",
)


@dataclass(frozen=True)
class TwoLayerNet:
    W: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        m, d = self.W.shape
        if self.a.shape != (m,):
            raise DomainError(f"a must have shape ({m},), got {self.a.shape}")
        if m < d:
            raise DomainError(f"width m={m} must be >= input dimension d={d}")

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def end_to_end(self) -> np.ndarray:
        """The linear map ``W^T a`` realised by the network."""
        return self.W.T @ self.a


@dataclass(frozen=True)
class TrainConfig:
    eta: float
    max_steps: int
    s: float = 1e-5
    seed: int = 0
    record_every: int = 10
    moments: str = "empirical"
    stop_loss: Optional[float] = None  # None: 1e-12 * mean(y^2)

    def __post_init__(self):
        if not self.eta > 0:
            raise DomainError("eta must be positive")
        if self.max_steps < 1 or self.record_every < 1:
            raise DomainError("max_steps and record_every must be >= 1")
        if not self.s > 0:
            raise DomainError("s must be positive")
        if self.moments not in ("empirical", "population"):
            raise DomainError(f"moments must be 'empirical' or 'population', got {self.moments!r}")
        if self.stop_loss is not None and self.stop_loss < 0:
            raise DomainError("stop_loss must be non-negative")

    def check_stability(self, lambda_max) -> None:
        if not self.eta < 1.0 / (2.0 * lambda_max):
            raise DomainError(
                f"eta={self.eta:g} violates the stability guard eta < 1/(2 lambda_max) = "
                f"{1.0 / (2.0 * lambda_max):g}"
            )


@dataclass(frozen=True)
class TrajectoryRecord:
    steps: np.ndarray
    times: np.ndarray
    loss: np.ndarray
    w_proj: np.ndarray
    a_proj: np.ndarray
    conservation_residual: np.ndarray
    deviation_energy: np.ndarray
    r_hat1: np.ndarray
    final_net: TwoLayerNet = field(repr=False)
    u0: float = 0.0
    label_second_moment: float = 1.0
    extra: dict = field(default_factory=dict)

    @property
    def w1(self) -> np.ndarray:
        return self.w_proj[:, 0]

    @property
    def w2(self) -> np.ndarray:
        return self.w_proj[:, 1]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRAJECTORY_COLUMNS)
            for row in zip(
                self.steps,
                self.times,
                self.loss,
                self.w1,
                self.w2,
                self.a_proj,
                self.conservation_residual,
                self.deviation_energy,
            ):
                writer.writerow([int(row[0])] + [f"{v:.17g}" for v in row[1:]])


def init_network(m, d, s, seed) -> TwoLayerNet:
    """Small random init: ``W_ij ~ N(0, s^2/d)``, then ``a_i ~ N(0, s^2/m)``.

    Both are drawn, in that order, from ``numpy.random.default_rng(seed)``.
    """
    if m < d:
        raise DomainError(f"width m={m} must be >= input dimension d={d}")
    if d < 2 or not s > 0:
        raise DomainError("need d >= 2 and s > 0")
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, s / math.sqrt(d), size=(m, d))
    a = rng.normal(0.0, s / math.sqrt(m), size=m)
    return TwoLayerNet(W, a)


def loss(net: TwoLayerNet, data: Dataset) -> float:
    """Mean squared training error."""
    resid = data.X @ net.end_to_end - data.y
    return float(resid @ resid / data.n)


def population_loss(net: TwoLayerNet, model: SpikedModel) -> float:
    """Expected squared error ``(c - beta)^T Sigma (c - beta)`` with ``c = W^T a``."""
    delta = net.end_to_end - model.beta
    return float(model.sigma2 * (delta @ delta + model.rho * (model.mu @ delta) ** 2))


def loss_gradients(net: TwoLayerNet, Sigma, Sigma_xy):
    """``(dL/dW, dL/da)`` of the moment form of the loss."""
    g = Sigma_xy - Sigma @ net.end_to_end
    return -2.0 * np.outer(net.a, g), -2.0 * (net.W @ g)


def _step_arrays(W, a, Sigma, Sigma_xy, eta):
    g = Sigma_xy - Sigma @ (W.T @ a)
    return W + (2.0 * eta) * np.outer(a, g), a + (2.0 * eta) * (W @ g)


def gradient_step(net: TwoLayerNet, Sigma_hat, Sigma_xy_hat, eta) -> TwoLayerNet:
    """One simultaneous forward-Euler update of both layers."""
    W, a = _step_arrays(net.W, net.a, Sigma_hat, Sigma_xy_hat, eta)
    if not (np.max(np.abs(W)) < DIVERGENCE_THRESHOLD and np.max(np.abs(a)) < DIVERGENCE_THRESHOLD):
        raise DivergenceError("weights exceeded the divergence threshold")
    return TwoLayerNet(W, a)


def conservation_residual(net: TwoLayerNet, net0: TwoLayerNet) -> float:
    """Frobenius drift of ``a a^T - W W^T`` away from its initial value."""
    diff = (np.outer(net.a, net.a) - net.W @ net.W.T) - (
        np.outer(net0.a, net0.a) - net0.W @ net0.W.T
    )
    return float(np.linalg.norm(diff))


def initial_growth_direction(net0: TwoLayerNet, basis: AdaptedBasis) -> tuple[np.ndarray, float]:
    """``r1 = (W(0) v1 + a(0)) / 2``, returned as ``(r1 / |r1|, |r1|)``."""
    r1 = 0.5 * (net0.W @ basis.v1 + net0.a)
    norm = float(np.linalg.norm(r1))
    return r1 / norm, norm


def deviation_energy(net: TwoLayerNet, basis: AdaptedBasis, r_hat1) -> float:
    """Half the squared norm of ``a``, ``W v1``, ``W v2`` orthogonal to ``r_hat1``."""
    total = 0.0
    for vec in (net.a, net.W @ basis.v1, net.W @ basis.v2):
        perp = vec - (r_hat1 @ vec) * r_hat1
        total += perp @ perp
    return float(0.5 * total)


def train(
    net: TwoLayerNet,
    source: Union[Dataset, SpikedModel],
    basis: AdaptedBasis,
    cfg: TrainConfig,
    directions: Optional[dict] = None,
):
    """Run gradient descent and record diagnostics every ``cfg.record_every`` steps.

    ``source`` is a :class:`Dataset` for ``moments="empirical"`` and a
    :class:`SpikedModel` for ``moments="population"``.  Step 0 and the final
    step are always recorded.  Early stopping is checked at record steps.
    ``directions`` maps names to input-space vectors ``u``; the projection
    ``r_hat1^T W u`` is recorded for each under ``record.extra[name]``.
    """
    if cfg.moments == "empirical":
        if not isinstance(source, Dataset):
            raise DomainError("empirical moments need a Dataset")
        Sigma, Sigma_xy = empirical_moments(source)
        y2 = float(source.y @ source.y / source.n)

        def current_loss(W, a):
            resid = source.X @ (W.T @ a) - source.y
            return float(resid @ resid / source.n)

    else:
        if not isinstance(source, SpikedModel):
            raise DomainError("population moments need a SpikedModel")
        Sigma = population_covariance(source)
        Sigma_xy = input_output_correlation(source)
        y2 = source.signal_variance

        def current_loss(W, a):
            return population_loss(TwoLayerNet(W, a), source)

    if Sigma.shape[0] != net.d:
        raise DomainError("network and data dimensions differ")
    cfg.check_stability(float(np.linalg.eigvalsh(Sigma)[-1]))
    stop_loss = 1e-12 * y2 if cfg.stop_loss is None else cfg.stop_loss

    r_hat1, u0 = initial_growth_direction(net, basis)
    v1, v2 = basis.v1, basis.v2
    C0 = np.outer(net.a, net.a) - net.W @ net.W.T
    W, a = net.W.copy(), net.a.copy()
    rows = []
    directions = directions or {}
    extra = {name: [] for name in directions}

    def record(step):
        Wv1, Wv2 = W @ v1, W @ v2
        p1, p2, pa = r_hat1 @ Wv1, r_hat1 @ Wv2, r_hat1 @ a
        # explicit perpendicular parts: |x|^2 - p^2 cancels catastrophically at E ~ s^2
        perp = np.concatenate([a - pa * r_hat1, Wv1 - p1 * r_hat1, Wv2 - p2 * r_hat1])
        energy = 0.5 * (perp @ perp)
        drift = np.linalg.norm(np.outer(a, a) - W @ W.T - C0)
        L = current_loss(W, a)
        for name, u in directions.items():
            extra[name].append(r_hat1 @ (W @ u))
        rows.append((step, 2.0 * cfg.eta * step, L, p1, p2, pa, drift, energy))
        return L

    record(0)
    step = 0
    while step < cfg.max_steps:
        step += 1
        W, a = _step_arrays(W, a, Sigma, Sigma_xy, cfg.eta)
        if step % cfg.record_every == 0 or step == cfg.max_steps:
            if not (np.max(np.abs(W)) < DIVERGENCE_THRESHOLD and np.max(np.abs(a)) < DIVERGENCE_THRESHOLD):
                raise DivergenceError(f"weights exceeded the divergence threshold at step {step}")
            if record(step) <= stop_loss:
                break

    table = np.array(rows)
    return TrajectoryRecord(
        steps=table[:, 0].astype(int),
        times=table[:, 1],
        loss=table[:, 2],
        w_proj=table[:, 3:5],
        a_proj=table[:, 5],
        conservation_residual=table[:, 6],
        deviation_energy=table[:, 7],
        r_hat1=r_hat1,
        final_net=TwoLayerNet(W, a),
        u0=u0,
        label_second_moment=y2,
        extra={name: np.array(vals) for name, vals in extra.items()},
    )


def first_crossing(times, series, threshold) -> Optional[float]:
    idx = np.nonzero(np.asarray(series) >= threshold)[0]
    return float(times[idx[0]]) if idx.size else None


def detect_phases(traj, params, delta=3.0) -> tuple[float, Optional[float]]:
    """Operational start of the later phase ``t1`` and its completion ``t2``.

    ``t1`` is the first time ``w1`` reaches 99% of the early-phase plateau;
    ``t2`` the first time ``w2`` reaches ``(1 - e^-delta) w2*``.  Works on any
    trajectory exposing ``times``, ``w1`` and ``w2`` (full or reduced) and on
    coefficients given as an :class:`AdaptedBasis` or :class:`ReducedParams`.
    ``t2`` is ``None`` when ``nu == 0`` since there is no later phase.
    """
    if isinstance(params, AdaptedBasis):
        params = ReducedParams.from_basis(params)
    t1 = first_crossing(traj.times, traj.w1, SATURATION_FRACTION * params.saturation)
    if t1 is None:
        raise PhaseNotFoundError("w1 never reached 99% of its early-phase plateau")
    if params.nu == 0.0:
        return t1, None
    w2_star = fixed_point(params).w2
    t2 = first_crossing(traj.times, traj.w2, (1.0 - math.exp(-delta)) * w2_star)
    if t2 is None:
        raise PhaseNotFoundError("w2 never reached its later-phase threshold")
    return t1, t2
