"""Experiment orchestration: configs, figure-data runs, manifests and the invariant suite.

Every ``run_*`` function takes an :class:`ExperimentConfig`, writes its data
files into ``cfg.output_dir`` and returns a :class:`RunManifest`.  Data files
are byte-identical across reruns with the same config.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .adapted_basis import (
    basis_for_dataset,
    basis_for_model,
    correlation_norm,
    effective_coefficients,
    spike_basis_overlaps,
)
from .errors import ConfigError, DomainError, PhaseNotFoundError
from .genx_error import (
    RiskModel,
    empirical_min_norm_risk,
    kappa_residual,
    normalized_risk,
    ridge_risk,
    ridgeless_risk,
    solve_kappa,
)
from .linear_net import TRAJECTORY_COLUMNS, TrainConfig, detect_phases, init_network, train
from .reduced_dynamics import (
    ReducedParams,
    early_phase_magnitude,
    early_timescale,
    fixed_point,
    integrate_reduced,
    later_phase_assumption_holds,
    later_phase_bound,
    phase_plane_field,
    reduced_rhs,
)
from .spiked_data import make_model, sample

log = logging.getLogger(__name__)

EXPERIMENTS = ("fig1", "fig2", "fig3", "fig4", "fig5", "validate", "custom")
SEED_ENV = "SPIKE_DYN_SEED"

# long names accepted in config files
_ALIASES = {
    "fig1_phase_plane": "fig1",
    "fig2_weight_evolution": "fig2",
    "fig3_loss_sweep": "fig3",
    "fig4_risk_colormap": "fig4",
    "fig5_risk_vs_gamma": "fig5",
}

_PER_EXPERIMENT_DEFAULTS = {
    "fig3": {"rho_list": [0.0, 5.0, 20.0], "A_list": [0.5], "max_steps": 15000},
    "fig4": {"gamma": 3.0},
    "fig5": {"d": 600, "rho_list": [20.0], "A_list": [0.3, 0.5, 0.8], "gamma_list": [1.5, 2.0, 3.0, 5.0]},
}

FULL_SCALE_D = 3000

RISK_COLUMNS = (
    "gamma",
    "rho",
    "A",
    "sigma2",
    "theory_risk",
    "theory_normalized",
    "empirical_mean",
    "empirical_std",
    "n_trials",
)
COLORMAP_COLUMNS = ("gamma", "rho", "A", "sigma2", "theory_risk", "theory_normalized")
REDUCED_COLUMNS = ("t", "w1", "w2")
FIELD_COLUMNS = ("w1", "w2", "dw1", "dw2")
NULLCLINE_COLUMNS = ("w1", "w2", "which")
PLANE_COLUMNS = ("mu_proj", "mu_perp_proj")
EVOLUTION_COLUMNS = TRAJECTORY_COLUMNS + ("early_analytic",)
SWEEP_COLUMNS = ("rho", "A", "step", "t_tilde", "normalized_loss", "early_timescale", "later_timescale")


@dataclass
class ExperimentConfig:
    experiment: str = "custom"
    d: int = 30
    m: int = 50
    n: int = 10000
    sigma2: float = 1.0
    rho: float = 20.0
    A: float = 0.3
    rho_list: Optional[list] = None
    A_list: Optional[list] = None
    gamma: float = 3.0
    gamma_list: Optional[list] = None
    eta: float = 1e-3
    s: float = 1e-5
    max_steps: int = 10000
    record_every: int = 5
    delta: float = 3.0
    moments: str = "empirical"
    rotate_seed: Optional[int] = None
    seed_base: int = 0
    trials: int = 10
    full_scale: bool = False
    grid_size: int = 50
    rho_max: float = 50.0
    field_resolution: int = 41
    nullcline_resolution: int = 401
    reduced_dt: Optional[float] = None
    tolerances: dict = field(default_factory=dict)
    output_dir: str = "runs"

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        exp = _ALIASES.get(raw.get("experiment", "custom"), raw.get("experiment", "custom"))
        if exp not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {exp!r}")
        merged = dict(_PER_EXPERIMENT_DEFAULTS.get(exp, {}))
        merged.update(raw)
        merged["experiment"] = exp
        try:
            cfg = cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw)

    def validate(self) -> None:
        """Check every module constraint before anything runs."""
        try:
            for name in ("rho_list", "A_list", "gamma_list"):
                value = getattr(self, name)
                if value is not None and len(value) == 0:
                    raise ConfigError(f"{name} must be non-empty")
            if self.trials < 1 or self.record_every < 1 or self.max_steps < 1:
                raise ConfigError("trials, record_every and max_steps must be >= 1")
            for rho, A in self.settings():
                make_model(self.d, self.sigma2, rho, A)
            if self.experiment in ("fig1", "fig2", "fig3", "custom"):
                init_network(self.m, self.d, self.s, 0)
                cfg = self.train_config()
                for rho, _ in self.settings():
                    cfg.check_stability(self.sigma2 * (1.0 + rho))
            if self.experiment in ("fig4", "fig5"):
                for g in self.gammas():
                    if not g > 1:
                        raise DomainError(f"ridgeless theory needs gamma > 1, got {g}")
            if self.experiment == "fig5" and any(round(self.effective_d / g) < 1 for g in self.gammas()):
                raise ConfigError("gamma too large for d")
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def effective_d(self) -> int:
        return FULL_SCALE_D if self.full_scale else self.d

    def settings(self) -> list:
        rhos = self.rho_list if self.rho_list is not None else [self.rho]
        As = self.A_list if self.A_list is not None else [self.A]
        return [(float(r), float(a)) for r, a in itertools.product(rhos, As)]

    def gammas(self) -> list:
        return [float(g) for g in (self.gamma_list if self.gamma_list is not None else [self.gamma])]

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            eta=self.eta,
            max_steps=self.max_steps,
            s=self.s,
            seed=self.seed_base + 1,
            record_every=self.record_every,
            moments=self.moments,
        )


@dataclass
class RunManifest:
    config: dict
    runs: list = field(default_factory=list)
    files: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    duration_s: float = 0.0
    version: str = __version__

    def add_file(self, path: Path) -> None:
        name = str(Path(path).name)
        if name not in self.files:
            self.files.append(name)

    def write(self, out: Path) -> Path:
        path = Path(out) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


# ---------------------------------------------------------------------------
# file helpers


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{float(v):.17g}"


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def check_csv(path, columns, text_columns=()) -> int:
    """Post-write schema check; returns the number of data rows."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header[: len(columns)]) != tuple(columns):
            raise ValueError(f"{path}: header {header} does not start with {list(columns)}")
        count = 0
        for row in reader:
            if len(row) != len(header):
                raise ValueError(f"{path}: ragged row {count + 1}")
            for name, value in zip(header, row):
                if name in text_columns or value == "":
                    continue
                float(value)
            count += 1
    return count


def _prepare_out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# two-phase simulation shared by fig1/fig2/fig3/custom


@dataclass
class TwoPhaseRun:
    rho: float
    A: float
    basis: object
    params: ReducedParams
    record: object
    reduced: object
    mu: np.ndarray
    mu_perp: np.ndarray


def _mu_perp(model):
    v = model.beta - (model.mu @ model.beta) * model.mu
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        # A = 1: any unit vector orthogonal to mu
        e = np.zeros(model.d)
        e[int(np.argmin(np.abs(model.mu)))] = 1.0
        v = e - (model.mu @ e) * model.mu
        norm = np.linalg.norm(v)
    return v / norm


def simulate_two_phase(cfg: ExperimentConfig, rho, A, with_reduced=True) -> TwoPhaseRun:
    """Train the network on one ``(rho, A)`` setting and integrate the reduced system.

    Data come from seed ``seed_base`` and the initialization from
    ``seed_base + 1``.  The reduced system uses the coefficients of the
    moments the network is trained on, starts from ``(u0, 1e-3 u0)`` with
    ``u0 = |r1|`` and is recorded on the same time grid as the network.
    """
    model = make_model(cfg.d, cfg.sigma2, rho, A, rotate_seed=cfg.rotate_seed)
    tcfg = cfg.train_config()
    if cfg.moments == "empirical":
        source = sample(model, cfg.n, cfg.seed_base)
        basis = basis_for_dataset(source, model.beta, model.mu)
    else:
        source = model
        basis = basis_for_model(model)
    net0 = init_network(cfg.m, cfg.d, cfg.s, tcfg.seed)
    mu_perp = _mu_perp(model)
    record = train(net0, source, basis, tcfg, directions={"mu": model.mu, "mu_perp": mu_perp})
    params = ReducedParams.from_basis(basis)
    reduced = None
    if with_reduced:
        t_rec = 2.0 * cfg.eta * cfg.record_every
        target_dt = cfg.reduced_dt or params.default_dt()
        sub = max(1, math.ceil(t_rec / target_dt))
        t_end = float(record.times[-1])
        n_rec = max(1, round(t_end / t_rec))
        reduced = integrate_reduced(
            params, (record.u0, 1e-3 * record.u0), n_rec * t_rec, dt=t_rec / sub, record_every=sub
        )
    return TwoPhaseRun(rho, A, basis, params, record, reduced, model.mu, mu_perp)


def reduced_plane_coords(run: TwoPhaseRun):
    """Map reduced ``(w1, w2)`` into the ``(mu, mu_perp)`` plane through ``v1``, ``v2``."""
    v1, v2 = run.basis.v1, run.basis.v2
    w1, w2 = run.reduced.w1, run.reduced.w2
    return w1 * (run.mu @ v1) + w2 * (run.mu @ v2), w1 * (run.mu_perp @ v1) + w2 * (run.mu_perp @ v2)


def timescales(run: TwoPhaseRun, cfg: ExperimentConfig) -> dict:
    p = run.params
    out = {
        "rho": run.rho,
        "A": run.A,
        "delta": cfg.delta,
        "s": cfg.s,
        "u0": run.record.u0,
        "sigma_xy_norm": p.sigma_xy_norm,
        "lambda1": p.lambda1,
        "lambda2": p.lambda2,
        "nu": p.nu,
        "saturation": p.saturation,
        "early_timescale": None,
        "later_phase_bound": None,
        "later_timescale": None,
        "t1_measured": None,
        "t2_measured": None,
        "later_assumption_holds": None,
    }
    try:
        out["early_timescale"] = early_timescale(p, cfg.s)
    except DomainError:
        pass
    if p.nu > 0:
        out["later_phase_bound"] = later_phase_bound(p, cfg.delta)
        if out["early_timescale"] is not None:
            out["later_timescale"] = out["early_timescale"] + out["later_phase_bound"]
    try:
        t1, t2 = detect_phases(run.record, p, cfg.delta)
        out["t1_measured"], out["t2_measured"] = t1, t2
        if run.reduced is not None and p.nu > 0:
            out["later_assumption_holds"] = later_phase_assumption_holds(run.reduced, p, t1)
    except PhaseNotFoundError as exc:
        log.warning("phase detection: %s", exc)
    return out


# ---------------------------------------------------------------------------
# figure runs


def _finish(manifest: RunManifest, out: Path, started: float) -> RunManifest:
    manifest.duration_s = time.perf_counter() - started
    manifest.write(out)
    on_disk = sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    if on_disk != sorted(manifest.files):
        log.warning("files on disk %s differ from manifest %s", on_disk, manifest.files)
    return manifest


def _single_setting(cfg):
    settings = cfg.settings()
    if len(settings) != 1:
        raise ConfigError(f"{cfg.experiment} needs a single (rho, A), got {len(settings)}")
    return settings[0]


def run_fig1(cfg: ExperimentConfig) -> RunManifest:
    started = time.perf_counter()
    out = _prepare_out(cfg)
    manifest = RunManifest(config=asdict(cfg))
    rho, A = _single_setting(cfg)
    run = simulate_two_phase(cfg, rho, A)
    manifest.runs.append({"rho": rho, "A": A, "data_seed": cfg.seed_base, "init_seed": cfg.seed_base + 1})
    p = run.params
    fp = fixed_point(p)
    hi1 = 1.15 * max(p.saturation, fp.w1, float(np.max(run.record.w1)))
    hi2 = 1.15 * max(fp.w2, float(np.max(run.record.w2)), 0.1)
    field_ = phase_plane_field(p, (-0.1 * hi1, hi1), (-0.1 * hi2, hi2), cfg.field_resolution)
    path = write_csv(
        out / "field.csv",
        FIELD_COLUMNS,
        zip(field_.W1.ravel(), field_.W2.ravel(), field_.dW1.ravel(), field_.dW2.ravel()),
    )
    check_csv(path, FIELD_COLUMNS)
    manifest.add_file(path)
    path = write_json(out / "basis.json", json.loads(run.basis.to_json()))
    manifest.add_file(path)
    if field_.degenerate:
        manifest.warnings.append("nu = 0: nullclines are degenerate; only the vector field is emitted")
        return _finish(manifest, out, started)

    fine = phase_plane_field(p, (-0.1 * hi1, hi1), (-0.1 * hi2, hi2), cfg.nullcline_resolution)
    rows = []
    for name in ("dw1", "dw2"):
        for k, line in enumerate(fine.nullclines[name]):
            rows.extend((x, y, f"{name}/{k}") for x, y in line)
    path = write_csv(out / "nullclines.csv", NULLCLINE_COLUMNS, rows)
    check_csv(path, NULLCLINE_COLUMNS, text_columns=("which",))
    manifest.add_file(path)

    rec = run.record
    path = out / "trajectory_full.csv"
    write_csv(
        path,
        TRAJECTORY_COLUMNS + PLANE_COLUMNS,
        zip(
            rec.steps, rec.times, rec.loss, rec.w1, rec.w2, rec.a_proj,
            rec.conservation_residual, rec.deviation_energy, rec.extra["mu"], rec.extra["mu_perp"],
        ),
    )
    check_csv(path, TRAJECTORY_COLUMNS + PLANE_COLUMNS)
    manifest.add_file(path)

    x, y = reduced_plane_coords(run)
    path = write_csv(
        out / "trajectory_reduced.csv",
        REDUCED_COLUMNS + PLANE_COLUMNS,
        zip(run.reduced.times, run.reduced.w1, run.reduced.w2, x, y),
    )
    check_csv(path, REDUCED_COLUMNS + PLANE_COLUMNS)
    manifest.add_file(path)
    return _finish(manifest, out, started)


def run_fig2(cfg: ExperimentConfig) -> RunManifest:
    started = time.perf_counter()
    out = _prepare_out(cfg)
    manifest = RunManifest(config=asdict(cfg))
    rho, A = _single_setting(cfg)
    run = simulate_two_phase(cfg, rho, A)
    manifest.runs.append({"rho": rho, "A": A, "data_seed": cfg.seed_base, "init_seed": cfg.seed_base + 1})
    rec = run.record
    analytic = early_phase_magnitude(rec.times, rec.u0, run.params)
    path = write_csv(
        out / "evolution.csv",
        EVOLUTION_COLUMNS,
        zip(
            rec.steps, rec.times, rec.loss, rec.w1, rec.w2, rec.a_proj,
            rec.conservation_residual, rec.deviation_energy, analytic,
        ),
    )
    check_csv(path, EVOLUTION_COLUMNS)
    manifest.add_file(path)
    scales = timescales(run, cfg)
    if run.params.nu == 0:
        manifest.warnings.append("nu = 0: no later phase, later timescale omitted")
    manifest.add_file(write_json(out / "timescales.json", scales))
    return _finish(manifest, out, started)


def run_fig3(cfg: ExperimentConfig, threads=1) -> RunManifest:
    started = time.perf_counter()
    out = _prepare_out(cfg)
    manifest = RunManifest(config=asdict(cfg))
    settings = cfg.settings()

    def one(setting):
        run = simulate_two_phase(cfg, *setting, with_reduced=False)
        return run, timescales(run, cfg)

    with ThreadPoolExecutor(max(1, threads)) as pool:
        results = list(pool.map(one, settings))
    rows = []
    for (rho, A), (run, scales) in zip(settings, results):
        rec = run.record
        manifest.runs.append({"rho": rho, "A": A, "data_seed": cfg.seed_base, "init_seed": cfg.seed_base + 1})
        norm = rec.loss / rec.label_second_moment
        for step, t, L in zip(rec.steps, rec.times, norm):
            rows.append((rho, A, step, t, L, scales["early_timescale"], scales["later_timescale"]))
    path = write_csv(out / "loss_sweep.csv", SWEEP_COLUMNS, rows)
    check_csv(path, SWEEP_COLUMNS)
    manifest.add_file(path)
    return _finish(manifest, out, started)


def run_fig4(cfg: ExperimentConfig) -> RunManifest:
    started = time.perf_counter()
    out = _prepare_out(cfg)
    manifest = RunManifest(config=asdict(cfg))
    As = cfg.A_list if cfg.A_list is not None else np.linspace(0.0, 1.0, cfg.grid_size)
    rhos = cfg.rho_list if cfg.rho_list is not None else np.linspace(0.0, cfg.rho_max, cfg.grid_size)
    rows = []
    for g in cfg.gammas():
        for rho in rhos:
            for A in As:
                m = RiskModel(g, cfg.sigma2, float(rho), float(A))
                rows.append((g, float(rho), float(A), cfg.sigma2, ridgeless_risk(m), normalized_risk(m)))
    path = write_csv(out / "risk_colormap.csv", COLORMAP_COLUMNS, rows)
    check_csv(path, COLORMAP_COLUMNS)
    manifest.add_file(path)
    return _finish(manifest, out, started)


def run_fig5(cfg: ExperimentConfig, threads=1) -> RunManifest:
    started = time.perf_counter()
    out = _prepare_out(cfg)
    manifest = RunManifest(config=asdict(cfg))
    d = cfg.effective_d
    rows = []
    for rho, A in cfg.settings():
        for g in cfg.gammas():
            m = RiskModel(g, cfg.sigma2, rho, A)
            trials = empirical_min_norm_risk(
                d, g, cfg.sigma2, rho, A, cfg.trials, cfg.seed_base, threads=threads
            )
            manifest.runs.append(
                {"rho": rho, "A": A, "gamma": g, "d": d, "n": trials.n,
                 "seeds": [cfg.seed_base + i for i in range(cfg.trials)]}
            )
            rows.append(
                (g, rho, A, cfg.sigma2, ridgeless_risk(m), normalized_risk(m),
                 trials.mean, trials.std, trials.n_trials)
            )
    path = write_csv(out / "risk_vs_gamma.csv", RISK_COLUMNS, rows)
    check_csv(path, RISK_COLUMNS)
    manifest.add_file(path)
    return _finish(manifest, out, started)


def run_custom(cfg: ExperimentConfig) -> RunManifest:
    """Single training run plus reduced trajectory and timescales for any setting."""
    started = time.perf_counter()
    out = _prepare_out(cfg)
    manifest = RunManifest(config=asdict(cfg))
    rho, A = _single_setting(cfg)
    run = simulate_two_phase(cfg, rho, A)
    manifest.runs.append({"rho": rho, "A": A, "data_seed": cfg.seed_base, "init_seed": cfg.seed_base + 1})
    path = out / "trajectory.csv"
    run.record.write_csv(path)
    check_csv(path, TRAJECTORY_COLUMNS)
    manifest.add_file(path)
    path = write_csv(
        out / "trajectory_reduced.csv",
        REDUCED_COLUMNS,
        zip(run.reduced.times, run.reduced.w1, run.reduced.w2),
    )
    check_csv(path, REDUCED_COLUMNS)
    manifest.add_file(path)
    manifest.add_file(write_json(out / "basis.json", json.loads(run.basis.to_json())))
    manifest.add_file(write_json(out / "timescales.json", timescales(run, cfg)))
    return _finish(manifest, out, started)


# ---------------------------------------------------------------------------
# invariant suite

DEFAULT_TOLERANCES = {
    "basis_oracle": 1e-10,
    "fixed_point": 1e-10,
    "ode_residual": 1e-4,
    "early_phase_ode": 1e-6,
    "kappa_residual": 1e-12,
    "ridge_limit": 1e-4,
    "conservation_scaling": 0.2,
}


def _check_basis_oracle(tol):
    rng = np.random.default_rng(12345)
    worst = 0.0
    for i in range(200):
        s2, rho, A = rng.uniform(0.5, 4.0), rng.uniform(0.0, 50.0), rng.uniform(0.0, 1.0)
        b = basis_for_model(make_model(8, s2, rho, A, rotate_seed=i))
        closed = (correlation_norm(s2, rho, A), *effective_coefficients(s2, rho, A), *spike_basis_overlaps(rho, A))
        matrix = (b.sigma_xy_norm, b.lambda1, b.lambda2, b.nu, b.overlap1, b.overlap2)
        worst = max(worst, max(abs(c - m) / max(abs(c), 1e-300) for c, m in zip(closed, matrix)))
    return worst, worst <= tol


def _reference_params():
    b = basis_for_model(make_model(30, 1.0, 20.0, 0.3))
    return ReducedParams.from_basis(b)


def _check_fixed_point(tol):
    worst = 0.0
    for rho, A in [(5.0, 0.3), (20.0, 0.3), (50.0, 0.7)]:
        lam1, lam2, nu = effective_coefficients(1.0, rho, A)
        p = ReducedParams(correlation_norm(1.0, rho, A), lam1, lam2, nu)
        worst = max(worst, max(abs(v) for v in reduced_rhs(fixed_point(p), p)))
    return worst, worst <= tol


def _check_ode_residual(tol):
    p = _reference_params()
    dt = 1e-3
    traj = integrate_reduced(p, (1e-3, 1e-6), 8.0, dt=dt)
    w = traj.w
    fd = (w[2:] - w[:-2]) / (2 * dt)
    rhs = np.array([reduced_rhs(s, p) for s in w[1:-1]])
    worst = float(np.max(np.abs(fd - rhs)))
    return worst, worst <= tol


def _check_early_phase_ode(tol):
    p = _reference_params()
    t = np.linspace(0.0, 3.0, 301)
    h = 1e-5
    u = early_phase_magnitude(t, 1e-4, p)
    du = (early_phase_magnitude(t + h, 1e-4, p) - early_phase_magnitude(t - h, 1e-4, p)) / (2 * h)
    rhs = (p.sigma_xy_norm * u - p.lambda1 * u**3) / p.tau
    worst = float(np.max(np.abs(du - rhs) / np.maximum(np.abs(rhs), 1e-3)))
    return worst, worst <= tol


def _check_kappa_residual(tol):
    worst = 0.0
    for g in (0.5, 1.5, 3.0, 10.0):
        for lam in np.geomspace(1e-8, 1e3, 23):
            m = RiskModel(g, 1.0, 0.0, 0.0)
            k = solve_kappa(float(lam), m)
            worst = max(worst, abs(kappa_residual(k, float(lam), m)))
    return worst, worst <= tol


def _check_ridge_limit(tol):
    worst = 0.0
    for g in (1.2, 1.5, 2.0, 3.0, 5.0, 10.0):
        for rho in (0.0, 5.0, 20.0):
            for A in (0.0, 0.3, 0.5, 1.0):
                m = RiskModel(g, 1.0, rho, A)
                worst = max(worst, abs(ridge_risk(1e-8, m) - ridgeless_risk(m)))
    return worst, worst <= tol


def _check_conservation_scaling(tol):
    model = make_model(6, 1.0, 5.0, 0.5)
    basis = basis_for_model(model)
    net0 = init_network(8, 6, 1e-2, 3)
    t_final = 4.0
    residuals = []
    for eta in (4e-3, 2e-3):
        steps = round(t_final / (2 * eta))
        cfg = TrainConfig(eta=eta, max_steps=steps, record_every=steps, moments="population", stop_loss=0.0)
        residuals.append(train(net0, model, basis, cfg).conservation_residual[-1])
    ratio = residuals[0] / residuals[1]
    return ratio, abs(ratio - 2.0) <= tol


_CHECKS = {
    "basis_oracle": _check_basis_oracle,
    "fixed_point": _check_fixed_point,
    "ode_residual": _check_ode_residual,
    "early_phase_ode": _check_early_phase_ode,
    "kappa_residual": _check_kappa_residual,
    "ridge_limit": _check_ridge_limit,
    "conservation_scaling": _check_conservation_scaling,
}


def validate(cfg: ExperimentConfig) -> dict:
    """Run every invariant check; failures are reported, never raised."""
    unknown = set(cfg.tolerances) - set(_CHECKS)
    if unknown:
        raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
    report = {"checks": [], "passed": True}
    for name, check in _CHECKS.items():
        tol = cfg.tolerances.get(name, DEFAULT_TOLERANCES[name])
        try:
            value, ok = check(tol)
            entry = {"name": name, "value": float(value), "tolerance": tol, "passed": bool(ok)}
        except Exception as exc:  # report, do not propagate
            entry = {"name": name, "value": None, "tolerance": tol, "passed": False, "error": repr(exc)}
        report["checks"].append(entry)
        report["passed"] &= entry["passed"]
    return report


def run_validate(cfg: ExperimentConfig) -> tuple[RunManifest, dict]:
    started = time.perf_counter()
    out = _prepare_out(cfg)
    manifest = RunManifest(config=asdict(cfg))
    report = validate(cfg)
    manifest.add_file(write_json(out / "validation.json", report))
    return _finish(manifest, out, started), report


def seed_from_env(cfg: ExperimentConfig) -> ExperimentConfig:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return cfg
    try:
        cfg.seed_base = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc
    return cfg

