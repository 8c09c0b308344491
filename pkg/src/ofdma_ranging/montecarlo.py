"""Seeded Monte Carlo trials, metric aggregation and parameter sweeps.

Every trial owns a Philox stream keyed by (master seed, trial index), so a
batch gives identical numbers whatever the worker count. Trials are grouped
into fixed-size chunks whose metrics are merged in chunk order.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import CollisionMode, UserGroundTruth, draw_users, synthesize
from .errors import ConfigError, SingularGram
from .flm import flm_statistics
from .receiver import RangingReport, no_noise_subspace_report, process_subchannel
from .scenario import ScenarioConfig, build_codebook, cfo_grid, config_comment, steering_matrix
from .subspace import estimate_noise_power, mfe_error_variance

CHUNK_SIZE = 250


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    seq = np.random.SeedSequence(master_seed, spawn_key=(trial_index,))
    return np.random.Generator(np.random.Philox(seq))


@dataclass
class TrialOutcome:
    users: list[UserGroundTruth]
    report: RangingReport
    active_codes: np.ndarray
    shared_codes: np.ndarray
    missed_codes: int
    false_codes: int
    n_inactive: int
    eps_sq_err: list[float] = field(default_factory=list)
    eps_theory_var: list[float] = field(default_factory=list)
    timing_err: list[int] = field(default_factory=list)
    power_sq_err: list[float] = field(default_factory=list)
    power_theory_var: list[float] = field(default_factory=list)
    flm_missed: int = 0
    flm_false: int = 0
    flm_power_sq_err: list[float] = field(default_factory=list)

    @property
    def true_collision(self) -> bool:
        return self.shared_codes.size > 0

    @property
    def flagged(self) -> bool:
        return self.report.collided


def _cfo_theory(cfg, codebook, users, k) -> float:
    try:
        return mfe_error_variance(
            cfg, codebook, [u.code_index for u in users], [u.eps for u in users], k, users[k].P, cfg.sigma2
        )
    except (SingularGram, ArithmeticError):
        return math.nan


def _power_theory(cfg, codebook, users, k) -> float:
    C = steering_matrix(cfg, codebook, [u.code_index for u in users], [u.eps for u in users])
    gram = C.conj().T @ C
    try:
        inv_kk = float(np.real(np.linalg.inv(gram)[k, k]))
    except np.linalg.LinAlgError:
        return math.nan
    sigma2_k = cfg.sigma2 * inv_kk
    return sigma2_k * (2.0 * users[k].P + sigma2_k) / cfg.QV


def run_trial(
    cfg: ScenarioConfig,
    K: int,
    collision_mode: CollisionMode | str = CollisionMode.DISTINCT,
    trial_index: int = 0,
    codebook=None,
    flm_alpha: float | None = None,
    eps_on_grid: bool = False,
) -> TrialOutcome:
    """Simulate one ranging slot and score the receiver against ground truth."""
    codebook = codebook or build_codebook(cfg)
    rng = trial_rng(cfg.seed, trial_index)
    users = draw_users(cfg, K, rng, collision_mode, eps_grid=cfo_grid(cfg) if eps_on_grid else None)
    obs = synthesize(cfg, users, rng, codebook)
    if K >= cfg.M:
        # the noise subspace is empty whatever MDL says
        report = no_noise_subspace_report(obs, cfg)
    else:
        report = process_subchannel(obs, cfg, codebook, flm_alpha)

    codes = np.array([u.code_index for u in users])
    active, counts = np.unique(codes, return_counts=True)
    shared = active[counts > 1]
    declared = set(int(c) for c in report.detected_codes)
    active_set = set(int(c) for c in active)
    out = TrialOutcome(
        users=users,
        report=report,
        active_codes=active,
        shared_codes=shared,
        missed_codes=len(active_set - declared),
        false_codes=len(declared - active_set),
        n_inactive=cfg.M - len(active_set),
    )

    pos = {int(c): j for j, c in enumerate(report.detected_codes)}
    usable = not report.collided
    for k, u in enumerate(users):
        if u.code_index in shared or u.code_index not in pos:
            continue
        j = pos[u.code_index]
        out.eps_sq_err.append((report.eps_hat[j] - u.eps) ** 2)
        out.eps_theory_var.append(_cfo_theory(cfg, codebook, users, k))
        if usable and report.theta_hat_f.size:
            out.timing_err.append(int(report.theta_hat_f[j]) - u.theta)
            out.power_sq_err.append((report.p_hat[j] - u.P) ** 2)
            out.power_theory_var.append(_power_theory(cfg, codebook, users, k))

    if report.flm is not None:
        flm_declared = set(int(c) for c in report.flm.detected_codes)
        out.flm_missed = len(active_set - flm_declared)
        out.flm_false = len(flm_declared - active_set)
        flm_pos = {int(c): j for j, c in enumerate(report.flm.detected_codes)}
        for u in users:
            if u.code_index in shared or u.code_index not in flm_pos:
                continue
            out.flm_power_sq_err.append((report.flm.p_hat_flm[flm_pos[u.code_index]] - u.P) ** 2)
    return out


@dataclass
class Metrics:
    """Additive counters; ``merge`` is associative and order-stable."""

    n_trials: int = 0
    n_flagged: int = 0
    n_active: int = 0
    n_missed: int = 0
    n_inactive: int = 0
    n_false: int = 0
    n_eps: int = 0
    sse_eps: float = 0.0
    n_eps_theory: int = 0
    sum_eps_theory: float = 0.0
    n_timing: int = 0
    n_timing_err: int = 0
    n_power: int = 0
    sse_power: float = 0.0
    n_power_theory: int = 0
    sum_power_theory: float = 0.0
    n_coll_true: int = 0
    n_coll_missed: int = 0
    n_coll_false_trials: int = 0
    n_coll_false: int = 0
    n_flm: int = 0
    n_flm_missed: int = 0
    n_flm_false: int = 0
    n_flm_power: int = 0
    sse_flm_power: float = 0.0

    def merge(self, other: Metrics) -> Metrics:
        return Metrics(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in dataclasses.fields(self)})

    def add(self, out: TrialOutcome, cfg: ScenarioConfig) -> None:
        lo, hi = cfg.L - cfg.N_GD - 1, 0
        self.n_trials += 1
        self.n_flagged += int(out.flagged)
        self.n_active += len(out.active_codes)
        self.n_missed += out.missed_codes
        self.n_inactive += out.n_inactive
        self.n_false += out.false_codes
        self.n_eps += len(out.eps_sq_err)
        self.sse_eps += float(sum(out.eps_sq_err))
        finite = [v for v in out.eps_theory_var if math.isfinite(v)]
        self.n_eps_theory += len(finite)
        self.sum_eps_theory += float(sum(finite))
        self.n_timing += len(out.timing_err)
        self.n_timing_err += sum(1 for d in out.timing_err if not lo <= d <= hi)
        self.n_power += len(out.power_sq_err)
        self.sse_power += float(sum(out.power_sq_err))
        finite = [v for v in out.power_theory_var if math.isfinite(v)]
        self.n_power_theory += len(finite)
        self.sum_power_theory += float(sum(finite))
        if out.true_collision:
            self.n_coll_true += 1
            self.n_coll_missed += int(not out.flagged)
        else:
            self.n_coll_false_trials += 1
            self.n_coll_false += int(out.flagged)
        if out.report.flm is not None:
            self.n_flm += 1
            self.n_flm_missed += out.flm_missed
            self.n_flm_false += out.flm_false
            self.n_flm_power += len(out.flm_power_sq_err)
            self.sse_flm_power += float(sum(out.flm_power_sq_err))

    # derived rates
    @staticmethod
    def _ratio(num, den) -> float:
        return num / den if den else math.nan

    @property
    def p_md(self) -> float:
        return self._ratio(self.n_missed, self.n_active)

    @property
    def p_fa(self) -> float:
        return self._ratio(self.n_false, self.n_inactive)

    @property
    def rmse_eps(self) -> float:
        return math.sqrt(self._ratio(self.sse_eps, self.n_eps))

    @property
    def rmse_eps_theory(self) -> float:
        return math.sqrt(self._ratio(self.sum_eps_theory, self.n_eps_theory))

    @property
    def p_timing_err(self) -> float:
        return self._ratio(self.n_timing_err, self.n_timing)

    @property
    def rmse_power(self) -> float:
        return math.sqrt(self._ratio(self.sse_power, self.n_power))

    @property
    def rmse_power_theory(self) -> float:
        return math.sqrt(self._ratio(self.sum_power_theory, self.n_power_theory))

    @property
    def coll_p_fa(self) -> float:
        return self._ratio(self.n_coll_false, self.n_coll_false_trials)

    @property
    def coll_p_md(self) -> float:
        return self._ratio(self.n_coll_missed, self.n_coll_true)

    def row(self) -> dict:
        r = {
            "p_md": self.p_md,
            "p_fa": self.p_fa,
            "rmse_eps": self.rmse_eps,
            "rmse_eps_theory": self.rmse_eps_theory,
            "p_timing_err": self.p_timing_err,
            "rmse_power": self.rmse_power,
            "rmse_power_theory": self.rmse_power_theory,
            "coll_p_fa": self.coll_p_fa,
            "coll_p_md": self.coll_p_md,
            "n_trials": self.n_trials,
            "n_flagged": self.n_flagged,
        }
        if self.n_flm:
            r["flm_p_md"] = self._ratio(self.n_flm_missed, self.n_active)
            r["flm_p_fa"] = self._ratio(self.n_flm_false, self.n_inactive)
            r["flm_rmse_power"] = math.sqrt(self._ratio(self.sse_flm_power, self.n_flm_power))
        return r


def aggregate(outcomes, cfg: ScenarioConfig) -> Metrics:
    m = Metrics()
    for out in outcomes:
        m.add(out, cfg)
    return m


def combine(*parts: Metrics) -> Metrics:
    total = Metrics()
    for p in parts:
        total = total.merge(p)
    return total


@dataclass(frozen=True)
class PointJob:
    cfg: ScenarioConfig
    K: int
    collision_mode: str
    start: int
    stop: int
    flm_alpha: float | None = None
    eps_on_grid: bool = False


def _run_chunk(job: PointJob) -> Metrics:
    codebook = build_codebook(job.cfg)
    m = Metrics()
    for t in range(job.start, job.stop):
        out = run_trial(job.cfg, job.K, job.collision_mode, t, codebook, job.flm_alpha, job.eps_on_grid)
        m.add(out, job.cfg)
    return m


def _chunks(n_trials: int, chunk: int = CHUNK_SIZE):
    return [(s, min(s + chunk, n_trials)) for s in range(0, n_trials, chunk)]


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1


def map_jobs(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_point(
    cfg: ScenarioConfig,
    K: int,
    n_trials: int,
    collision_mode: CollisionMode | str = CollisionMode.DISTINCT,
    workers: int = 1,
    flm_alpha: float | None = None,
    eps_on_grid: bool = False,
) -> Metrics:
    mode = CollisionMode(collision_mode).value
    jobs = [PointJob(cfg, K, mode, a, b, flm_alpha, eps_on_grid) for a, b in _chunks(n_trials)]
    return combine(*map_jobs(_run_chunk, jobs, workers))


SWEEP_VARIABLES = ("snr_db", "eps_max", "K", "eta")


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    values: tuple
    trials: int
    base: ScenarioConfig
    K: int = 2
    collision_mode: str = CollisionMode.DISTINCT.value
    flm_alpha: float | None = None
    flm_table: dict | None = None

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {self.variable!r}")
        if self.trials < 1:
            raise ConfigError("trials per point must be >= 1")

    def point(self, value):
        if self.variable == "K":
            return self.base, int(value)
        return self.base.replace(**{self.variable: float(value)}), self.K

    def alpha_for(self, cfg: ScenarioConfig) -> float | None:
        """FLM threshold factor: the calibration entry for this SNR, else the fixed value."""
        if self.flm_table:
            for snr, alpha in self.flm_table.items():
                if math.isclose(snr, cfg.snr_db):
                    return alpha
            raise ConfigError(f"no FLM calibration entry for snr_db={cfg.snr_db}")
        return self.flm_alpha


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[dict]:
    jobs, owners = [], []
    for p, value in enumerate(spec.values):
        cfg, K = spec.point(value)
        for a, b in _chunks(spec.trials):
            jobs.append(PointJob(cfg, K, spec.collision_mode, a, b, spec.alpha_for(cfg)))
            owners.append(p)
    parts = map_jobs(_run_chunk, jobs, workers)
    rows = []
    for p, value in enumerate(spec.values):
        m = combine(*[part for part, o in zip(parts, owners) if o == p])
        rows.append({"swept_value": value, **m.row()})
    return rows


CSV_COLUMNS = [
    "swept_value", "p_md", "p_fa", "rmse_eps", "rmse_eps_theory", "p_timing_err",
    "rmse_power", "rmse_power_theory", "coll_p_fa", "coll_p_md", "n_trials", "n_flagged",
]


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else format(v, ".12g")
    return str(v)


def format_csv(rows: list[dict], cfg: ScenarioConfig, comment_extra: str = "") -> str:
    """CSV text with a leading ``#`` audit line (resolved config, seed)."""
    columns = list(CSV_COLUMNS)
    for r in rows:
        columns += [k for k in r if k not in columns]
    buf = io.StringIO()
    note = f"# config={config_comment(cfg)} master_seed={cfg.seed}"
    note += " rates=per-code (p_md over active codes, p_fa over inactive codes)"
    if comment_extra:
        note += " " + comment_extra
    buf.write(note + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r.get(c, math.nan)) for c in columns])
    return buf.getvalue()


# collision threshold design


@dataclass(frozen=True)
class DeltaJob:
    cfg: ScenarioConfig
    K: int
    collision_mode: str
    start: int
    stop: int


def _delta_chunk(job: DeltaJob) -> np.ndarray:
    """Collision statistic per trial; estimator failures map to +inf."""
    codebook = build_codebook(job.cfg)
    out = np.empty(job.stop - job.start)
    for n, t in enumerate(range(job.start, job.stop)):
        rep = run_trial(job.cfg, job.K, job.collision_mode, t, codebook).report
        out[n] = math.inf if rep.flags else rep.delta_hat
    return out


def collision_statistics(cfg, K, collision_mode, n_trials, workers=1) -> np.ndarray:
    mode = CollisionMode(collision_mode).value
    jobs = [DeltaJob(cfg, K, mode, a, b) for a, b in _chunks(n_trials)]
    return np.concatenate(map_jobs(_delta_chunk, jobs, workers))


def sweep_eta(cfg: ScenarioConfig, etas, n_trials: int, workers: int = 1) -> list[dict]:
    """Collision false-alarm / mis-detection rates versus threshold.

    False alarms come from K=2 users on distinct codes, mis-detections from
    K=3 users of which two share a code. The statistic does not depend on
    the threshold, so each scenario is simulated once.
    """
    clean = collision_statistics(cfg, 2, CollisionMode.DISTINCT, n_trials, workers)
    shared = collision_statistics(cfg, 3, CollisionMode.SHARED, n_trials, workers)
    rows = []
    for eta in etas:
        rows.append(
            {
                "eta": eta,
                "p_fa": float(np.mean(clean > eta)),
                "p_md": float(np.mean(~(shared > eta))),
                "n_trials": n_trials,
            }
        )
    return rows


def calibrate_flm(cfg: ScenarioConfig, K: int, n_trials: int, target_pfa: float = 1e-2, workers: int = 1) -> float:
    """Threshold factor alpha giving the target per-code false-alarm rate.

    Uses the statistic ratios Z_k / sigma2_hat of the codes left idle in
    trials with K active users.
    """
    jobs = [DeltaJob(cfg, K, CollisionMode.DISTINCT.value, a, b) for a, b in _chunks(n_trials)]
    ratios = np.concatenate(map_jobs(_flm_ratio_chunk, jobs, workers))
    return float(np.quantile(ratios, 1.0 - target_pfa, method="higher"))


def _flm_ratio_chunk(job: DeltaJob) -> np.ndarray:
    codebook = build_codebook(job.cfg)
    vals = []
    for t in range(job.start, job.stop):
        rng = trial_rng(job.cfg.seed, t)
        users = draw_users(job.cfg, job.K, rng, job.collision_mode)
        obs = synthesize(job.cfg, users, rng, codebook)
        z = flm_statistics(obs, codebook)
        s2 = estimate_noise_power(obs)
        idle = np.setdiff1d(np.arange(1, job.cfg.M + 1), [u.code_index for u in users])
        vals.extend(z[idle - 1] / s2 if s2 > 0 else np.full(idle.size, math.inf))
    return np.asarray(vals, dtype=np.float64)
