"""Per-user ground truth and frequency-domain ranging observations.

Observations follow the ICI-free model: on every ranging subcarrier the
M-length vector across the slot is a sum of CFO-rotated codes weighted by
the phase-rotated channel gains, plus white circular Gaussian noise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .scenario import (
    Codebook,
    ScenarioConfig,
    build_codebook,
    steering_matrix,
    subchannel_indices,
)


class CollisionMode(str, enum.Enum):
    DISTINCT = "DistinctCodes"
    SHARED = "ForceSharedCode"


@dataclass(frozen=True)
class UserGroundTruth:
    code_index: int
    theta: int
    eps: float
    taps: np.ndarray = field(repr=False)
    L_k: int
    P: float


@dataclass(frozen=True)
class ObservationSet:
    """DFT outputs of one ranging subchannel over a slot.

    ``y[n]`` is the M-vector on subcarrier ``indices[n]`` (tile-major order)
    and ``guard_bins`` holds the M x 2*N_0 null-subcarrier outputs.
    """

    y: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    guard_bins: np.ndarray = field(repr=False)
    sigma2_true: float


def tap_variance_scale(L_k: int) -> float:
    """sigma_h^2 such that the exponential profile has unit total power.

    sum_{l<L_k} exp(-l/L_k) = (1 - e^-1) / (1 - e^(-1/L_k)), so the scale is
    its reciprocal.
    """
    return (1.0 - np.exp(-1.0 / L_k)) / (1.0 - np.exp(-1.0))


def power_delay_profile(L_k: int) -> np.ndarray:
    ell = np.arange(L_k)
    return tap_variance_scale(L_k) * np.exp(-ell / L_k)


def channel_frequency_response(taps, i, N: int):
    """H(i) = sum_l h(l) exp(-j*2*pi*l*i/N); ``i`` may be an array."""
    taps = np.asarray(taps)
    i = np.asarray(i)
    ell = np.arange(taps.size)
    return _phase_ramp(np.multiply.outer(i, ell), N) @ taps


def _phase_ramp(n, N: int):
    """exp(-j*2*pi*n/N); integer arguments are reduced mod N first for accuracy."""
    n = np.asarray(n)
    if np.issubdtype(n.dtype, np.integer):
        n = np.mod(n, N)
    return np.exp(-2j * np.pi * n / N)


def ranging_amplitude(user: UserGroundTruth, i, N: int):
    """S_k(theta_k, i): timing phase ramp times the channel response."""
    i = np.asarray(i)
    return _phase_ramp(np.multiply(user.theta, i), N) * channel_frequency_response(user.taps, i, N)


def received_power(cfg: ScenarioConfig, taps, theta: int) -> float:
    idx = subchannel_indices(cfg)
    s = _phase_ramp(theta * idx, cfg.N) * channel_frequency_response(taps, idx, cfg.N)
    return float(np.mean(np.abs(s) ** 2))


def complex_normal(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    """Circular complex Gaussian samples with E|z|^2 = var."""
    scale = np.sqrt(var / 2.0)
    z = rng.standard_normal(shape + (2,) if isinstance(shape, tuple) else (shape, 2))
    return scale * (z[..., 0] + 1j * z[..., 1])


def _draw_user(cfg, rng, code, eps_choices) -> UserGroundTruth:
    lo = max(1, cfg.L - 6)
    L_k = int(rng.integers(lo, cfg.L + 1))
    h = complex_normal(rng, L_k, 1.0) * np.sqrt(power_delay_profile(L_k))
    taps = np.zeros(cfg.L, dtype=np.complex128)
    taps[:L_k] = h
    theta = int(rng.integers(0, cfg.theta_max + 1))
    if eps_choices is None:
        eps = float(rng.uniform(-cfg.eps_max, cfg.eps_max))
    else:
        eps = float(eps_choices[rng.integers(eps_choices.size)])
    taps.setflags(write=False)
    return UserGroundTruth(int(code), theta, eps, taps, L_k, received_power(cfg, taps, theta))


def draw_users(
    cfg: ScenarioConfig,
    K: int,
    rng: np.random.Generator,
    collision_mode: CollisionMode | str = CollisionMode.DISTINCT,
    eps_grid: np.ndarray | None = None,
) -> list[UserGroundTruth]:
    """Draw K ranging users with Rayleigh exponential-profile channels.

    With ``eps_grid`` the CFOs are picked among grid points inside
    [-eps_max, eps_max] instead of uniformly on the interval.
    """
    mode = CollisionMode(collision_mode)
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    if mode is CollisionMode.DISTINCT:
        if K > cfg.M:
            raise ConfigError(f"K={K} users cannot use distinct codes out of M={cfg.M}")
        codes = rng.choice(cfg.M, size=K, replace=False) + 1
    else:
        if K < 2 or K - 1 > cfg.M:
            raise ConfigError(f"ForceSharedCode needs 2 <= K <= M+1, got K={K}")
        distinct = rng.choice(cfg.M, size=K - 1, replace=False) + 1
        codes = np.append(distinct, distinct[rng.integers(K - 1)])
    choices = None
    if eps_grid is not None:
        eps_grid = np.asarray(eps_grid)
        choices = eps_grid[np.abs(eps_grid) <= cfg.eps_max]
    return [_draw_user(cfg, rng, c, choices) for c in codes]


def synthesize(
    cfg: ScenarioConfig,
    users: list[UserGroundTruth],
    rng: np.random.Generator,
    codebook: Codebook | None = None,
) -> ObservationSet:
    if not users:
        raise ConfigError("synthesize needs at least one user")
    codebook = codebook or build_codebook(cfg)
    idx = subchannel_indices(cfg)
    C = steering_matrix(cfg, codebook, [u.code_index for u in users], [u.eps for u in users])
    S = np.stack([ranging_amplitude(u, idx, cfg.N) for u in users], axis=1)  # (QV, K)
    y = S @ C.T
    sigma2 = cfg.sigma2
    if sigma2 > 0:
        y = y + complex_normal(rng, y.shape, sigma2)
        guard = complex_normal(rng, (cfg.M, 2 * cfg.N_0), sigma2)
    else:
        guard = np.zeros((cfg.M, 2 * cfg.N_0), dtype=np.complex128)
    return ObservationSet(y, idx, guard, sigma2)


def dump_observation(obs: ObservationSet, path) -> None:
    """Write one line per (subcarrier, symbol): ``i m real imag``."""
    lines = ["# subcarrier symbol real imag"]
    for i, vec in zip(obs.indices, obs.y):
        for m, v in enumerate(vec):
            lines.append(f"{int(i)} {m} {v.real:.17g} {v.imag:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_observation(path) -> tuple[np.ndarray, np.ndarray]:
    """Read back a dump as (indices, y) with y shaped (n_subcarriers, M)."""
    rows = np.loadtxt(path, comments="#", ndmin=2)
    sub = rows[:, 0].astype(np.int64)
    sym = rows[:, 1].astype(np.int64)
    M = int(sym.max()) + 1
    y = (rows[:, 2] + 1j * rows[:, 3]).reshape(-1, M)
    return sub[::M], y
