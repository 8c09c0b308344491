"""System configuration, ranging subcarrier layout and code books."""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError


class CodeFamily(str, enum.Enum):
    FOURIER = "Fourier"
    WALSH_HADAMARD = "WalshHadamard"


@dataclass(frozen=True)
class ScenarioConfig:
    """All constants of one ranging subchannel simulation.

    Defaults reproduce the IEEE 802.16e-like set-up: N=1024, 80 guard
    subcarriers per edge, 18 subchannels of 4 tiles x 2 subcarriers and a
    4-symbol ranging slot.
    """

    N: int = 1024
    N_0: int = 80
    Q: int = 4
    V: int = 2
    R: int = 18
    M: int = 4
    N_G: int = 128
    N_GD: int = 48
    L: int = 14
    theta_max: int = 114
    snr_db: float = 16.0
    eps_max: float = 0.05
    n_eps_grid: int = 400
    eta: float = 0.05
    seed: int = 0
    code_family: CodeFamily = CodeFamily.FOURIER
    subchannel: int = 0
    refine_peak: bool = False

    def __post_init__(self):
        if isinstance(self.code_family, str) and not isinstance(self.code_family, CodeFamily):
            object.__setattr__(self, "code_family", CodeFamily(self.code_family))
        self.validate()

    # derived quantities
    @property
    def N_U(self) -> int:
        return self.N - 2 * self.N_0

    @property
    def N_T(self) -> int:
        return self.N + self.N_G

    @property
    def QV(self) -> int:
        return self.Q * self.V

    @property
    def sigma2(self) -> float:
        """Noise variance 1/SNR; zero when snr_db is +inf."""
        if math.isinf(self.snr_db) and self.snr_db > 0:
            return 0.0
        return 10.0 ** (-self.snr_db / 10.0)

    @property
    def cfo_phase_step(self) -> float:
        """Phase advance per symbol per unit CFO, 2*pi*N_T/N."""
        return 2.0 * math.pi * self.N_T / self.N

    def validate(self) -> None:
        for name in ("N", "Q", "V", "R", "M", "n_eps_grid"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("N_0", "N_G", "N_GD", "theta_max"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.L < 1:
            raise ConfigError(f"L must be >= 1, got {self.L}")
        if self.N_U <= 0:
            raise ConfigError(f"N_U = N - 2*N_0 must be positive, got {self.N_U}")
        if self.N_U % self.Q:
            raise ConfigError(f"N_U={self.N_U} must be divisible by Q={self.Q}")
        if (self.N_U // self.Q) % self.R:
            raise ConfigError(f"N_U/Q={self.N_U // self.Q} must be divisible by R={self.R}")
        if self.V > self.N_U // (self.Q * self.R):
            raise ConfigError("tiles of adjacent subchannels overlap: V > N_U/(Q*R)")
        if self.M & (self.M - 1):
            raise ConfigError(f"M must be a power of two, got {self.M}")
        if self.N_G < self.theta_max + self.L:
            raise ConfigError(
                f"quasi-synchronous condition N_G >= theta_max + L violated: "
                f"{self.N_G} < {self.theta_max} + {self.L}"
            )
        if self.eps_max < 0:
            raise ConfigError(f"eps_max must be non-negative, got {self.eps_max}")
        bound = acquisition_range(self)
        if self.eps_max >= bound:
            raise ConfigError(
                f"eps_max={self.eps_max} violates the code identifiability bound "
                f"|eps| < N/(2*M*N_T) = {bound:.6g}"
            )
        if not 0 <= self.subchannel < self.R:
            raise ConfigError(f"subchannel must be in [0, {self.R}), got {self.subchannel}")
        if self.eta < 0:
            raise ConfigError(f"eta must be non-negative, got {self.eta}")

    def replace(self, **changes) -> ScenarioConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["code_family"] = self.code_family.value
        return d


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}


def _parse_value(key: str, text: str):
    kind = _FIELD_TYPES[key]
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "CodeFamily":
            return CodeFamily(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc
    raise ConfigError(f"unsupported field type for {key}")  # pragma: no cover


def parse_assignments(pairs) -> dict:
    """Parse ``key=value`` strings into typed overrides, rejecting unknown keys."""
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"expected key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _parse_value(key, value)
    return out


def load_config(path, overrides=()) -> ScenarioConfig:
    """Read a flat ``key = value`` file; ``#`` starts a comment."""
    lines = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    values = parse_assignments(lines)
    values.update(parse_assignments(overrides))
    return ScenarioConfig(**values)


def dump_config(cfg: ScenarioConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())


def config_comment(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True)


def acquisition_range(cfg: ScenarioConfig) -> float:
    """Largest |eps| for which rotated codes stay identifiable: N/(2*M*N_T)."""
    return cfg.N / (2.0 * cfg.M * (cfg.N + cfg.N_G))


def cfo_grid(cfg: ScenarioConfig) -> np.ndarray:
    """CFO trial values scanned by MUSIC: n_eps_grid+1 points, symmetric about 0.

    The scan half-width stays one step inside the acquisition range so the
    ambiguous boundary +-N/(2*M*N_T) is never probed.
    """
    step = 2.0 * cfg.eps_max / cfg.n_eps_grid
    half = min(cfg.eps_max, acquisition_range(cfg) - step)
    return np.linspace(-half, half, cfg.n_eps_grid + 1)


def tile_indices(cfg: ScenarioConfig, r: int, q: int) -> list[int]:
    """Subcarrier indices of tile ``q`` in ranging subchannel ``r``."""
    if not 0 <= r < cfg.R:
        raise IndexError(f"subchannel index {r} out of range [0, {cfg.R})")
    if not 0 <= q < cfg.Q:
        raise IndexError(f"tile index {q} out of range [0, {cfg.Q})")
    base = q * cfg.N_U // cfg.Q + r * cfg.N_U // (cfg.Q * cfg.R) + cfg.N_0
    return [base + v for v in range(cfg.V)]


def subchannel_indices(cfg: ScenarioConfig, r: int | None = None) -> np.ndarray:
    """All Q*V indices of one subchannel, tile-major (q outer, v inner)."""
    r = cfg.subchannel if r is None else r
    return np.array([i for q in range(cfg.Q) for i in tile_indices(cfg, r, q)], dtype=np.int64)


@dataclass(frozen=True)
class Codebook:
    """Orthogonal unit-modulus code set; row ``k-1`` is code ``k``."""

    codes: np.ndarray = field(repr=False)

    @property
    def M(self) -> int:
        return self.codes.shape[0]

    def code(self, k: int) -> np.ndarray:
        """Return code ``k`` (1-based)."""
        return self.codes[k - 1]


def hadamard(m: int) -> np.ndarray:
    if m < 1 or m & (m - 1):
        raise ConfigError(f"Walsh-Hadamard codes need a power-of-two length, got {m}")
    h = np.ones((1, 1))
    while h.shape[0] < m:
        h = np.block([[h, h], [h, -h]])
    return h


def build_codebook(cfg: ScenarioConfig, family: CodeFamily | str | None = None) -> Codebook:
    family = CodeFamily(family) if family is not None else cfg.code_family
    M = cfg.M
    if family is CodeFamily.FOURIER:
        m = np.arange(M)
        codes = np.exp(2j * np.pi * np.outer(m, m) / M)
    else:
        codes = hadamard(M).astype(np.complex128)
    codes.setflags(write=False)
    return Codebook(codes)


def cfo_rotation(cfg: ScenarioConfig, eps: float) -> np.ndarray:
    """Diagonal of the per-symbol CFO rotation exp(j*2*pi*m*eps*N_T/N)."""
    return np.exp(1j * cfg.cfo_phase_step * eps * np.arange(cfg.M))


def steering_matrix(cfg: ScenarioConfig, codebook: Codebook, codes, eps) -> np.ndarray:
    """M x K matrix whose columns are the CFO-rotated codes."""
    codes = np.asarray(codes, dtype=np.int64)
    eps = np.asarray(eps, dtype=np.float64)
    rot = np.exp(1j * cfg.cfo_phase_step * np.outer(np.arange(cfg.M), eps))
    return codebook.codes[codes - 1].T * rot
