"""Code counting (MDL), noise power, MUSIC CFO estimation and code detection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .channel import ObservationSet
from .errors import ContractError, NoNoiseSubspace, SingularGram
from .scenario import Codebook, ScenarioConfig, cfo_grid, cfo_rotation, steering_matrix

DENOMINATOR_FLOOR = 1e-30
# eigenvalues below this fraction of the largest one are treated as zero
EIGENVALUE_REL_FLOOR = 1e-12


@dataclass(frozen=True)
class CorrelationEstimate:
    r_hat: np.ndarray = field(repr=False)
    eigvals: np.ndarray
    eigvecs: np.ndarray = field(repr=False)

    def noise_subspace(self, k_hat: int) -> np.ndarray:
        return self.eigvecs[:, k_hat:]


@dataclass(frozen=True)
class DetectionResult:
    """Output of the MUSIC code detector; code indices are 1-based."""

    k_hat: int
    detected_codes: np.ndarray
    eps_hat: np.ndarray
    music_peaks: np.ndarray
    sigma2_hat: float


def hermitian_evd(a, tol: float = 1e-10):
    """Eigenvalues (descending) and orthonormal eigenvectors of a Hermitian matrix."""
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if np.abs(a - a.conj().T).max(initial=0.0) > tol * scale:
        raise ContractError("matrix is not Hermitian")
    w, v, _ = kernels.jacobi_evd(a)
    return w, v


def sample_correlation(obs: ObservationSet) -> CorrelationEstimate:
    y = obs.y
    r = y.T @ y.conj() / y.shape[0]
    r = 0.5 * (r + r.conj().T)
    w, v = hermitian_evd(r)
    return CorrelationEstimate(r, w, v)


def estimate_noise_power(obs: ObservationSet) -> float:
    """Average power of the null-subcarrier DFT outputs at both band edges."""
    g = obs.guard_bins
    if g.size == 0:
        raise ContractError("noise power estimation needs at least one guard subcarrier")
    return float(np.mean(g.real**2 + g.imag**2))


def mdl_scores(eigvals, sigma2_hat: float, QV: int, M: int) -> np.ndarray:
    """MDL objective F(K) for K = 0..M-1.

    The smallest eigenvalue is replaced by the noise power estimate and the
    list is re-sorted before evaluating the geometric/arithmetic mean ratio.
    """
    lam = np.array(eigvals, dtype=np.float64)
    if lam.shape != (M,):
        raise ContractError(f"expected {M} eigenvalues, got {lam.shape}")
    lam[-1] = sigma2_hat
    lam = np.sort(lam)[::-1]
    floor = max(1e-30, EIGENVALUE_REL_FLOOR * lam[0])
    lam = np.maximum(lam, floor)
    scores = np.empty(M)
    for k in range(M):
        tail = lam[k:]
        n = M - k
        log_geo = np.mean(np.log(tail))
        log_arith = math.log(np.mean(tail))
        log_rho = min(log_geo - log_arith, 0.0)
        scores[k] = 0.5 * k * (2 * M - k) * math.log(QV) - QV * n * log_rho
    return scores


def mdl_order(eigvals, sigma2_hat: float, QV: int, M: int) -> int:
    return int(np.argmin(mdl_scores(eigvals, sigma2_hat, QV, M)))


def _check_noise_subspace(un: np.ndarray) -> None:
    if un.ndim != 2 or un.shape[1] < 1:
        raise NoNoiseSubspace("noise subspace is empty: K_hat must be smaller than M")


def music_metric(eigvecs_noise, code, eps_trial: float, cfg: ScenarioConfig) -> float:
    """1 / ||Un^H Gamma(eps) c||^2 with the denominator floored at 1e-30."""
    un = np.asarray(eigvecs_noise)
    _check_noise_subspace(un)
    proj = un.conj().T @ (cfo_rotation(cfg, eps_trial) * np.asarray(code))
    den = float(np.sum(proj.real**2 + proj.imag**2))
    return 1.0 / max(den, DENOMINATOR_FLOOR)


def _parabolic_offset(left: float, mid: float, right: float) -> float:
    curv = left - 2.0 * mid + right
    if curv >= 0.0:
        return 0.0
    return 0.5 * (left - right) / curv


def mfe_scan(eigvecs_noise, codebook: Codebook, cfg: ScenarioConfig, grid=None):
    """Grid-search CFO estimate and peak metric for every code in the book.

    Returns ``(eps_hat, peaks)``, both of length M (index ``k-1`` for code k).
    """
    un = np.ascontiguousarray(eigvecs_noise, dtype=np.complex128)
    _check_noise_subspace(un)
    grid = cfo_grid(cfg) if grid is None else np.asarray(grid)
    phasors = np.exp(1j * cfg.cfo_phase_step * np.outer(grid, np.arange(cfg.M)))
    idx, peaks = kernels.music_scan(un, codebook.codes, phasors, DENOMINATOR_FLOOR)
    eps_hat = grid[idx]
    if cfg.refine_peak and grid.size >= 3:
        step = grid[1] - grid[0]
        eps_hat = eps_hat.copy()
        for k, g in enumerate(idx):
            if 0 < g < grid.size - 1:
                code = codebook.codes[k]
                vals = [math.log(music_metric(un, code, grid[g + d], cfg)) for d in (-1, 0, 1)]
                eps_hat[k] = grid[g] + step * _parabolic_offset(*vals)
    return eps_hat, peaks


def mcd_select(peaks, k_hat: int, eps_hat=None, sigma2_hat: float = float("nan")) -> DetectionResult:
    """Declare the k_hat codes with the largest MUSIC peaks as active.

    Ties go to the lowest code index; detected codes are returned sorted.
    """
    peaks = np.asarray(peaks, dtype=np.float64)
    if not 0 <= k_hat <= peaks.size - 1:
        raise ContractError(f"k_hat={k_hat} must lie in [0, {peaks.size - 1}]")
    eps_hat = np.zeros(peaks.size) if eps_hat is None else np.asarray(eps_hat)
    order = np.argsort(-peaks, kind="stable")[:k_hat]
    chosen = np.sort(order)
    return DetectionResult(
        k_hat=int(k_hat),
        detected_codes=chosen + 1,
        eps_hat=eps_hat[chosen].astype(np.float64),
        music_peaks=peaks.copy(),
        sigma2_hat=float(sigma2_hat),
    )


def detect_codes(obs: ObservationSet, codebook: Codebook, cfg: ScenarioConfig):
    """Run the whole subspace stage; returns (DetectionResult, CorrelationEstimate, mdl scores)."""
    corr = sample_correlation(obs)
    sigma2_hat = estimate_noise_power(obs)
    scores = mdl_scores(corr.eigvals, sigma2_hat, obs.y.shape[0], cfg.M)
    k_hat = int(np.argmin(scores))
    eps_hat, peaks = mfe_scan(corr.noise_subspace(k_hat), codebook, cfg)
    det = mcd_select(peaks, k_hat, eps_hat, sigma2_hat)
    return det, corr, scores


def mfe_error_variance(
    cfg: ScenarioConfig,
    codebook: Codebook,
    codes,
    eps,
    k: int,
    power: float,
    sigma2: float,
) -> float:
    """Large-sample MUSIC CFO error variance for user ``k`` (0-based position).

    ``codes`` and ``eps`` describe all active users; ``power`` is P_k.
    """
    C = steering_matrix(cfg, codebook, codes, eps)
    if C.shape[1] >= cfg.M:
        raise NoNoiseSubspace("CFO variance prediction requires K < M")
    gram = C.conj().T @ C
    if np.linalg.cond(gram) > 1e12:
        raise SingularGram("C^H C is singular for the given codes and CFOs")
    proj = np.eye(cfg.M) - C @ np.linalg.solve(gram, C.conj().T)
    d = np.arange(cfg.M) * C[:, k]
    quad = float(np.real(d.conj() @ proj @ d))
    if quad <= 0.0:
        raise SingularGram("derivative vector lies in the signal subspace")
    lead = sigma2 * cfg.N**2 / (8.0 * math.pi**2 * cfg.QV * cfg.N_T**2 * power)
    return lead / quad
