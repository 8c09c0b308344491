"""Amplitude, timing and power estimation for the detected codes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channel import ObservationSet
from .errors import ContractError, DegenerateTimingSum, NearCollinearCodes
from .scenario import Codebook, ScenarioConfig, steering_matrix
from .subspace import DetectionResult

GRAM_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class AmplitudeEstimates:
    """LS channel-amplitude estimates, one column per detected code.

    ``s_hat`` has shape (Q*V, K_hat) in tile-major subcarrier order.
    """

    s_hat: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False)
    gram_inverse_diag: np.ndarray
    steering: np.ndarray = field(repr=False)
    codes: np.ndarray


@dataclass(frozen=True)
class SyncEstimates:
    theta_hat_f: np.ndarray
    p_hat: np.ndarray


def ls_amplitudes(
    obs: ObservationSet, det: DetectionResult, codebook: Codebook, cfg: ScenarioConfig
) -> AmplitudeEstimates:
    """Solve the normal equations C^H C s = C^H y on every ranging subcarrier."""
    if det.k_hat < 1:
        raise ContractError("LS amplitude estimation needs at least one detected code")
    C = steering_matrix(cfg, codebook, det.detected_codes, det.eps_hat)
    gram = C.conj().T @ C
    gram = 0.5 * (gram + gram.conj().T)
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > GRAM_CONDITION_LIMIT:
        raise NearCollinearCodes(f"Gram matrix condition number {cond:.3g} exceeds 1e12")
    factor = cho_factor(gram, lower=True)
    rhs = C.conj().T @ obs.y.T  # (K, QV)
    s_hat = cho_solve(factor, rhs).T
    inv_diag = np.real(np.diag(cho_solve(factor, np.eye(det.k_hat))))
    return AmplitudeEstimates(s_hat, gram, inv_diag, C, np.asarray(det.detected_codes))


def timing_correlation(s_k, cfg: ScenarioConfig) -> complex:
    """Sum over tiles of S(i_{q,v-1}) * conj(S(i_{q,v}))."""
    s = np.asarray(s_k).reshape(cfg.Q, cfg.V)
    return complex(np.sum(s[:, :-1] * s[:, 1:].conj()))


def ahte_timing(amp: AmplitudeEstimates, k: int, cfg: ScenarioConfig) -> int:
    """Refined timing estimate of the k-th detected code (0-based position).

    The phase of the adjacent-subcarrier correlation gives the delay; the
    result is shifted by -N_GD/2 toward the middle of the IBI-free window.
    """
    if cfg.V < 2:
        raise ContractError("timing estimation needs V >= 2 subcarriers per tile")
    corr = timing_correlation(amp.s_hat[:, k], cfg)
    if corr == 0:
        raise DegenerateTimingSum("adjacent-subcarrier correlation is exactly zero")
    phase = math.atan2(corr.imag, corr.real)
    if phase == -math.pi:
        phase = math.pi
    theta = math.floor(cfg.N / (2.0 * math.pi) * phase - cfg.N_GD / 2.0 + 0.5)
    # keep the estimate inside (-N/2, N/2]; the phase only determines it modulo N
    if theta <= -cfg.N // 2:
        theta += cfg.N
    return int(theta)


def ahpe_power(amp: AmplitudeEstimates, k: int, sigma2_hat: float, cfg: ScenarioConfig) -> float:
    s = amp.s_hat[:, k]
    return float(np.mean(s.real**2 + s.imag**2) - sigma2_hat * amp.gram_inverse_diag[k])


def ahpe_variance(power: float, sigma2_k: float, QV: int) -> float:
    """Predicted variance of the power estimate for known CFOs and noise power."""
    return sigma2_k * (2.0 * power + sigma2_k) / QV


def estimate_sync(amp: AmplitudeEstimates, sigma2_hat: float, cfg: ScenarioConfig) -> SyncEstimates:
    """Timing and power for every detected code.

    A code whose timing sum degenerates gets the sentinel timing
    ``-(N + 1)``, which always lands outside the IBI-free window.
    """
    K = amp.s_hat.shape[1]
    theta = np.empty(K, dtype=np.int64)
    for k in range(K):
        try:
            theta[k] = ahte_timing(amp, k, cfg)
        except DegenerateTimingSum:
            theta[k] = -(cfg.N + 1)
    power = np.array([ahpe_power(amp, k, sigma2_hat, cfg) for k in range(K)])
    return SyncEstimates(theta, power)
