"""Correlation code detector and power estimator used as the comparison scheme."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ObservationSet
from .errors import ContractError
from .scenario import Codebook, ScenarioConfig


@dataclass(frozen=True)
class FlmResult:
    z: np.ndarray
    detected_codes: np.ndarray
    p_hat_flm: np.ndarray
    threshold_factor: float


def flm_statistics(obs: ObservationSet, codebook: Codebook) -> np.ndarray:
    """Z_k = (1/(QV M^2)) sum |c_k^H y|^2 for every code k."""
    corr = obs.y @ codebook.codes.conj().T  # (QV, M)
    M = codebook.M
    return np.mean(corr.real**2 + corr.imag**2, axis=0) / M**2


def flm_detect(
    obs: ObservationSet, codebook: Codebook, sigma2_hat: float, alpha: float, cfg: ScenarioConfig
) -> FlmResult:
    if alpha <= 0:
        raise ContractError(f"alpha must be positive, got {alpha}")
    z = flm_statistics(obs, codebook)
    active = np.flatnonzero(z > alpha * sigma2_hat)
    # Z_k is already averaged over the QV subcarriers
    p_hat = z[active] - sigma2_hat / cfg.M
    return FlmResult(z, active + 1, p_hat, float(alpha))
