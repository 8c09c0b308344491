"""Residual-energy collision detector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ObservationSet
from .estimators import AmplitudeEstimates
from .scenario import ScenarioConfig
from .subspace import DetectionResult


@dataclass(frozen=True)
class CollisionVerdict:
    delta_hat: float
    threshold: float
    collided: bool


def residual_statistic(obs: ObservationSet, amp: AmplitudeEstimates | None, k_hat: int, sigma2_hat: float) -> float:
    y = obs.y
    resid = y if amp is None else y - amp.s_hat @ amp.steering.T
    energy = float(np.mean(np.sum(resid.real**2 + resid.imag**2, axis=1)))
    M = y.shape[1]
    return energy - sigma2_hat * (M - k_hat)


def ahcd(
    obs: ObservationSet,
    det: DetectionResult,
    amp: AmplitudeEstimates | None,
    sigma2_hat: float,
    cfg: ScenarioConfig,
) -> CollisionVerdict:
    """Declare a collision when the LS fit leaves more energy than noise explains.

    ``amp`` may be None only when no code was detected; the residual is then
    the raw observation.
    """
    if amp is None and det.k_hat > 0:
        raise ValueError("amplitude estimates are required when codes were detected")
    delta = residual_statistic(obs, amp, det.k_hat, sigma2_hat)
    return CollisionVerdict(delta, cfg.eta, delta > cfg.eta)
