"""Base-station processing of one ranging subchannel."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ObservationSet
from .collision import CollisionVerdict, ahcd
from .errors import DegenerateTimingSum, NearCollinearCodes, NoNoiseSubspace
from .estimators import AmplitudeEstimates, SyncEstimates, estimate_sync, ls_amplitudes
from .flm import FlmResult, flm_detect
from .scenario import Codebook, ScenarioConfig, build_codebook
from .subspace import CorrelationEstimate, DetectionResult, detect_codes


@dataclass(frozen=True)
class RangingReport:
    """Everything the BS decides for one subchannel, plus the stage intermediates.

    ``collided`` is True both for a detected collision and for any estimator
    failure; in either case no response message would be sent.
    """

    k_hat: int
    detected_codes: np.ndarray
    eps_hat: np.ndarray
    theta_hat_f: np.ndarray
    p_hat: np.ndarray
    delta_hat: float
    collided: bool
    sigma2_hat: float
    flags: tuple[str, ...] = ()
    correlation: CorrelationEstimate | None = field(default=None, repr=False)
    mdl_scores: np.ndarray | None = field(default=None, repr=False)
    detection: DetectionResult | None = field(default=None, repr=False)
    amplitudes: AmplitudeEstimates | None = field(default=None, repr=False)
    flm: FlmResult | None = field(default=None, repr=False)

    @property
    def reliable(self) -> bool:
        return not self.collided


_EMPTY_I = np.zeros(0, dtype=np.int64)
_EMPTY_F = np.zeros(0)


def process_subchannel(
    obs: ObservationSet,
    cfg: ScenarioConfig,
    codebook: Codebook | None = None,
    flm_alpha: float | None = None,
) -> RangingReport:
    codebook = codebook or build_codebook(cfg)
    flags: list[str] = []
    det, corr, scores = detect_codes(obs, codebook, cfg)
    sigma2_hat = det.sigma2_hat
    flm = flm_detect(obs, codebook, sigma2_hat, flm_alpha, cfg) if flm_alpha else None

    amp = None
    sync = SyncEstimates(_EMPTY_I, _EMPTY_F)
    if det.k_hat > 0:
        try:
            amp = ls_amplitudes(obs, det, codebook, cfg)
        except NearCollinearCodes:
            flags.append("NearCollinearCodes")
    if amp is not None:
        sync = estimate_sync(amp, sigma2_hat, cfg)
        if np.any(sync.theta_hat_f == -(cfg.N + 1)):
            flags.append(DegenerateTimingSum.__name__)

    if flags:
        verdict = CollisionVerdict(float("nan"), cfg.eta, True)
    else:
        verdict = ahcd(obs, det, amp, sigma2_hat, cfg)

    return RangingReport(
        k_hat=det.k_hat,
        detected_codes=det.detected_codes,
        eps_hat=det.eps_hat,
        theta_hat_f=sync.theta_hat_f,
        p_hat=sync.p_hat,
        delta_hat=verdict.delta_hat,
        collided=bool(verdict.collided or flags),
        sigma2_hat=sigma2_hat,
        flags=tuple(flags),
        correlation=corr,
        mdl_scores=scores,
        detection=det,
        amplitudes=amp,
        flm=flm,
    )


def no_noise_subspace_report(obs: ObservationSet, cfg: ScenarioConfig) -> RangingReport:
    """Report for a slot where MUSIC cannot run at all."""
    return RangingReport(
        k_hat=0,
        detected_codes=_EMPTY_I,
        eps_hat=_EMPTY_F,
        theta_hat_f=_EMPTY_I,
        p_hat=_EMPTY_F,
        delta_hat=float("nan"),
        collided=True,
        sigma2_hat=float("nan"),
        flags=(NoNoiseSubspace.__name__,),
    )
