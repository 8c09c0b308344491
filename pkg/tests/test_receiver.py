import dataclasses
import math
import os
import subprocess
import sys

import numpy as np

from ofdma_ranging import kernels
from ofdma_ranging.channel import complex_normal, draw_users, synthesize
from ofdma_ranging.receiver import process_subchannel
from ofdma_ranging.scenario import ScenarioConfig, build_codebook

CFG = ScenarioConfig()
CB = build_codebook(CFG)


def test_report_carries_all_stages():
    rng = np.random.default_rng(0)
    obs = synthesize(CFG, draw_users(CFG, 2, rng), rng, CB)
    rep = process_subchannel(obs, CFG, CB, flm_alpha=3.0)
    assert rep.k_hat == rep.detected_codes.size == rep.eps_hat.size == rep.theta_hat_f.size == rep.p_hat.size
    assert rep.correlation.eigvals.shape == (4,)
    assert rep.mdl_scores.shape == (4,)
    assert rep.detection.music_peaks.shape == (4,)
    assert rep.amplitudes.s_hat.shape == (CFG.QV, rep.k_hat)
    assert rep.flm is not None and rep.reliable == (not rep.collided)


def test_empty_subchannel():
    rng = np.random.default_rng(1)
    empty = 0
    for _ in range(200):
        obs = synthesize(CFG, draw_users(CFG, 1, rng), rng, CB)
        quiet = dataclasses.replace(obs, y=complex_normal(rng, obs.y.shape, CFG.sigma2))
        rep = process_subchannel(quiet, CFG, CB)
        if rep.k_hat == 0:
            empty += 1
            assert rep.amplitudes is None and rep.detected_codes.size == 0
            assert rep.delta_hat < CFG.eta and not rep.collided
    assert empty >= 180


def test_estimator_failure_marks_slot_unreliable():
    noiseless = CFG.replace(snr_db=math.inf)
    rng = np.random.default_rng(2)
    obs = synthesize(noiseless, draw_users(noiseless, 2, rng), rng, CB)
    zero = dataclasses.replace(obs, y=np.zeros_like(obs.y))
    # no energy anywhere: nothing is declared and nothing is flagged
    rep = process_subchannel(zero, noiseless, CB)
    assert rep.k_hat == 0 and not rep.collided
    # energy on a single subcarrier leaves every adjacent-subcarrier product zero
    y = np.zeros_like(obs.y)
    y[0] = 5 * CB.code(1)
    rep = process_subchannel(dataclasses.replace(obs, y=y), noiseless, CB)
    assert rep.k_hat == 1
    assert rep.flags == ("DegenerateTimingSum",) and rep.collided


def test_pure_python_backend_selected_by_environment():
    env = dict(os.environ, OFDMA_RANGING_PURE_PYTHON="1")
    code = "from ofdma_ranging import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    if kernels.compiled is not None:
        env["OFDMA_RANGING_PURE_PYTHON"] = "0"
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "cython"


def test_backends_give_identical_reports():
    if kernels.compiled is None:
        return
    rng = np.random.default_rng(3)
    obs = synthesize(CFG, draw_users(CFG, 3, rng), rng, CB)
    saved = kernels.jacobi_evd, kernels.music_scan
    results = []
    try:
        for name in ("python", "cython"):
            mod = kernels.backend(name)
            kernels.jacobi_evd, kernels.music_scan = mod.jacobi_evd, mod.music_scan
            results.append(process_subchannel(obs, CFG, CB))
    finally:
        kernels.jacobi_evd, kernels.music_scan = saved
    a, b = results
    assert list(a.detected_codes) == list(b.detected_codes)
    np.testing.assert_array_equal(a.eps_hat, b.eps_hat)
    np.testing.assert_allclose(a.p_hat, b.p_hat, rtol=1e-10)
