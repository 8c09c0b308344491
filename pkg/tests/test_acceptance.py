"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from conftest import record
from ofdma_ranging.channel import ObservationSet, complex_normal, draw_users, synthesize
from ofdma_ranging.estimators import ahpe_power, ahpe_variance, ls_amplitudes
from ofdma_ranging.montecarlo import (
    SweepSpec,
    collision_statistics,
    default_workers,
    format_csv,
    run_point,
    run_sweep,
    run_trial,
    trial_rng,
)
from ofdma_ranging.scenario import ScenarioConfig, acquisition_range, build_codebook, cfo_grid, cfo_rotation
from ofdma_ranging.subspace import DetectionResult, hermitian_evd, mdl_order
from ofdma_ranging import kernels
from ofdma_ranging.errors import ConfigError

CFG = ScenarioConfig()
WORKERS = max(2, default_workers())


def test_criterion_1_noiseless_oracle():
    cfg = CFG.replace(snr_db=math.inf, eps_max=0.1)
    codebook = build_codebook(cfg)
    grid = cfo_grid(cfg)
    lo, hi = cfg.L - cfg.N_GD - 1, 0
    t0 = time.perf_counter()
    good = 0
    for t in range(500):
        out = run_trial(cfg, 2, trial_index=t, codebook=codebook, eps_on_grid=True)
        rep = out.report
        truth = sorted((u.code_index, u.eps, u.theta) for u in out.users)
        ok = (
            rep.k_hat == 2
            and list(rep.detected_codes) == [c for c, _, _ in truth]
            and all(np.min(np.abs(grid - e)) == 0 for _, e, _ in truth)
            and list(rep.eps_hat) == [e for _, e, _ in truth]
            and all(lo <= th - theta <= hi for th, (_, _, theta) in zip(rep.theta_hat_f, truth))
            and abs(rep.delta_hat) < 1e-9
            and not rep.collided
        )
        good += ok
    elapsed = time.perf_counter() - t0
    passed = good == 500 and elapsed < 10.0
    record(1, "noiseless end-to-end oracle", passed, f"{good}/500 exact trials in {elapsed:.2f} s (limit 10 s)")
    assert passed


def test_criterion_2_identifiability_boundary():
    codebook = build_codebook(CFG)
    b = acquisition_range(CFG)
    worst = max(
        np.linalg.norm(cfo_rotation(CFG, b) * codebook.code(k) - cfo_rotation(CFG, -b) * codebook.code(k + 1))
        for k in range(1, 4)
    )
    rejected = []
    for eps_max in (b, b + 1e-9, 0.2):
        try:
            CFG.replace(eps_max=eps_max)
            rejected.append(False)
        except ConfigError:
            rejected.append(True)
    accepted_inside = CFG.replace(eps_max=0.999 * b).eps_max < b
    passed = worst < 1e-10 and all(rejected) and accepted_inside
    record(2, "identifiability boundary", passed,
           f"max boundary mismatch {worst:.2e} (limit 1e-10), eps_max >= {b:.6f} rejected: {all(rejected)}")
    assert passed


def test_criterion_3_cfo_accuracy_vs_theory():
    t0 = time.perf_counter()
    k2 = run_point(CFG, 2, 10_000, workers=WORKERS)
    k3 = run_point(CFG, 3, 10_000, workers=WORKERS)
    elapsed = time.perf_counter() - t0
    gap_db = 20 * math.log10(k2.rmse_eps / k2.rmse_eps_theory)
    passed = gap_db <= 3.0 and k3.rmse_eps <= 1e-2 and elapsed < 300
    record(3, "CFO RMSE vs theory", passed,
           f"K=2 RMSE {k2.rmse_eps:.3e} vs theory {k2.rmse_eps_theory:.3e} gap {gap_db:+.2f} dB (limit +3 dB); "
           f"K=3 RMSE {k3.rmse_eps:.3e} (limit 1e-2); {elapsed:.0f} s (limit 300 s)")
    assert passed


def test_criterion_4_power_estimator():
    cfg = CFG
    codebook = build_codebook(cfg)
    errors, predicted = [], []
    for t in range(10_000):
        rng = trial_rng(cfg.seed + 4, t)
        users = sorted(draw_users(cfg, 2, rng), key=lambda u: u.code_index)
        obs = synthesize(cfg, users, rng, codebook)
        det = DetectionResult(2, np.array([u.code_index for u in users]), np.array([u.eps for u in users]),
                              np.zeros(cfg.M), cfg.sigma2)
        amp = ls_amplitudes(obs, det, codebook, cfg)
        for k, u in enumerate(users):
            errors.append(ahpe_power(amp, k, cfg.sigma2, cfg) - u.P)
            predicted.append(ahpe_variance(u.P, cfg.sigma2 * amp.gram_inverse_diag[k], cfg.QV))
    errors = np.asarray(errors)
    bias = errors.mean()
    se = errors.std(ddof=1) / math.sqrt(errors.size)
    var_meas = np.mean(errors**2)
    var_theory = float(np.mean(predicted))
    rel = var_meas / var_theory - 1
    passed = abs(bias) < 2 * se and abs(rel) <= 0.10
    record(4, "power estimator bias and variance", passed,
           f"bias {bias:+.2e} (2 SE = {2 * se:.2e}); variance {var_meas:.4e} vs predicted {var_theory:.4e} "
           f"({100 * rel:+.1f}%, limit 10%)")
    assert passed


def test_criterion_5_collision_operating_point():
    clean = collision_statistics(CFG, 2, "DistinctCodes", 10_000, WORKERS)
    shared = collision_statistics(CFG, 3, "ForceSharedCode", 10_000, WORKERS)
    p_fa = float(np.mean(clean > CFG.eta))
    p_md = float(np.mean(~(shared > CFG.eta)))
    passed = p_fa <= 1e-2 and p_md <= 1e-2
    record(5, "collision detector at eta=0.05", passed,
           f"P_fa {p_fa:.4f} (limit 0.01, {'ok' if p_fa <= 1e-2 else 'exceeded'}); "
           f"P_md {p_md:.4f} (limit 0.01, {'ok' if p_md <= 1e-2 else 'exceeded'})")
    assert passed


def _trend_metrics(cfg, K, n):
    codebook = build_codebook(cfg)
    miss, active, sq, terr = 0, 0, [], []
    lo, hi = cfg.L - cfg.N_GD - 1, 0
    for t in range(n):
        out = run_trial(cfg, K, trial_index=t, codebook=codebook)
        miss += out.missed_codes
        active += len(out.active_codes)
        sq += out.eps_sq_err
        terr += [not lo <= d <= hi for d in out.timing_err]
    sq, terr = np.asarray(sq), np.asarray(terr, dtype=float)
    p_md = miss / active
    rmse = math.sqrt(sq.mean())
    p_t = terr.mean()
    return {
        "p_md": (p_md, math.sqrt(max(p_md * (1 - p_md), 1e-12) / active)),
        "rmse_eps": (rmse, sq.std(ddof=1) / (2 * rmse * math.sqrt(sq.size))),
        "p_timing_err": (p_t, math.sqrt(max(p_t * (1 - p_t), 1e-12) / terr.size)),
    }


def _count_violations(points):
    bad, tolerated = 0, True
    for (a, sa), (b, sb) in zip(points[:-1], points[1:]):
        if b > a:
            bad += 1
            tolerated &= (b - a) <= 2 * math.hypot(sa, sb)
    return bad, bad <= 1 and tolerated


def test_criterion_6_trends():
    snrs = [4.0, 8.0, 12.0, 16.0, 20.0]
    curves = [_trend_metrics(CFG.replace(snr_db=s), 2, 1000) for s in snrs]
    k3 = _trend_metrics(CFG, 3, 1000)
    k2_16 = curves[3]
    notes, passed = [], True
    for name in ("p_md", "rmse_eps", "p_timing_err"):
        bad, ok = _count_violations([c[name] for c in curves])
        above = k3[name][0] >= k2_16[name][0]
        passed &= ok and above
        notes.append(f"{name}: {bad} rises{'' if ok else ' (too many)'}, K=3 {k3[name][0]:.3g} "
                     f"{'>=' if above else '<'} K=2 {k2_16[name][0]:.3g}")
    record(6, "trend suite over SNR 4..20 dB", passed, "; ".join(notes))
    assert passed


def test_criterion_7_numerical_kernels():
    rng = np.random.default_rng(7)
    evd_ok = 0
    names = ["python"] + (["cython"] if kernels.compiled is not None else [])
    for _ in range(1000):
        a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        a = a + a.conj().T
        good = True
        for name in names:
            w, v, _ = kernels.backend(name).jacobi_evd(a)
            good &= np.abs(v.conj().T @ v - np.eye(4)).max() <= 1e-10
            good &= np.linalg.norm(v @ np.diag(w) @ v.conj().T - a) <= 1e-9 * np.linalg.norm(a)
        w, v = hermitian_evd(a)
        good &= np.linalg.norm(v @ np.diag(w) @ v.conj().T - a) <= 1e-9 * np.linalg.norm(a)
        evd_ok += bool(good)

    codebook = build_codebook(CFG)
    ls_ok = 0
    for _ in range(1000):
        K = int(rng.integers(1, 4))
        codes = np.sort(rng.choice(4, K, replace=False) + 1)
        eps = rng.uniform(-0.1, 0.1, K)
        y = rng.standard_normal((8, 4)) + 1j * rng.standard_normal((8, 4))
        obs = ObservationSet(y, np.arange(8), np.zeros((4, 2), dtype=complex), 0.0)
        det = DetectionResult(K, codes, eps, np.zeros(4), 0.0)
        amp = ls_amplitudes(obs, det, codebook, CFG)
        resid = y - amp.s_hat @ amp.steering.T
        ls_ok += np.abs(amp.steering.conj().T @ resid.T).max() <= 1e-9 * np.abs(y).max()

    mdl_ok = 0
    for _ in range(1000):
        rank = int(rng.integers(0, 4))
        sigma2 = float(10 ** rng.uniform(-3, 1))
        spikes = sigma2 * 10 ** rng.uniform(2, 4, rank)
        lam = np.sort(np.concatenate([spikes, np.full(4 - rank, sigma2)]))[::-1]
        mdl_ok += mdl_order(lam, sigma2, 8, 4) == rank
    mdl_ok += mdl_order([100.0, 100.0, 1.0, 1.0], 1.0, 8, 4) == 2
    mdl_ok += mdl_order([1.0, 1.0, 1.0, 1.0], 1.0, 8, 4) == 0

    passed = evd_ok == 1000 and ls_ok == 1000 and mdl_ok == 1002
    record(7, "numerical kernels", passed,
           f"EVD {evd_ok}/1000 ({'+'.join(names)}), LS orthogonality {ls_ok}/1000, MDL planted rank {mdl_ok}/1002")
    assert passed


def test_criterion_8_parallel_determinism():
    spec = SweepSpec("snr_db", (8.0, 16.0), 1000, CFG, K=2, flm_alpha=4.0)
    serial = format_csv(run_sweep(spec, workers=1), CFG)
    parallel = format_csv(run_sweep(spec, workers=WORKERS), CFG)
    passed = serial.encode() == parallel.encode()
    record(8, "serial vs parallel sweep", passed,
           f"1 worker vs {WORKERS} workers: {'byte-identical' if passed else 'different'} ({len(serial)} bytes)")
    assert passed
