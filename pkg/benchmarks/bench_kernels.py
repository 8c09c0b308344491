"""Compare the compiled and pure-Python kernel backends.

Times the Hermitian Jacobi EVD, the MUSIC grid scan and one full receiver
trial with each backend, and checks that both give the same answers.

    python benchmarks/bench_kernels.py --repeat 200
"""

import argparse
import timeit

import numpy as np

from ofdma_ranging import kernels
from ofdma_ranging.montecarlo import run_trial
from ofdma_ranging.scenario import ScenarioConfig, build_codebook, cfo_grid


def _inputs(cfg, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((cfg.M, cfg.M)) + 1j * rng.standard_normal((cfg.M, cfg.M))
    a = a + a.conj().T
    un = np.linalg.qr(a)[0][:, 2:].copy()
    grid = cfo_grid(cfg)
    phasors = np.exp(1j * cfg.cfo_phase_step * np.outer(grid, np.arange(cfg.M)))
    return a, un, phasors


def _per_call(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat


def bench(name, cfg, repeat):
    mod = kernels.backend(name)
    codebook = build_codebook(cfg)
    a, un, phasors = _inputs(cfg)
    saved = kernels.jacobi_evd, kernels.music_scan
    kernels.jacobi_evd, kernels.music_scan = mod.jacobi_evd, mod.music_scan
    try:
        trial = _per_call(lambda: run_trial(cfg, 2, trial_index=0, codebook=codebook), max(1, repeat // 10))
        result = run_trial(cfg, 2, trial_index=0, codebook=codebook).report
    finally:
        kernels.jacobi_evd, kernels.music_scan = saved
    return {
        "evd": _per_call(lambda: mod.jacobi_evd(a), repeat),
        "music": _per_call(lambda: mod.music_scan(un, codebook.codes, phasors, 1e-30), repeat),
        "trial": trial,
        "eigvals": mod.jacobi_evd(a)[0],
        "scan": mod.music_scan(un, codebook.codes, phasors, 1e-30),
        "report": result,
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200, help="calls per timing sample")
    parser.add_argument("--n-eps-grid", type=int, default=400)
    args = parser.parse_args(argv)

    cfg = ScenarioConfig(n_eps_grid=args.n_eps_grid)
    names = ["python"] + (["cython"] if kernels.compiled is not None else [])
    results = {n: bench(n, cfg, args.repeat) for n in names}

    print(f"active backend: {kernels.BACKEND}; grid points: {cfg.n_eps_grid + 1}")
    print(f"{'kernel':<12}" + "".join(f"{n:>14}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for key, label in (("evd", "jacobi_evd"), ("music", "music_scan"), ("trial", "full trial")):
        row = f"{label:<12}" + "".join(f"{results[n][key] * 1e6:>11.1f} us" for n in names)
        if len(names) > 1:
            row += f"{results['python'][key] / results['cython'][key]:>11.1f}x"
        print(row)

    if len(names) > 1:
        p, c = results["python"], results["cython"]
        same = (
            np.allclose(p["eigvals"], c["eigvals"], atol=1e-12)
            and np.array_equal(p["scan"][0], c["scan"][0])
            and np.allclose(p["scan"][1], c["scan"][1], rtol=1e-10)
            and list(p["report"].detected_codes) == list(c["report"].detected_codes)
            and np.array_equal(p["report"].eps_hat, c["report"].eps_hat)
        )
        print(f"backends agree: {same}")


if __name__ == "__main__":
    main()
