import math

import numpy as np
import pytest

from ofdma_ranging.errors import ConfigError
from ofdma_ranging.scenario import (
    CodeFamily,
    ScenarioConfig,
    acquisition_range,
    build_codebook,
    cfo_grid,
    dump_config,
    hadamard,
    load_config,
    parse_assignments,
    tile_indices,
)

CFG = ScenarioConfig()


@pytest.mark.parametrize("r,q,expected", [(0, 0, [80, 81]), (1, 0, [92, 93]), (0, 1, [296, 297])])
def test_tile_indices_examples(r, q, expected):
    assert tile_indices(CFG, r, q) == expected


def test_tile_indices_disjoint_and_inside_band():
    all_idx = [i for r in range(CFG.R) for q in range(CFG.Q) for i in tile_indices(CFG, r, q)]
    assert len(set(all_idx)) == CFG.Q * CFG.V * CFG.R == len(all_idx)
    assert min(all_idx) >= CFG.N_0
    assert max(all_idx) < CFG.N - CFG.N_0


@pytest.mark.parametrize("r,q", [(-1, 0), (18, 0), (0, 4), (0, -1)])
def test_tile_indices_range_error(r, q):
    with pytest.raises(IndexError):
        tile_indices(CFG, r, q)


def test_fourier_rows():
    cb = build_codebook(CFG)
    np.testing.assert_allclose(cb.code(1), [1, 1, 1, 1], atol=1e-15)
    np.testing.assert_allclose(cb.code(2), [1, 1j, -1, -1j], atol=1e-15)


def test_hadamard_order_two():
    cb = build_codebook(CFG.replace(M=2), CodeFamily.WALSH_HADAMARD)
    np.testing.assert_array_equal(cb.codes, [[1, 1], [1, -1]])


@pytest.mark.parametrize("family", ["Fourier", "WalshHadamard"])
@pytest.mark.parametrize("M", [2, 4, 8])
def test_codebook_gram_and_modulus(family, M):
    cb = build_codebook(ScenarioConfig(M=M, eps_max=0.01), family)
    np.testing.assert_allclose(cb.codes.conj() @ cb.codes.T, M * np.eye(M), atol=1e-12)
    np.testing.assert_allclose(np.abs(cb.codes), 1.0, atol=1e-15)


@pytest.mark.parametrize("m", [0, 3, 6, 12])
def test_hadamard_rejects_non_power_of_two(m):
    with pytest.raises(ConfigError):
        hadamard(m)


def test_acquisition_range_examples():
    assert acquisition_range(CFG) == pytest.approx(1024 / 9216)
    assert acquisition_range(CFG) == pytest.approx(0.1111111111, rel=1e-9)
    single = ScenarioConfig.__new__(ScenarioConfig)
    object.__setattr__(single, "N", 1024)
    object.__setattr__(single, "M", 1)
    object.__setattr__(single, "N_G", 0)
    assert acquisition_range(single) == 0.5
    big = ScenarioConfig(N=2048, N_0=160, M=8, N_G=256, eps_max=0.05)
    assert acquisition_range(big) == pytest.approx(0.0555555555, rel=1e-9)


def test_validator_rejects_acquisition_bound():
    with pytest.raises(ConfigError, match="identifiability"):
        ScenarioConfig(eps_max=0.2)
    with pytest.raises(ConfigError):
        ScenarioConfig(eps_max=1024 / 9216)


@pytest.mark.parametrize(
    "changes",
    [{"N_0": 512}, {"Q": 5}, {"R": 17}, {"M": 3}, {"N_G": 100}, {"n_eps_grid": 0}],
)
def test_validator_rejects_bad_invariants(changes):
    with pytest.raises(ConfigError):
        ScenarioConfig(**changes)


def test_cfo_grid_symmetric_and_inside_range():
    g = cfo_grid(CFG)
    assert g.size == CFG.n_eps_grid + 1
    assert g[0] == -g[-1]
    assert 0.0 in g
    assert g[-1] <= CFG.eps_max
    wide = CFG.replace(eps_max=0.11)
    assert cfo_grid(wide)[-1] < acquisition_range(wide)


def test_defaults_match_reference_scenario():
    d = CFG.to_dict()
    assert (d["N"], d["N_0"], d["Q"], d["V"], d["R"], d["M"]) == (1024, 80, 4, 2, 18, 4)
    assert (d["N_G"], d["N_GD"], d["L"], d["theta_max"], d["n_eps_grid"], d["eta"]) == (128, 48, 14, 114, 400, 0.05)
    assert CFG.N_T == 1152 and CFG.N_U == 864 and CFG.QV == 8
    assert CFG.sigma2 == pytest.approx(10 ** -1.6)
    assert ScenarioConfig(snr_db=math.inf).sigma2 == 0.0


def test_parse_assignments_types_and_rejects_unknown():
    vals = parse_assignments(["snr_db=12", "M=8", "code_family=WalshHadamard", "refine_peak=true"])
    assert vals == {"snr_db": 12.0, "M": 8, "code_family": CodeFamily("WalshHadamard"), "refine_peak": True}
    with pytest.raises(ConfigError):
        parse_assignments(["bogus=1"])
    with pytest.raises(ConfigError):
        parse_assignments(["M=four"])
    with pytest.raises(ConfigError):
        parse_assignments(["M"])


def test_config_file_roundtrip(tmp_path):
    cfg = CFG.replace(snr_db=8.5, seed=11, code_family=CodeFamily("WalshHadamard"))
    path = tmp_path / "run.cfg"
    path.write_text("# comment line\n" + dump_config(cfg))
    assert load_config(path) == cfg
    assert load_config(path, ["seed=3"]).seed == 3
    path.write_text("nonsense = 1\n")
    with pytest.raises(ConfigError):
        load_config(path)
