import json
import os
import pathlib

import numpy as np
import pytest

import spinforge as sf


def test_levels_and_inversion():
    exact = sf.level_frequencies()
    first = sf.level_frequencies(method="perturbative")
    assert abs(exact["wE_at_nI_0_Hz"] - 2.6991e9) < 1e6
    order = ["wN_m1_at_es_m1_Hz", "wN_p1_at_es_m1_Hz", "wN_p1_at_es_0_Hz",
             "wN_m1_at_es_0_Hz", "wE_at_nI_m1_Hz", "wE_at_nI_0_Hz"]
    back = sf.fit_params([first[k] for k in order])
    assert back["Bz_G"] == pytest.approx(sf.default_params()["Bz_G"], rel=1e-9)
    with pytest.raises(ValueError):
        sf.level_frequencies(method="guess")


def test_channel_math():
    ident = np.eye(16)
    assert sf.avg_gate_fidelity(ident, ident) == 1.0
    assert sf.avg_gate_fidelity(sf.depolarizing(2, 0.0), ident) == pytest.approx(0.25)
    eps = 1e-3
    rz = np.diag([np.exp(-0.5j * eps), np.exp(0.5j * eps)])
    target = np.eye(4)
    err = sf.error_generator(sf.ptm_of_unitary(rz), target)
    assert err["labels"][2] == "Z"
    assert err["hamiltonian"][2] == pytest.approx(eps, rel=0.01)
    with pytest.raises(ValueError):
        sf.avg_gate_fidelity(np.eye(3), np.eye(3))


def test_readout_and_rb():
    p0, _ = sf.ssro_correct(406 / 500, 500, 0.82, 0.99)
    assert round(p0, 2) == 0.99
    assert sf.mean_native_length() == 3.125
    natives = {k: sf.depolarizing(1, 0.995) @ v for k, v in sf.ideal_natives().items()}
    r = sf.run_rb(natives, depths=[1, 10, 50, 100], k=5, shots=0)
    assert r["p"] == pytest.approx(0.995, abs=1e-9)


def test_swap_curve_orders_mitigations():
    none = dict(sf.swap_curve(0.987, "none", 20, 4, 1))
    echo = dict(sf.swap_curve(0.987, "echo", 20, 4, 1))
    assert none[2] < 1.0
    assert echo[20] > none[20]
    assert np.allclose(sf.swap_channel() @ sf.swap_channel(), np.eye(16), atol=1e-10)


def test_gst_round_trip():
    out = sf.gst_round_trip({"depolarizing": 0.999}, max_depth=4, shots=0)
    assert out["fidelities"] == pytest.approx(out["truth_fidelities"], abs=1e-8)


def test_run_experiment_matches_cli_contract(tmp_path):
    assert "swap-curve" in sf.experiment_names()
    res = sf.run_experiment({"experiment": {"name": "gst-design", "max_depth": 2}}, out=str(tmp_path))
    assert res["manifest"]["experiment"]["options"]["max_depth"] == 2
    assert "circuits.txt" in res["artifacts"]
    on_disk = json.loads((tmp_path / "manifest.json").read_text())
    assert on_disk == res["manifest"]
    with pytest.raises(ValueError):
        sf.run_experiment({"experiment": {"name": "levels", "typo": 1}})
    with pytest.raises(ValueError):
        sf.run_experiment({}, experiment="rb")


def test_shipped_configs_parse():
    root = pathlib.Path(os.environ.get("SPINFORGE_CONFIGS", pathlib.Path(__file__).parents[2] / "configs"))
    cheap = {"levels", "tau-scan", "gst-design", "swap-curve", "memory-sim"}
    for path in sorted(root.glob("*.json")):
        if path.stem in cheap:
            res = sf.run_experiment(json.loads(path.read_text()))
            assert res["manifest"]["experiment"]["name"] == path.stem
