import json
import math

import numpy as np
import pytest

from conftest import BASE_T, GAMMA_TA, TC_TA, power_config, tls_truth, write_config
from cpwres.constants import CONSTANTS
from cpwres.cpw import CpwGeometry, FilmProperties
from cpwres.errors import AnalysisAborted, ConfigError, DomainError, FixedPointDivergence
from cpwres.loss import photon_number
from cpwres.workbench import (
    design_report,
    load_design_config,
    load_manifest,
    run_power_sweep,
    run_temperature_sweep,
    solve_photon_number,
    synth_dataset,
)


def numeric_payload(report):
    data = dict(report.report)
    data.pop("provenance")
    return json.dumps(data, sort_keys=True)


def tree(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def twenty_point(tmp_path_factory, ta40_truth):
    out = tmp_path_factory.mktemp("twenty")
    powers = np.linspace(-92.4, 7.6, 20).tolist()
    manifest = synth_dataset(power_config(ta40_truth, powers=powers), out)
    return out, manifest


class TestSynth:
    def test_deterministic(self, tmp_path, ta40_truth):
        cfg = power_config(ta40_truth, powers=[-60.0, -30.0, 0.0], snr_db=40.0)
        synth_dataset(cfg, tmp_path / "a")
        synth_dataset(cfg, tmp_path / "b")
        a, b = tree(tmp_path / "a"), tree(tmp_path / "b")
        assert a == b and len(a) == 5

    def test_seed_changes_data(self, tmp_path, ta40_truth):
        cfg = power_config(ta40_truth, powers=[-60.0], snr_db=40.0)
        synth_dataset(cfg, tmp_path / "a", seed=1)
        synth_dataset(cfg, tmp_path / "b", seed=2)
        assert tree(tmp_path / "a") != tree(tmp_path / "b")

    def test_truth_is_self_consistent(self, tmp_path, ta40_truth):
        synth_dataset(power_config(ta40_truth, powers=[-80.0, -20.0], scatter=0.0), tmp_path)
        truth = json.loads((tmp_path / "truth.json").read_text())
        for row in truth["traces"]:
            p_in = 1e-3 * 10 ** ((row["vna_power_dBm"] - 80.0) / 10)
            assert row["n_ph"] == pytest.approx(photon_number(p_in, row["f_r"], row["Q_i"], row["Q_c"]), rel=1e-8)
            assert 1 / row["Q_l"] == pytest.approx(1 / row["Q_i"] + math.cos(row["phi"]) / row["Q_c"], rel=1e-14)

    def test_config_errors(self, tmp_path, ta40_truth):
        cfg = power_config(ta40_truth)
        del cfg["schedule"]["vna_power_dBm"]
        with pytest.raises(ConfigError):
            synth_dataset(cfg, tmp_path)
        cfg = power_config(ta40_truth)
        cfg["schema_version"] = 2
        with pytest.raises(ConfigError):
            synth_dataset(write_config(tmp_path / "c.json", cfg), tmp_path)
        cfg = power_config(ta40_truth)
        cfg["mode"] = "temperature"
        cfg["schedule"]["temperature_K"] = [0.1, 0.2]
        with pytest.raises(ConfigError):
            synth_dataset(cfg, tmp_path)

    def test_zero_noise_end_to_end(self, tmp_path, ta40_truth):
        manifest = synth_dataset(power_config(ta40_truth, scatter=0.0), tmp_path)
        report = run_power_sweep(manifest).report
        truth = json.loads((tmp_path / "truth.json").read_text())["traces"]
        for rec, row in zip(report["traces"], truth):
            assert rec["Q_i"] == pytest.approx(row["Q_i"], rel=1e-6)
            assert rec["n_ph"] == pytest.approx(row["n_ph"], rel=1e-6)
        tls = report["analysis"]["tls"]
        assert tls["delta0_tls"] == pytest.approx(ta40_truth.delta0_tls, rel=1e-4)
        assert tls["beta"] == pytest.approx(ta40_truth.beta, rel=1e-4)
        assert tls["n_c"] == pytest.approx(ta40_truth.n_c, rel=1e-3)


class TestPhotonFixedPoint:
    def test_converges(self):
        def qi(n):
            return 1e5 * (1 + math.sqrt(n) / 30)

        n, q = solve_photon_number(1e-16, 5e9, 1e4, qi)
        assert n == pytest.approx(photon_number(1e-16, 5e9, qi(n), 1e4), rel=1e-9)
        assert q == qi(n)

    def test_divergence(self):
        hi = photon_number(1e-15, 5e9, 1e7, 1e4)
        lo = photon_number(1e-15, 5e9, 1e3, 1e4)
        mid = math.sqrt(hi * lo)

        def flip(n):
            return 1e7 if n < mid else 1e3

        with pytest.raises(FixedPointDivergence):
            solve_photon_number(1e-15, 5e9, 1e4, flip)


class TestPowerSweep:
    def test_twenty_points(self, twenty_point):
        _, manifest = twenty_point
        report = run_power_sweep(manifest)
        a = report.report["analysis"]
        assert a["tls"]["delta0_tls"] == pytest.approx(6.11e-6, rel=0.05)
        assert a["tls"]["beta"] == pytest.approx(0.44, rel=0.05)
        assert report.table_header == ["n_ph", "Q_i", "sigma", "model_Q_i"]
        assert len(report.table) == 20
        n = [row[0] for row in report.table]
        assert n == sorted(n)
        assert report.report["n_failed"] == 0
        prov = report.report["provenance"]
        assert set(prov) == {"tool", "version", "timestamp", "inputs"}
        assert len(prov["inputs"]) == 21

    def test_one_corrupt_file(self, tmp_path, ta40_truth):
        manifest = synth_dataset(power_config(ta40_truth, powers=np.linspace(-92.4, 7.6, 20).tolist()), tmp_path)
        (tmp_path / "traces" / "p007.csv").write_text("freq,re,im\n1,2\n")
        report = run_power_sweep(manifest)
        flagged = [t for t in report.report["traces"] if t["status"] != "ok"]
        assert [t["path"] for t in flagged] == ["traces/p007.csv"]
        assert "ParseError" in flagged[0]["error"]
        assert report.report["n_failed"] == 1
        assert len(report.table) == 19

    def test_abort_when_most_fail(self, tmp_path, ta40_truth):
        manifest = synth_dataset(power_config(ta40_truth, powers=np.linspace(-92.4, 7.6, 20).tolist()), tmp_path)
        for i in range(11):
            (tmp_path / "traces" / f"p{i:03d}.csv").unlink()
        with pytest.raises(AnalysisAborted):
            run_power_sweep(manifest)

    def test_parallel_matches_serial(self, twenty_point):
        _, manifest = twenty_point
        assert numeric_payload(run_power_sweep(manifest, jobs=2)) == numeric_payload(run_power_sweep(manifest, jobs=1))

    def test_rerun_identical(self, twenty_point):
        _, manifest = twenty_point
        a, b = run_power_sweep(manifest), run_power_sweep(manifest)
        assert numeric_payload(a) == numeric_payload(b)
        assert a.to_csv() == b.to_csv()

    def test_extra_line_loss_scales_photon_number(self, twenty_point):
        _, manifest = twenty_point
        a = run_power_sweep(manifest).report["traces"]
        b = run_power_sweep(manifest, extra_line_loss_dB=5.0).report["traces"]
        for x, y in zip(a, b):
            assert x["n_ph"] / y["n_ph"] == pytest.approx(10 ** 0.5, rel=1e-12)

    def test_report_is_valid_json(self, twenty_point, tmp_path):
        _, manifest = twenty_point
        run_power_sweep(manifest).write(tmp_path, "ps")
        data = json.loads((tmp_path / "ps.json").read_text())
        assert data["schema_version"] == 1
        lines = (tmp_path / "ps.csv").read_text().splitlines()
        assert lines[0] == "n_ph,Q_i,sigma,model_Q_i" and len(lines) == 21


class TestManifest:
    def test_empty(self, tmp_path):
        p = write_config(tmp_path / "m.json", {"schema_version": 1, "entries": []})
        with pytest.raises(ConfigError):
            load_manifest(p)

    def test_bad_json_and_version(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            load_manifest(p)
        with pytest.raises(ConfigError):
            load_manifest(write_config(p, {"entries": [{"path": "a.csv", "vna_power_dBm": 0, "temperature_K": 0.1}]}))

    def test_paths_relative_to_manifest(self, twenty_point):
        out, manifest = twenty_point
        m = load_manifest(manifest)
        assert m.entries[0].path == (out / "traces" / "p000.csv").resolve()
        assert m.budget(0.0).total_attenuation_dB == 80.0
        assert m.budget(0.0, 5.0).total_attenuation_dB == 85.0


@pytest.mark.parametrize(
    "f_r, delta0, q_low, q_high, Q_c",
    [
        (3.654e9, 6.11e-6, 2.7e5, 1.076e6, 4897.0),
        (4.31e9, 7.3e-6, 1.6e5, 7.3e5, 1045.0),
        (4.88e9, 8.4e-6, 2.0e5, 9.1e5, 1455.0),
    ],
)
def test_tantalum_resonator_summary(tmp_path, f_r, delta0, q_low, q_high, Q_c):
    truth = tls_truth(f_r, delta0, q_low, q_high)
    manifest = synth_dataset(power_config(truth, f_r=f_r, Q_c=Q_c), tmp_path)
    a = run_power_sweep(manifest).report["analysis"]
    assert a["tls"]["delta0_tls"] == pytest.approx(delta0, rel=0.05)
    assert a["tls"]["beta"] == pytest.approx(0.44, rel=0.05)
    assert a["Q_i_single_photon"] == pytest.approx(q_low, rel=0.1)
    assert a["f_r"] == pytest.approx(f_r, rel=1e-6)


@pytest.fixture(scope="module")
def temperature_dataset(tmp_path_factory, ta40_truth):
    out = tmp_path_factory.mktemp("temp")
    cfg = power_config(ta40_truth, scatter=0.01)
    cfg["mode"] = "temperature"
    cfg["quasiparticle"] = {"critical_temperature": TC_TA, "kinetic_fraction": GAMMA_TA}
    cfg["schedule"] = {"vna_power_dBm": -70.0, "temperature_K": np.linspace(BASE_T, 1.0, 20).tolist()}
    return synth_dataset(cfg, out)


class TestTemperatureSweep:
    def test_recovers_truth(self, temperature_dataset, ta40_truth):
        data = json.loads(temperature_dataset.read_text())
        data["tls_saturation"] = {"n_c": ta40_truth.n_c, "beta": ta40_truth.beta}
        temperature_dataset.write_text(json.dumps(data))
        report = run_temperature_sweep(temperature_dataset)
        a = report.report["analysis"]
        assert a["kinetic_fraction"] == pytest.approx(GAMMA_TA, rel=0.1)
        assert a["tls"]["delta0_tls"] == pytest.approx(6.11e-6, rel=0.1)
        assert 0.3 <= a["Q_i_argmax_temperature_K"] <= 0.8
        assert report.table_header == ["T", "Q_i", "sigma", "model_Q_i", "f_r", "delta_f", "model_delta_f"]
        shift = np.array([row[5] for row in report.table])
        model = np.array([row[6] for row in report.table])
        assert np.max(np.abs(shift - model)) < 0.05 * np.max(np.abs(model))

    def test_needs_critical_temperature(self, twenty_point):
        _, manifest = twenty_point
        with pytest.raises(ConfigError):
            run_temperature_sweep(manifest)


class TestDesign:
    def test_reference_design(self):
        geom, film, n = load_design_config({
            "schema_version": 1,
            "geometry": {"center_width": 4e-6, "gap": 2e-6, "length": 8e-3},
            "film": {"thickness": 40e-9, "critical_temperature": 4.06, "sheet_resistance": 1.764},
        })
        report = design_report(geom, film, n)
        assert report["line"]["impedance"] == pytest.approx(47.44058897836102, rel=1e-12)
        assert report["line"]["impedance"] == pytest.approx(47.4, rel=0.01)
        assert report["film"]["kinetic_inductance_per_square"] == pytest.approx(0.6e-12, rel=0.005)
        assert report["film"]["effective_penetration_depth"] == pytest.approx(576e-9, rel=0.005)
        f0 = report["fundamental_frequency"]
        assert report["harmonics"] == pytest.approx([f0, 3 * f0, 5 * f0], rel=1e-14)

    def test_vacuum(self):
        report = design_report(CpwGeometry(4e-6, 2e-6, 1e-3, substrate_permittivity=1.0))
        assert report["line"]["effective_permittivity"] == 1.0
        assert report["line"]["phase_velocity"] == pytest.approx(CONSTANTS.c, rel=1e-12)
        assert "film" not in report

    def test_zero_thickness(self):
        with pytest.raises(DomainError):
            FilmProperties(0.0, 4.06, 1.764)
        with pytest.raises(ConfigError):
            load_design_config({"geometry": {"center_width": 4e-6, "gap": 2e-6, "length": 1e-3},
                                "film": {"thickness": 0.0, "critical_temperature": 4.06, "sheet_resistance": 1.764}})
