import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from deltafwer.datagen import ConfigurationError, ScenarioConfig, make_scenario
from deltafwer.experiment import (
    SUMMARY_COLUMNS,
    ExperimentSpec,
    run_central_scenario,
    run_methods,
    run_single,
    run_sweep,
    scenario_id,
)

SMALL = ScenarioConfig(H=16, n=60, h=2)


def small_spec(tmp_path, **kw):
    base = dict(scenario=SMALL, methods=("cludl", "encludl", "dlasso-full"), C_grid=(20, 40),
                n_seeds=2, B=3, output_dir=str(tmp_path))
    base.update(kw)
    return ExperimentSpec(**base)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSpec:
    def test_defaults(self):
        s = ExperimentSpec()
        assert s.methods == ("encludl",) and s.seeds == range(0, 100)

    @pytest.mark.parametrize("kw", [
        dict(methods=("lasso",)), dict(methods=()), dict(C_grid=(1,)), dict(C_grid=(2000,)),
        dict(alpha=0.0), dict(gamma=1.0), dict(B=0), dict(n_seeds=0), dict(seed=-1),
        dict(subsample_fraction=0.0), dict(sweep=("kappa", (1,))), dict(sweep=("n", ())),
        dict(sweep=("h", (30,))),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            ExperimentSpec(**kw)

    def test_full_design_needs_no_clusters(self):
        assert ExperimentSpec(methods=("dlasso-full",), C_grid=()).C_grid == ()

    def test_normalisation(self):
        s = ExperimentSpec(methods=("encludl", "cludl", "cludl"), C_grid=(300, 100))
        assert s.methods == ("cludl", "encludl") and s.C_grid == (100, 300)

    def test_hash_ignores_output(self):
        a, b = ExperimentSpec(output_dir="x"), ExperimentSpec(output_dir="y")
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != ExperimentSpec(alpha=0.05).config_hash()

    def test_scenario_id(self):
        assert scenario_id(ScenarioConfig()) == "H40-n100-h4-rho0.75-sigma2"


class TestRunMethods:
    def test_keys_and_diameters(self, tmp_path):
        spec = small_spec(tmp_path)
        ds = make_scenario(replace(SMALL, seed=0))
        runs = run_methods(ds, spec, 0, keep_pvalues=True)
        assert set(runs) == {("cludl", 20), ("cludl", 40), ("encludl", 20), ("encludl", 40),
                             ("dlasso-full", 256)}
        assert all(r.error is None for r in runs.values())
        assert runs[("dlasso-full", 256)].diameter == 0
        enc = runs[("encludl", 20)]
        assert enc.diameter == max(enc.bootstrap_diameters) and len(enc.bootstrap_diameters) == 3
        assert runs[("cludl", 20)].diameter >= runs[("cludl", 40)].diameter
        assert runs[("cludl", 20)].pvalues.shape == (256,)

    def test_errors_recorded(self, tmp_path):
        spec = small_spec(tmp_path, subsample_fraction=0.02, methods=("encludl",))
        runs = run_methods(make_scenario(SMALL), spec, 0)
        assert all(r.error and r.selected is None for r in runs.values())


class TestCentral:
    def test_outputs(self, tmp_path):
        spec = small_spec(tmp_path)
        rows = run_central_scenario(spec, workers=1)
        csv_rows = read_rows(tmp_path / "summary.csv")
        assert len(rows) == len(csv_rows) == 5
        assert tuple(csv_rows[0]) == SUMMARY_COLUMNS
        assert [(r["method"], int(r["C"])) for r in csv_rows] == sorted(
            (r["method"], int(r["C"])) for r in csv_rows)
        for r in csv_rows:
            assert r["wall_time_s"] == "" and r["error"] == "" and r["n_seeds"] == "2"
            lo, rate, hi = float(r["ci_lo"]), float(r["delta_fwer"]), float(r["ci_hi"])
            assert 0 <= lo <= rate <= hi <= 1
            assert float(r["fwer"]) >= rate
        full = next(r for r in csv_rows if r["method"] == "dlasso-full")
        assert full["delta"] == "0" and full["fwer"] == full["delta_fwer"]
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["config_hash"] == spec.config_hash() and len(man["seeds"]) == 2

    def test_single_seed_and_pvalues(self, tmp_path):
        spec = small_spec(tmp_path, n_seeds=1, methods=("cludl",), C_grid=(20,))
        run_central_scenario(spec, workers=1, keep_pvalues=True)
        files = list((tmp_path / "pvalues").glob("*.csv"))
        assert [f.name for f in files] == ["cludl_C20_seed0.csv"]
        assert len(read_rows(files[0])) == 256

    def test_workers_and_timing(self, tmp_path):
        spec = small_spec(tmp_path / "a", methods=("encludl",), C_grid=(20,))
        run_central_scenario(spec, workers=1)
        run_central_scenario(replace(spec, output_dir=str(tmp_path / "b")), workers=2)
        a = (tmp_path / "a" / "summary.csv").read_bytes()
        assert a == (tmp_path / "b" / "summary.csv").read_bytes()
        rows = run_central_scenario(replace(spec, output_dir=str(tmp_path / "c")), 1, timing=True)
        assert rows[0]["wall_time_s"] > 0

    def test_failures_reported_in_row(self, tmp_path):
        spec = small_spec(tmp_path, subsample_fraction=0.02, methods=("encludl",), C_grid=(20,))
        row = read_rows(tmp_path / "summary.csv")[0] if run_central_scenario(spec, 1) else None
        assert row["n_seeds"] == "0" and row["error"].startswith("2/2 seeds failed")
        assert row["delta_fwer"] == ""


class TestSweep:
    def test_single_value_matches_central(self, tmp_path):
        spec = small_spec(tmp_path / "c", methods=("cludl",), C_grid=(20,))
        central = run_central_scenario(spec, 1)
        sw = run_sweep(replace(spec, output_dir=str(tmp_path / "s"), sweep=("sigma_eps", (2.0,))), 1)
        keys = ("delta", "delta_fwer", "tpr_median", "fwer")
        assert [{k: r[k] for k in keys} for r in central] == [{k: r[k] for k in keys} for r in sw]

    def test_layout(self, tmp_path):
        spec = small_spec(tmp_path, methods=("cludl",), C_grid=(20,), n_seeds=1,
                          sweep=("n", (80, 60)))
        rows = run_sweep(spec, 1)
        assert [r["sweep_value"] for r in rows] == [60, 80]
        assert (tmp_path / "sweep_n=60" / "summary.csv").exists()
        combined = read_rows(tmp_path / "summary.csv")
        assert [r["sweep_param"] for r in combined] == ["n", "n"]

    def test_requires_sweep(self, tmp_path):
        with pytest.raises(ConfigurationError):
            run_sweep(small_spec(tmp_path), 1)


@pytest.fixture(scope="module")
def central_ds():
    return make_scenario(ScenarioConfig(seed=3))


class TestSingle:
    def test_full_design(self, central_ds, tmp_path):
        man = run_single(central_ds, "dlasso-full", tmp_path)
        assert man["delta"] == 0 and man["C"] == 1600
        assert len(read_rows(tmp_path / "pvalues.csv")) == 1600
        assert not (tmp_path / "clustering.csv").exists()

    def test_encludl(self, central_ds, tmp_path):
        man = run_single(central_ds, "encludl", tmp_path, C=200, B=3)
        vals = np.array([float(r["p_value"]) for r in read_rows(tmp_path / "pvalues.csv")])
        assert vals.size == 1600 and np.all((vals >= 0) & (vals <= 1))
        sel = [int(r["covariate_index"]) for r in read_rows(tmp_path / "selection.csv")]
        assert sel == np.flatnonzero(vals <= 0.1).tolist() and man["n_selected"] == len(sel)
        cl = read_rows(tmp_path / "clustering.csv")
        assert len(cl) == 1600 and set(cl[0]) == {"covariate_index", "labels_0", "labels_1", "labels_2"}
        assert man["delta"] == max(man["bootstrap_diameters"])

    def test_bad_requests(self, central_ds, tmp_path):
        with pytest.raises(ConfigurationError):
            run_single(central_ds, "ridge", tmp_path)
        with pytest.raises(ConfigurationError):
            run_single(central_ds, "cludl", tmp_path, C=1)
