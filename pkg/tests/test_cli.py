"""End-to-end checks of the command-line harness: artifacts, manifests,
determinism, error handling."""

import json

import numpy as np
import pytest

from mppca import cli


def run(argv):
    return cli.main([str(a) for a in argv])


def write_config(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def read_rows(path, numeric_from=1):
    header, rows = cli.read_csv_table(path)
    parsed = [row[:numeric_from] + [float(v) for v in row[numeric_from:]] for row in rows]
    return header, parsed


@pytest.fixture(scope="module")
def sim1_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim1")
    cfg = tmp_path_factory.mktemp("cfg") / "sim1.json"
    cfg.write_text(
        json.dumps(
            {"distances": [0.0, 2.5, 30.0], "noise_sds": [0.5, 2.0], "samples": 4000}
        )
    )
    assert run(["sim1", "--seed", "0", "--config", cfg, "--out", out]) == 0
    return out


class TestSim1:
    def test_artifacts_and_manifest(self, sim1_run):
        assert (sim1_run / "sim1_accuracy.csv").exists()
        manifest = json.loads((sim1_run / "manifest.json").read_text())
        assert manifest["command"] == "sim1"
        assert manifest["seed"] == 0
        assert "sim1_accuracy.csv" in manifest["outputs"]

    def test_zero_distance_is_chance(self, sim1_run):
        header, rows = read_rows(sim1_run / "sim1_accuracy.csv")
        i_dist = header.index("distance")
        i_acc = header.index("expected_accuracy")
        zero = [r for r in rows if float(r[i_dist]) == 0.0]
        assert zero
        for row in zero:
            assert float(row[i_acc]) == pytest.approx(0.5, abs=0.02)

    def test_one_informative_dimension_prefers_rank_one(self, sim1_run):
        header, rows = read_rows(sim1_run / "sim1_accuracy.csv")
        idx = {name: header.index(name) for name in header}

        def acc(q, noise):
            (match,) = [
                r
                for r in rows
                if r[idx["config"]] == "a"
                and float(r[idx["distance"]]) == 2.5
                and float(r[idx["noise_sd"]]) == noise
                and float(r[idx["q"]]) == q
            ]
            return float(match[idx["expected_accuracy"]])

        mc_err = 3.0 / np.sqrt(4000)
        for noise in (0.5, 2.0):
            assert acc(1, noise) >= acc(0, noise) - mc_err
            assert acc(1, noise) >= acc(2, noise) - mc_err

    def test_large_distance_saturates(self, sim1_run):
        header, rows = read_rows(sim1_run / "sim1_accuracy.csv")
        idx = {name: header.index(name) for name in header}
        far = [r for r in rows if float(r[idx["distance"]]) == 30.0]
        assert far
        for row in far:
            assert float(row[idx["expected_accuracy"]]) > 0.99

    def test_csv_parses_back(self, sim1_run):
        header, rows = cli.read_csv_table(sim1_run / "sim1_accuracy.csv")
        assert header == ["config", "distance", "noise_sd", "q", "sigma2", "expected_accuracy"]
        assert all(len(r) == len(header) for r in rows)

    def test_seeded_rerun_identical_bytes(self, sim1_run, tmp_path):
        cfg = write_config(
            tmp_path,
            "sim1.json",
            {"distances": [0.0, 2.5, 30.0], "noise_sds": [0.5, 2.0], "samples": 4000},
        )
        out2 = tmp_path / "again"
        assert run(["sim1", "--seed", "0", "--config", cfg, "--out", out2]) == 0
        assert (out2 / "sim1_accuracy.csv").read_bytes() == (
            sim1_run / "sim1_accuracy.csv"
        ).read_bytes()


SIM2_CONFIG = {"n_per": 80, "epochs": 8, "grid_points": 21, "n_new_draws": 32}


@pytest.fixture(scope="module")
def sim2_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim2")
    cfg = tmp_path_factory.mktemp("cfg2") / "sim2.json"
    cfg.write_text(json.dumps(SIM2_CONFIG))
    assert run(["sim2", "--seed", "0", "--config", cfg, "--out", out]) == 0
    return json.loads((out / "sim2_grids.json").read_text()), out


class TestSim2:
    def test_exemplar_contour_isotropic(self, sim2_run):
        doc, _ = sim2_run
        summary = doc["contour_summary"]["exemplar"]
        assert summary["anisotropy_ratio"] < 1.1

    def test_mppca_contour_tracks_training_axis(self, sim2_run):
        doc, _ = sim2_run
        summary = doc["contour_summary"]["mppca"]
        assert summary["angle_to_y_deg"] < 10.0

    def test_identical_json_bytes_on_rerun(self, sim2_run, tmp_path):
        _, out = sim2_run
        cfg = write_config(tmp_path, "sim2.json", SIM2_CONFIG)
        out2 = tmp_path / "again"
        assert run(["sim2", "--seed", "0", "--config", cfg, "--out", out2]) == 0
        assert (out2 / "sim2_grids.json").read_bytes() == (
            out / "sim2_grids.json"
        ).read_bytes()

    def test_grids_are_probabilities(self, sim2_run):
        doc, _ = sim2_run
        for name, grid in doc["grids"].items():
            values = np.asarray(grid, dtype=float)
            assert np.all(values >= 0) and np.all(values <= 1), name


FEWSHOT_CONFIG = {"n_boot": 200}


@pytest.fixture(scope="module")
def fewshot_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("fewshot")
    cfg = tmp_path_factory.mktemp("cfg3") / "fewshot.json"
    cfg.write_text(json.dumps(FEWSHOT_CONFIG))
    assert run(["fewshot", "--seed", "0", "--config", cfg, "--out", out]) == 0
    return out


class TestFewshot:
    def load_metrics(self, out):
        header, rows = cli.read_csv_table(out / "fewshot_metrics.csv")
        idx = {name: header.index(name) for name in header}
        return [
            {
                "task": r[idx["task"]],
                "model": r[idx["model"]],
                "expected_accuracy": float(r[idx["expected_accuracy"]]),
                "correlation": float(r[idx["correlation"]]),
            }
            for r in rows
        ]

    def test_reference_model_scores_highest(self, fewshot_run):
        rows = self.load_metrics(fewshot_run)
        for task in ("new_category", "subcategory"):
            task_rows = [r for r in rows if r["task"] == task]
            best = max(task_rows, key=lambda r: r["expected_accuracy"])
            assert best["model"] == "mppca", task

    def test_input_hashes_logged(self, fewshot_run):
        manifest = json.loads((fewshot_run / "manifest.json").read_text())
        hashes = manifest["stimulus_hashes"]
        assert set(hashes) == {"new_category", "subcategory"}
        assert "exemplar_similarity" in manifest["conventions"]

    def test_new_mass_table_shape(self, fewshot_run):
        header, rows = cli.read_csv_table(fewshot_run / "fewshot_new_mass.csv")
        assert header == ["task", "stimulus", "model", "p_instructed"]
        models = {r[2] for r in rows}
        assert {"mppca", "exemplar", "prototype"} <= models

    def test_prototype_reference_orders_correlations(self, tmp_path):
        cfg = write_config(
            tmp_path, "fs.json", {**FEWSHOT_CONFIG, "reference": "prototype"}
        )
        out = tmp_path / "out"
        assert run(["fewshot", "--seed", "0", "--config", cfg, "--out", out]) == 0
        rows = self.load_metrics(out)
        by_model = {
            r["model"]: r["correlation"] for r in rows if r["task"] == "new_category"
        }
        assert by_model["prototype"] >= by_model["exemplar"]


class TestTheoryCheck:
    def test_report_ok_and_deterministic(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "tc.json",
            {
                "n_orientation_configs": 120,
                "n_bound_configs": 15,
                "bound_draws": 8000,
                "n_snr_configs": 5,
                "snr_draws": 30000,
            },
        )
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run(["theory-check", "--seed", "1", "--config", cfg, "--out", out1]) == 0
        assert run(["theory-check", "--seed", "1", "--config", cfg, "--out", out2]) == 0
        report = json.loads((out1 / "theory_report.json").read_text())
        assert report["ok"] is True
        assert report["orientation"]["n_mismatch"] == 0
        assert report["chebyshev"]["n_violations"] == 0
        assert (out1 / "theory_report.json").read_bytes() == (
            out2 / "theory_report.json"
        ).read_bytes()


class TestCrpCheck:
    def test_passes_at_spec_tolerance(self, tmp_path):
        cfg = write_config(tmp_path, "crp.json", {"sequences": 30000})
        out = tmp_path / "out"
        assert run(["crp-check", "--seed", "0", "--config", cfg, "--out", out]) == 0
        report = json.loads((out / "crp_report.json").read_text())
        assert report["ok"] is True
        assert report["relative_error"] < report["tolerance"]

    def test_nonzero_exit_when_tolerance_unreachable(self, tmp_path):
        cfg = write_config(
            tmp_path, "crp.json", {"sequences": 2000, "tolerance": 1e-9}
        )
        out = tmp_path / "out"
        assert run(["crp-check", "--seed", "0", "--config", cfg, "--out", out]) == 1


class TestDeep:
    def write_inputs(self, tmp_path, n_per=40, d_emb=6):
        rng = np.random.default_rng(0)
        centers = np.zeros((2, d_emb))
        centers[0, 0] = 6.0
        centers[1, 1] = -6.0
        emb_lines, lab_lines = [], []
        for j in range(2):
            w = rng.standard_normal(d_emb)
            pts = centers[j] + rng.standard_normal((n_per, 1)) * w + 0.2 * rng.standard_normal((n_per, d_emb))
            for i, p in enumerate(pts):
                name = f"img{j}_{i}"
                emb_lines.append(name + "," + ",".join(repr(float(v)) for v in p))
                probs = [0.95, 0.05] if j == 0 else [0.05, 0.95]
                lab_lines.append(name + "," + ",".join(map(str, probs)))
        emb = tmp_path / "emb.csv"
        lab = tmp_path / "lab.csv"
        emb.write_text("\n".join(emb_lines) + "\n")
        lab.write_text("\n".join(lab_lines) + "\n")
        return emb, lab

    def test_artifacts_and_determinism(self, tmp_path):
        emb, lab = self.write_inputs(tmp_path)
        cfg = write_config(
            tmp_path,
            "deep.json",
            {"embeddings": str(emb), "soft_labels": str(lab), "epochs": 20},
        )
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run(["deep", "--seed", "3", "--config", cfg, "--out", out1]) == 0
        assert run(["deep", "--seed", "3", "--config", cfg, "--out", out2]) == 0
        assert (out1 / "heads.json").read_bytes() == (out2 / "heads.json").read_bytes()
        header, rows = cli.read_csv_table(out1 / "trace.csv")
        assert header[:2] == ["epoch", "train_loss"]
        assert len(rows) == 20
        manifest = json.loads((out1 / "manifest.json").read_text())
        assert str(emb) in manifest["input_hashes"]
        assert str(lab) in manifest["input_hashes"]

    def test_malformed_soft_label_row_named(self, tmp_path):
        emb, lab = self.write_inputs(tmp_path)
        bad = lab.read_text().splitlines()
        bad[2] = bad[2].rsplit(",", 2)[0] + ",0.5,0.3"  # sums to 0.8
        lab.write_text("\n".join(bad) + "\n")
        cfg = write_config(
            tmp_path,
            "deep.json",
            {"embeddings": str(emb), "soft_labels": str(lab), "epochs": 2},
        )
        with pytest.raises(ValueError, match="row 3"):
            run(["deep", "--seed", "0", "--config", cfg, "--out", tmp_path / "out"])

    def test_missing_input_rejected(self, tmp_path):
        cfg = write_config(tmp_path, "deep.json", {"epochs": 2})
        with pytest.raises(SystemExit, match="embeddings"):
            run(["deep", "--seed", "0", "--config", cfg, "--out", tmp_path / "out"])

    def test_spectrum_report_written(self, tmp_path):
        emb, lab = self.write_inputs(tmp_path)
        rng = np.random.default_rng(1)
        a = rng.standard_normal((6, 6))
        covs = [(a @ a.T + 0.1 * np.eye(6)).tolist()]
        cov_path = tmp_path / "covs.json"
        cov_path.write_text(json.dumps(covs))
        cfg = write_config(
            tmp_path,
            "deep.json",
            {
                "embeddings": str(emb),
                "soft_labels": str(lab),
                "epochs": 2,
                "covariances": str(cov_path),
            },
        )
        out = tmp_path / "out"
        assert run(["deep", "--seed", "0", "--config", cfg, "--out", out]) == 0
        header, rows = cli.read_csv_table(out / "spectrum.csv")
        fracs = [float(v) for v in rows[0][1:]]
        assert sum(fracs) == pytest.approx(1.0, abs=1e-9)


class TestConfigHandling:
    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = write_config(tmp_path, "bad.json", {"distancez": [1.0]})
        with pytest.raises(SystemExit, match="unknown config keys"):
            run(["sim1", "--config", cfg, "--out", tmp_path / "out"])

    def test_missing_config_file_rejected(self, tmp_path):
        with pytest.raises(SystemExit, match="not found"):
            run(["sim1", "--config", tmp_path / "nope.json", "--out", tmp_path / "out"])

    def test_samples_flag_overrides(self, tmp_path):
        out = tmp_path / "out"
        assert run(["crp-check", "--samples", "5000", "--out", out]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["sequences"] == 5000
