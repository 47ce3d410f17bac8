import json
from pathlib import Path

import pytest

from mixopt.cli import main
from mixopt.records import file_checksum, read_jsonl, read_samples


@pytest.fixture
def workdir(tmp_path):
    cfg = {
        "m": 3,
        "b": 6,
        "k": 2,
        "T": 1000,
        "n_mixtures": 12,
        "seed": 0,
        "top_k": 5,
        "folds": 4,
        "train": {"learning_rate": 1e-2, "steps": 80, "seed": 0},
    }
    (tmp_path / "config.json").write_text(json.dumps(cfg))
    return tmp_path


def run(args):
    return main([str(a) for a in args])


class TestPipeline:
    def test_full_chain(self, workdir, capsys):
        cfg = workdir / "config.json"
        oracle = workdir / "oracle.json"
        plan = workdir / "plan.jsonl"
        samples = workdir / "samples.jsonl"
        model = workdir / "model.json"
        ranking = workdir / "ranking.jsonl"

        assert run(["make-oracle", "--config", cfg, "--preset", "smooth", "--out", oracle]) == 0
        assert run(["design", "--config", cfg, "--out", plan]) == 0
        assert run(["simulate", "--plan", plan, "--oracle", oracle, "--out", samples]) == 0
        header, rows = read_samples(samples)
        assert len(rows) == 12 * 4  # mixtures x grid cells
        assert run(["fit", "--config", cfg, "--samples", samples, "--out", model,
                    "--report", workdir / "fit.json"]) == 0
        assert run(["cv", "--config", cfg, "--samples", samples, "--out", workdir / "cv.json"]) == 0
        out = capsys.readouterr().out
        assert "mean R2" in out
        assert run(["extrapolate", "--config", cfg, "--model", model, "--out", ranking]) == 0
        rheader, rrows = read_jsonl(ranking, "ranking")
        assert len(rrows) == 5
        assert [r["rank"] for r in rrows] == [1, 2, 3, 4, 5]
        assert run(["calibrate", "--model", model, "--samples", samples,
                    "--mode", "diagonal", "--out", workdir / "map.json",
                    "--report", workdir / "corr.json"]) == 0
        corr = json.loads((workdir / "corr.json").read_text())
        assert corr["pearson_r_after"] >= corr["pearson_r_before"] - 1e-12

    def test_design_reference_plan_size(self, tmp_path):
        cfg = {"m": 5, "b": 8, "k": 4, "T": 1000, "n_mixtures": 250, "seed": 1}
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg))
        plan = tmp_path / "plan.jsonl"
        assert run(["design", "--config", path, "--out", plan]) == 0
        header, rows = read_jsonl(plan, "plan")
        assert len(rows) * len(header["grid"]) == 1000

    def test_rerun_is_byte_identical(self, workdir):
        cfg = workdir / "config.json"
        for name in ("a", "b"):
            d = workdir / name
            d.mkdir()
            assert run(["make-oracle", "--config", cfg, "--out", d / "oracle.json"]) == 0
            assert run(["design", "--config", cfg, "--out", d / "plan.jsonl"]) == 0
            assert run(["simulate", "--plan", d / "plan.jsonl", "--oracle", d / "oracle.json",
                        "--out", d / "samples.jsonl"]) == 0
        for f in ("oracle.json", "plan.jsonl", "samples.jsonl"):
            assert file_checksum(workdir / "a" / f) == file_checksum(workdir / "b" / f)


class TestBaselines:
    def test_uniform(self, workdir):
        out = workdir / "uniform.jsonl"
        assert run(["baseline", "--kind", "uniform", "--config", workdir / "config.json",
                    "--out", out]) == 0
        header, rows = read_jsonl(out, "baseline_report")
        assert rows[0]["proportions"] == [1 / 3, 1 / 3, 1 / 3]

    def test_natural(self, workdir):
        catalog = workdir / "catalog.json"
        catalog.write_text(json.dumps({"names": ["a", "b", "c"], "sizes": [10, 30, 60]}))
        out = workdir / "natural.jsonl"
        assert run(["baseline", "--kind", "natural", "--config", workdir / "config.json",
                    "--catalog", catalog, "--out", out]) == 0
        header, rows = read_jsonl(out, "baseline_report")
        assert rows[0]["proportions"] == [0.1, 0.3, 0.6]

    def test_natural_requires_catalog(self, workdir):
        assert run(["baseline", "--kind", "natural", "--config", workdir / "config.json",
                    "--out", workdir / "x.jsonl"]) == 2

    def test_dml(self, workdir):
        cfg = workdir / "config.json"
        oracle = workdir / "oracle.json"
        plan = workdir / "plan.jsonl"
        samples = workdir / "samples.jsonl"
        run(["make-oracle", "--config", cfg, "--out", oracle])
        run(["design", "--config", cfg, "--out", plan])
        run(["simulate", "--plan", plan, "--oracle", oracle, "--out", samples])
        out = workdir / "dml.jsonl"
        assert run(["baseline", "--kind", "dml", "--config", cfg, "--samples", samples,
                    "--out", out]) == 0
        header, rows = read_jsonl(out, "baseline_report")
        law_rows = [r for r in rows if "task" in r]
        assert len(law_rows) == 2
        assert all("residual_mse" in r for r in law_rows)
        selection = rows[-1]["selection"]
        assert sum(selection["counts"]) == 6


class TestAverages:
    def test_csv_emission(self, workdir):
        cfg = workdir / "config.json"
        run(["make-oracle", "--config", cfg, "--out", workdir / "oracle.json"])
        run(["design", "--config", cfg, "--out", workdir / "plan.jsonl"])
        run(["simulate", "--plan", workdir / "plan.jsonl", "--oracle", workdir / "oracle.json",
             "--out", workdir / "samples.jsonl"])
        out = workdir / "averages.csv"
        assert run(["averages", "--samples", workdir / "samples.jsonl", "--out", out]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "run_id,counts,step,average"
        assert len(lines) == 1 + 12 * 4
        avg = float(lines[1].split(",")[-1])
        assert 0.0 <= avg <= 1.0


class TestMetricsCommand:
    def test_queries_report(self, tmp_path):
        q = tmp_path / "queries.txt"
        q.write_text("set an alarm for nine\nwhat is the weather\nset an alarm for ten\n")
        out = tmp_path / "metrics.json"
        assert run(["metrics", "--queries", q, "--nodes", "10", "--edges", "9", "--out", out]) == 0
        rep = json.loads(out.read_text())
        assert rep["n_queries"] == 3
        assert 0.0 <= rep["diversity"] <= 1.0
        assert rep["dag_complexity"] == 0.9


class TestExitCodes:
    def test_missing_file_is_validation_failure(self, workdir):
        assert run(["simulate", "--plan", workdir / "nope.jsonl",
                    "--oracle", workdir / "nope2.json", "--out", workdir / "out.jsonl"]) == 2

    def test_bad_config_field(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"m": 3, "b": 6, "k": 2, "T": 1000, "bogus": 1}))
        assert run(["design", "--config", path, "--out", tmp_path / "plan.jsonl"]) == 2

    def test_tau_must_divide(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"m": 3, "b": 6, "k": 2, "T": 1000, "tau": 300}))
        assert run(["design", "--config", path, "--out", tmp_path / "plan.jsonl"]) == 2

    def test_oversampling_lattice(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"m": 2, "b": 2, "k": 1, "T": 1000, "n_mixtures": 10}))
        assert run(["design", "--config", path, "--out", tmp_path / "plan.jsonl"]) == 2

    def test_dimension_mismatch_between_plan_and_oracle(self, workdir):
        cfg2 = workdir / "config2.json"
        cfg2.write_text(json.dumps({"m": 4, "b": 6, "k": 2, "T": 1000}))
        run(["make-oracle", "--config", cfg2, "--out", workdir / "oracle4.json"])
        run(["design", "--config", workdir / "config.json", "--out", workdir / "plan.jsonl"])
        assert run(["simulate", "--plan", workdir / "plan.jsonl",
                    "--oracle", workdir / "oracle4.json", "--out", workdir / "s.jsonl"]) == 2
