import json

import numpy as np
import pytest

from mmdml.cli import EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main


@pytest.fixture(scope="module")
def gen_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "gen.json"
    path.write_text(
        json.dumps(
            {
                "n": 600,
                "theta0": 0.5,
                "snr": 2.0,
                "seed": 17,
                "mode": "surrogate",
                "modalities": [
                    {"name": "tab", "feature_dim": 4, "rho": 1.0},
                    {"name": "txt", "feature_dim": 4, "rho": 1.0},
                    {"name": "img", "feature_dim": 4, "rho": 1.0},
                ],
            }
        )
    )
    return path


@pytest.fixture(scope="module")
def dataset_dir(gen_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "ds"
    assert main(["generate", "--config", str(gen_config), "--out", str(out)]) == EXIT_OK
    return out


class TestGenerate:
    def test_writes_all_files_and_prints_variance(self, gen_config, tmp_path, capsys):
        out = tmp_path / "ds"
        assert main(["generate", "--config", str(gen_config), "--out", str(out)]) == EXIT_OK
        captured = capsys.readouterr().out
        assert "var=" in captured and "oracle bounds" in captured
        for name in ("manifest.json", "data.csv", "oracle.csv", "run.json"):
            assert (out / name).exists()

    def test_rerun_is_byte_identical(self, gen_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["generate", "--config", str(gen_config), "--out", str(out1)])
        main(["generate", "--config", str(gen_config), "--out", str(out2)])
        assert (out1 / "data.csv").read_bytes() == (out2 / "data.csv").read_bytes()
        assert (out1 / "oracle.csv").read_bytes() == (out2 / "oracle.csv").read_bytes()

    def test_missing_config_exits_with_io_code(self, tmp_path, capsys):
        missing = tmp_path / "nope.json"
        assert main(["generate", "--config", str(missing), "--out", str(tmp_path / "x")]) == EXIT_IO
        assert str(missing) in capsys.readouterr().err

    def test_thread_flag_does_not_change_results(self, gen_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["generate", "--config", str(gen_config), "--out", str(out1)])
        main(["--threads", "4", "generate", "--config", str(gen_config), "--out", str(out2)])
        assert (out1 / "data.csv").read_bytes() == (out2 / "data.csv").read_bytes()

    def test_replay_generate_is_byte_identical(self, gen_config, tmp_path):
        out = tmp_path / "ds"
        main(["generate", "--config", str(gen_config), "--out", str(out)])
        first = (out / "data.csv").read_bytes()
        assert main(["replay", str(out / "run.json")]) == EXIT_OK
        assert (out / "data.csv").read_bytes() == first


class TestEstimate:
    def test_repeats_emit_aggregate(self, dataset_dir, tmp_path, capsys):
        out = tmp_path / "est"
        code = main(
            ["estimate", "--data", str(dataset_dir), "--learner", "ridge", "--out", str(out),
             "--split", "0.5", "--repeats", "5"]
        )
        assert code == EXIT_OK
        payload = json.loads((out / "estimate.json").read_text())
        assert len(payload["repeats"]) == 5
        assert "theta_mean" in payload and "theta_sd" in payload
        assert "±" in capsys.readouterr().out

    def test_unknown_learner_lists_names(self, dataset_dir, tmp_path, capsys):
        code = main(["estimate", "--data", str(dataset_dir), "--learner", "mystery", "--out", str(tmp_path / "e")])
        assert code == EXIT_VALIDATION
        err = capsys.readouterr().err
        for name in ("ridge", "gbt", "fusion", "embedding", "oracle"):
            assert name in err

    def test_modality_restriction(self, dataset_dir, tmp_path):
        out_tab = tmp_path / "tab"
        out_all = tmp_path / "all"
        main(["estimate", "--data", str(dataset_dir), "--learner", "ridge", "--out", str(out_tab),
              "--modalities", "tab"])
        main(["estimate", "--data", str(dataset_dir), "--learner", "ridge", "--out", str(out_all)])
        theta_tab = json.loads((out_tab / "estimate.json").read_text())["theta_hat"]
        theta_all = json.loads((out_all / "estimate.json").read_text())["theta_hat"]
        assert theta_tab < theta_all

    def test_kfold_path(self, dataset_dir, tmp_path):
        out = tmp_path / "kf"
        code = main(["estimate", "--data", str(dataset_dir), "--learner", "ridge", "--out", str(out), "--kfold", "3"])
        assert code == EXIT_OK
        payload = json.loads((out / "estimate.json").read_text())
        assert payload["split_descriptor"]["kind"] == "kfold"

    def test_replay_reproduces_byte_identically(self, dataset_dir, tmp_path):
        out = tmp_path / "est"
        main(["estimate", "--data", str(dataset_dir), "--learner", "ridge", "--out", str(out), "--repeats", "2"])
        first = (out / "estimate.json").read_bytes()
        assert main(["replay", str(out / "run.json")]) == EXIT_OK
        assert (out / "estimate.json").read_bytes() == first


class TestBenchmark:
    def test_small_roster_run(self, dataset_dir, tmp_path, capsys):
        config = {
            "data": str(dataset_dir),
            "outputs": str(tmp_path / "bench"),
            "seed": 3,
            "learners": {
                "tinytree": {"kind": "gbt", "trees": 8, "depth": 1},
                "tinyfusion": {"kind": "fusion", "epochs": 2, "encoder_widths": [4], "fusion_width": 4, "embedding_dim": 3},
            },
            "roster": [
                {"name": "Baseline", "learner": "tinytree", "modalities": ["tab"]},
                {"name": "Deep", "learner": "tinyfusion"},
                {"name": "Oracle", "learner": "oracle"},
            ],
            "scheme": {"kind": "single", "train_fraction": 0.5, "repeats": 2, "seed": 3},
        }
        cfg_path = tmp_path / "bench.json"
        cfg_path.write_text(json.dumps(config))
        assert main(["benchmark", "--config", str(cfg_path)]) == EXIT_OK
        md = (tmp_path / "bench" / "report.md").read_text()
        assert "Baseline" in md and "Deep" in md and "Oracle" in md
        out = capsys.readouterr().out
        assert "theta0 = +0.5000" in out
        assert "ols_theta" in out

    def test_single_model_roster_allowed(self, dataset_dir, tmp_path):
        config = {
            "data": str(dataset_dir),
            "outputs": str(tmp_path / "bench1"),
            "roster": [{"name": "OnlyRidge", "learner": "ridge"}],
            "scheme": {"kind": "single", "train_fraction": 0.5, "repeats": 2, "seed": 3},
        }
        cfg_path = tmp_path / "bench1.json"
        cfg_path.write_text(json.dumps(config))
        assert main(["benchmark", "--config", str(cfg_path)]) == EXIT_OK
        csv_lines = (tmp_path / "bench1" / "report.csv").read_text().splitlines()
        assert len(csv_lines) == 2


class TestTrace:
    def test_trace_outputs(self, dataset_dir, tmp_path):
        out = tmp_path / "trace"
        learners_cfg = tmp_path / "learners.json"
        learners_cfg.write_text(json.dumps({"fusion": {"kind": "fusion", "epochs": 3, "encoder_widths": [4],
                                                       "fusion_width": 4, "embedding_dim": 3}}))
        code = main(["trace", "--data", str(dataset_dir), "--out", str(out),
                     "--learners-config", str(learners_cfg)])
        assert code == EXIT_OK
        lines = (out / "trace.csv").read_text().splitlines()
        assert len(lines) == 4  # header + 3 epochs
        svg = (out / "trace.svg").read_text()
        assert "<polygon" in svg

    def test_trace_deterministic(self, dataset_dir, tmp_path):
        outs = []
        for name in ("t1", "t2"):
            out = tmp_path / name
            learners_cfg = tmp_path / f"l_{name}.json"
            learners_cfg.write_text(json.dumps({"fusion": {"kind": "fusion", "epochs": 2, "encoder_widths": [4],
                                                           "fusion_width": 4, "embedding_dim": 3}}))
            main(["trace", "--data", str(dataset_dir), "--out", str(out), "--learners-config", str(learners_cfg)])
            outs.append((out / "trace.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_non_fusion_learner_rejected(self, dataset_dir, tmp_path):
        assert main(["trace", "--data", str(dataset_dir), "--out", str(tmp_path / "t"),
                     "--learner", "ridge"]) == EXIT_VALIDATION


class TestImportEmbeddings:
    def _write_embeddings(self, path, n, dim, broken_id=None):
        lines = ["id," + ",".join(f"e{j}" for j in range(dim))]
        rng = np.random.default_rng(5)
        for i in range(n):
            rid = i if broken_id is None or i != 1 else 999
            lines.append(f"{rid}," + ",".join(f"{v:.8f}" for v in rng.standard_normal(dim)))
        path.write_text("\n".join(lines) + "\n")

    def test_import_new_block(self, gen_config, tmp_path):
        data = tmp_path / "ds"
        main(["generate", "--config", str(gen_config), "--out", str(data)])
        emb = tmp_path / "emb.csv"
        self._write_embeddings(emb, 600, 8)
        code = main(["import-embeddings", "--data", str(data), "--embeddings", str(emb),
                     "--modality", "txt", "--replace"])
        assert code == EXIT_OK
        header = (data / "data.csv").read_text().splitlines()[0]
        assert "txt:f0" in header and "txt:f7" in header
        manifest = json.loads((data / "manifest.json").read_text())
        txt_spec = next(s for s in manifest["modality_specs"] if s["name"] == "txt")
        assert txt_spec["feature_dim"] == 8

    def test_existing_block_requires_replace(self, gen_config, tmp_path, capsys):
        data = tmp_path / "ds"
        main(["generate", "--config", str(gen_config), "--out", str(data)])
        emb = tmp_path / "emb.csv"
        self._write_embeddings(emb, 600, 4)
        code = main(["import-embeddings", "--data", str(data), "--embeddings", str(emb), "--modality", "txt"])
        assert code == EXIT_VALIDATION
        assert "--replace" in capsys.readouterr().err

    def test_mismatched_ids_name_first_offender(self, gen_config, tmp_path, capsys):
        data = tmp_path / "ds"
        main(["generate", "--config", str(gen_config), "--out", str(data)])
        emb = tmp_path / "emb.csv"
        self._write_embeddings(emb, 600, 4, broken_id=True)
        code = main(["import-embeddings", "--data", str(data), "--embeddings", str(emb),
                     "--modality", "txt", "--replace"])
        assert code == EXIT_VALIDATION
        assert "row 1" in capsys.readouterr().err

    def test_estimate_runs_after_import(self, gen_config, tmp_path):
        data = tmp_path / "ds"
        main(["generate", "--config", str(gen_config), "--out", str(data)])
        emb = tmp_path / "emb.csv"
        self._write_embeddings(emb, 600, 6)
        main(["import-embeddings", "--data", str(data), "--embeddings", str(emb), "--modality", "txt", "--replace"])
        out = tmp_path / "est"
        assert main(["estimate", "--data", str(data), "--learner", "ridge", "--out", str(out)]) == EXIT_OK


class TestExitCodes:
    def test_identification_error_maps_to_numerical(self, dataset_dir, tmp_path, monkeypatch):
        import mmdml.cli as cli
        from mmdml.errors import IdentificationError

        def boom(*a, **k):
            raise IdentificationError("no variation")

        monkeypatch.setattr(cli, "run_split", boom)
        code = main(["estimate", "--data", str(dataset_dir), "--learner", "ridge", "--out", str(tmp_path / "x")])
        assert code == EXIT_NUMERICAL
