import json

import click
import pytest
import yaml
from click.testing import CliRunner

from argex.cli import main, resolve_config
from argex.training import desk_profile

TINY_SETS = (
    "--set", "model.d_model=32", "--set", "model.n_heads=4",
    "--set", "model.n_enc_layers=2", "--set", "model.n_dec_layers=2",
    "--set", "amr_spec.output_dim=16", "--set", "prefix_len=4",
)


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, runner):
    root = tmp_path_factory.mktemp("cli")
    result = runner.invoke(main, [
        "gen-synthetic", "--n", "20", "--seed", "4",
        "--out-dir", str(root / "data"),
    ])
    assert result.exit_code == 0, result.output
    return root


class TestResolveConfig:
    def test_defaults_match_desk_profile(self):
        assert resolve_config(None, ()) == desk_profile(vocab_size=0)

    def test_set_overrides_nested_field(self):
        cfg = resolve_config(None, ("model.d_model=96", "copy.lambda_=0.5"))
        assert cfg.model.d_model == 96
        assert cfg.copy.lambda_ == 0.5

    def test_set_parses_yaml_scalars(self):
        cfg = resolve_config(None, ("amr_spec.frozen=true",))
        assert cfg.amr_spec.frozen is True

    def test_set_unknown_field(self):
        with pytest.raises(click.BadParameter, match="unknown config field"):
            resolve_config(None, ("model.dmodel=96",))

    def test_set_requires_equals(self):
        with pytest.raises(click.BadParameter):
            resolve_config(None, ("model.d_model",))

    def test_yaml_file_layered_over_defaults(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({"epochs": 7, "model": {"d_model": 32}}))
        cfg = resolve_config(path, ())
        assert cfg.epochs == 7
        assert cfg.model.d_model == 32
        assert cfg.batch_size == desk_profile(vocab_size=0).batch_size

    def test_yaml_unknown_field(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({"model": {"width": 32}}))
        with pytest.raises(click.BadParameter, match="unknown config field"):
            resolve_config(path, ())

    def test_yaml_must_be_mapping(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("- a\n- b\n")
        with pytest.raises(click.BadParameter):
            resolve_config(path, ())

    def test_flags_win_over_file_and_set(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({"seed": 3}))
        cfg = resolve_config(path, ("seed=5",), seed=9)
        assert cfg.seed == 9
        assert cfg.split.seed == 9

    def test_amr_mode_flag_rederives_sites(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump(
            {"model": {"injection_sites": ["decoder_cross"]}}
        ))
        cfg = resolve_config(path, (), amr_mode="none")
        assert cfg.model.amr_mode == "none"
        assert cfg.model.injection_sites == ()

    def test_encoding_concat_forces_encoder_width(self):
        cfg = resolve_config(None, (), amr_mode="encoding_concat")
        assert cfg.amr_spec.output_dim == cfg.model.d_model

    def test_first_class_flags(self):
        cfg = resolve_config(
            None, (), proportion=0.25, copy_mode="pure", freeze=True,
            epochs=2, learning_rate=1e-3, batch_size=3,
        )
        assert cfg.split.proportion == 0.25
        assert cfg.copy.mode == "pure"
        assert cfg.amr_spec.frozen is True
        assert (cfg.epochs, cfg.learning_rate, cfg.batch_size) == (2, 1e-3, 3)


class TestCommands:
    def test_gen_synthetic_writes_corpus(self, workspace):
        records = [json.loads(line)
                   for line in (workspace / "data/dataset.jsonl").open()]
        assert len(records) == 20
        assert {"doc_id", "tokens", "trigger", "arguments", "amr"} <= set(records[0])
        assert (workspace / "data/ontology.json").exists()

    def test_parse_amr_builds_cache(self, workspace, runner):
        result = runner.invoke(main, [
            "parse-amr", "--dataset", str(workspace / "data/dataset.jsonl"),
            "--cache-dir", str(workspace / "cache"),
        ])
        assert result.exit_code == 0, result.output
        assert "cached 20 new graphs" in result.output
        again = runner.invoke(main, [
            "parse-amr", "--dataset", str(workspace / "data/dataset.jsonl"),
            "--cache-dir", str(workspace / "cache"),
        ])
        assert "cached 0 new graphs" in again.output

    def test_train_eval_predict(self, workspace, runner):
        result = runner.invoke(main, [
            "train", "--dataset", str(workspace / "data/dataset.jsonl"),
            "--ontology", str(workspace / "data/ontology.json"),
            "--epochs", "1", "--amr-mode", "none", *TINY_SETS,
            "-o", str(workspace / "run/model.pt"),
        ])
        assert result.exit_code == 0, result.output
        assert "best dev Arg-C" in result.output
        assert (workspace / "run/model.pt").exists()

        evaled = runner.invoke(main, [
            "eval", "--checkpoint", str(workspace / "run/model.pt"),
            "--dataset", str(workspace / "data/dataset.jsonl"),
            "--ontology", str(workspace / "data/ontology.json"),
        ])
        assert evaled.exit_code == 0, evaled.output
        assert "Arg-I" in evaled.output and "Arg-C" in evaled.output

        predicted = runner.invoke(main, [
            "predict", "--checkpoint", str(workspace / "run/model.pt"),
            "--ontology", str(workspace / "data/ontology.json"),
            "--passage", "mara sold the anvil .", "--trigger", "sold",
            "--event-type", "Commerce:Sell",
        ])
        assert predicted.exit_code == 0, predicted.output
        assert "Seller:" in predicted.output

    def test_predict_missing_graph_is_clean_error(self, workspace, runner):
        result = runner.invoke(main, [
            "train", "--dataset", str(workspace / "data/dataset.jsonl"),
            "--ontology", str(workspace / "data/ontology.json"),
            "--epochs", "0", "--amr-mode", "prefix", *TINY_SETS,
            "-o", str(workspace / "run/prefix.pt"),
        ])
        assert result.exit_code == 0, result.output
        predicted = runner.invoke(main, [
            "predict", "--checkpoint", str(workspace / "run/prefix.pt"),
            "--ontology", str(workspace / "data/ontology.json"),
            "--passage", "mara sold the anvil .", "--trigger", "sold",
            "--event-type", "Commerce:Sell",
        ])
        assert predicted.exit_code == 1
        assert "no cached AMR" in predicted.output
        assert "Traceback" not in predicted.output

    def test_train_rejects_unknown_set_path(self, workspace, runner):
        result = runner.invoke(main, [
            "train", "--dataset", str(workspace / "data/dataset.jsonl"),
            "--ontology", str(workspace / "data/ontology.json"),
            "--set", "model.dmodel=8",
        ])
        assert result.exit_code != 0
        assert "unknown config field" in result.output

    def test_ablate_prints_table(self, workspace, runner):
        result = runner.invoke(main, [
            "ablate", "--dataset", str(workspace / "data/dataset.jsonl"),
            "--ontology", str(workspace / "data/ontology.json"),
            "--epochs", "0", *TINY_SETS,
            "--amr-modes", "none", "--copy-modes", "plain,off",
            "--frozen", "false", "--seeds", "0",
            "--out", str(workspace / "table.txt"),
        ])
        assert result.exit_code == 0, result.output
        lines = result.output.splitlines()
        assert any("amr_mode" in line for line in lines)
        assert sum("none" in line for line in lines) == 2
        assert (workspace / "table.txt").exists()

    def test_ablate_rejects_unknown_mode(self, workspace, runner):
        result = runner.invoke(main, [
            "ablate", "--dataset", str(workspace / "data/dataset.jsonl"),
            "--ontology", str(workspace / "data/ontology.json"),
            "--amr-modes", "wavelet",
        ])
        assert result.exit_code != 0
