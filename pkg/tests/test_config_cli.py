"""Configuration validation and the command-line workflow."""

import json

import pytest
import yaml
from click.testing import CliRunner

from conftest import make_corpus
from quartz.cli import main
from quartz.config import (
    BackendConfig,
    RunConfig,
    build_registry,
    default_api_key_env,
    load_config,
)
from quartz.errors import ConfigError
from quartz.gateway.client import HttpBackend
from quartz.gateway.mock import MockBackend
from quartz.pipeline.types import LORA_HYPERPARAMETERS


def base_config(corpus_path, **overrides):
    config = {
        "models": [
            {"name": "mock-0", "backend": {"type": "mock", "coverage": 1.0}},
            {"name": "mock-1", "backend": {"type": "mock", "coverage": 0.34}},
        ],
        "dataset": {"path": str(corpus_path), "format": "native"},
        "n_rank_samples": 3,
        "parallelism": 1,
    }
    config.update(overrides)
    return config


def write_corpus(tmp_path, size=2, fact_count=3, with_reference=True):
    path = tmp_path / "corpus.jsonl"
    corpus = make_corpus(size, fact_count, with_reference=with_reference)
    path.write_text(
        "".join(json.dumps(d.to_record() | ({"reference": d.reference} if d.reference else {})) + "\n" for d in corpus),
        encoding="utf-8",
    )
    return path


def write_config(tmp_path, config):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(config), encoding="utf-8")
    return path


class TestConfig:
    def test_defaults(self, tmp_path):
        path = write_config(tmp_path, base_config(write_corpus(tmp_path)))
        config = load_config(path)
        assert config.alpha_self == 0.8
        assert config.n_rank_samples == 3
        assert config.global_seed == 0
        assert config.record_exchanges is True

    def test_unknown_key_rejected(self, tmp_path):
        config = base_config(write_corpus(tmp_path), bogus_knob=1)
        path = write_config(tmp_path, config)
        with pytest.raises(ConfigError) as excinfo:
            load_config(path)
        assert "bogus_knob" in str(excinfo.value)

    def test_needs_two_models(self, tmp_path):
        config = base_config(write_corpus(tmp_path))
        config["models"] = config["models"][:1]
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, config))

    def test_duplicate_model_names(self, tmp_path):
        config = base_config(write_corpus(tmp_path))
        config["models"][1]["name"] = "mock-0"
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, config))

    def test_alpha_bounds(self, tmp_path):
        config = base_config(write_corpus(tmp_path), alpha_self=0.0)
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, config))

    def test_openai_backend_needs_url_and_model(self, tmp_path):
        config = base_config(write_corpus(tmp_path))
        config["models"][0]["backend"] = {"type": "openai", "url": "http://x"}
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, config))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.yaml")

    def test_default_api_key_env(self):
        assert default_api_key_env("Llama-3.1 8B") == "QUARTZ_API_KEY_LLAMA_3_1_8B"

    def test_registry_construction(self, tmp_path):
        config = base_config(write_corpus(tmp_path))
        config["models"][0]["backend"] = {
            "type": "openai",
            "url": "http://localhost:8000/v1/chat/completions",
            "model": "llama",
        }
        run_config = load_config(write_config(tmp_path, config))
        registry = build_registry(run_config.models, run_config)
        assert isinstance(registry.backend("mock-0"), HttpBackend)
        assert registry.backend("mock-0").api_key_env == default_api_key_env("mock-0")
        assert isinstance(registry.backend("mock-1"), MockBackend)

    def test_key_env_not_serialized_with_secrets(self):
        # config schema has no field for a literal key, only an env var name
        assert "api_key" not in {
            name for name in BackendConfig.model_fields if name != "api_key_env"
        }
        assert "api_key_env" in RunConfig.model_json_schema()["$defs"]["BackendConfig"]["properties"]


class TestCliWorkflow:
    def _invoke(self, args):
        result = CliRunner().invoke(main, args, catch_exceptions=False)
        assert result.exit_code == 0, result.output
        return result

    def test_stagewise_run(self, tmp_path):
        corpus_path = write_corpus(tmp_path)
        config_path = write_config(
            tmp_path, base_config(corpus_path, artifacts_root=str(tmp_path / "runs"))
        )
        common = ["--config", str(config_path), "--run-id", "r1"]
        self._invoke(["generate-summaries", *common])
        self._invoke(["generate-qa", *common])
        self._invoke(["answer", *common])
        self._invoke(["stage1", *common])
        self._invoke(["stage2", *common])
        self._invoke(["export-finetune", *common])
        self._invoke(["evaluate", *common])

        run_dir = tmp_path / "runs" / "r1"
        for stage in ("corpus", "summaries", "qa", "answers", "stage1", "stage2", "finetune", "metrics"):
            assert (run_dir / f"{stage}.jsonl").exists(), stage
        sidecar = json.loads((run_dir / "finetune.meta.json").read_text())
        assert sidecar["hyperparameters"] == LORA_HYPERPARAMETERS

    def test_stage_requires_upstream(self, tmp_path):
        config_path = write_config(
            tmp_path,
            base_config(write_corpus(tmp_path), artifacts_root=str(tmp_path / "runs")),
        )
        result = CliRunner().invoke(
            main, ["stage2", "--config", str(config_path), "--run-id", "r9"]
        )
        assert result.exit_code != 0
        assert "artifact" in result.output

    def test_run_all_with_judges_and_sweep(self, tmp_path):
        corpus_path = write_corpus(tmp_path, size=2)
        config = base_config(corpus_path, artifacts_root=str(tmp_path / "runs"))
        config["models"].append(
            {"name": "mock-2", "backend": {"type": "mock", "coverage": 0.67}}
        )
        config["judges"] = [
            {"name": "judge-a", "backend": {"type": "mock", "judge_score": 4}}
        ]
        config_path = write_config(tmp_path, config)
        common = ["--config", str(config_path), "--run-id", "full"]
        self._invoke(["run-all", *common])
        self._invoke(["pool-sweep", "--size", "2", *common])

        run_dir = tmp_path / "runs" / "full"
        metrics = [
            json.loads(line)
            for line in (run_dir / "metrics.jsonl").read_text().splitlines()
        ]
        kinds = {record["kind"] for record in metrics}
        assert {"reference", "judge_aggregate", "pool_sweep_2"} <= kinds
        judge_rows = [r for r in metrics if r["kind"] == "judge_aggregate"]
        assert {"mock-0", "mock-1", "mock-2", "best_selected"} == {
            r["row"] for r in judge_rows
        }

    def test_finalized_stage_refuses_overwrite(self, tmp_path):
        config_path = write_config(
            tmp_path,
            base_config(write_corpus(tmp_path), artifacts_root=str(tmp_path / "runs")),
        )
        common = ["--config", str(config_path), "--run-id", "r2"]
        self._invoke(["generate-summaries", *common])
        result = CliRunner().invoke(main, ["generate-summaries", *common])
        assert result.exit_code != 0
        assert "finalized" in result.output

    def test_resume_skips_existing(self, tmp_path):
        config_path = write_config(
            tmp_path,
            base_config(write_corpus(tmp_path), artifacts_root=str(tmp_path / "runs")),
        )
        common = ["--config", str(config_path), "--run-id", "r3"]
        self._invoke(["generate-summaries", *common])
        result = self._invoke(["generate-summaries", *common, "--resume"])
        assert "skipping" in result.output

    def test_seed_override_changes_artifacts(self, tmp_path):
        corpus_path = write_corpus(tmp_path)
        config = base_config(corpus_path, artifacts_root=str(tmp_path / "runs"))
        # noisy evaluators make the stage-1 outcome seed-sensitive
        for model in config["models"]:
            model["backend"]["rank_noise"] = 0.4
        config_path = write_config(tmp_path, config)
        outputs = {}
        for run_id, seed in (("s0", "0"), ("s1", "7")):
            common = ["--config", str(config_path), "--run-id", run_id, "--seed", seed]
            for command in ("generate-summaries", "generate-qa", "answer", "stage1"):
                self._invoke([command, *common])
            outputs[run_id] = (tmp_path / "runs" / run_id / "stage1.jsonl").read_bytes()
        assert outputs["s0"] != outputs["s1"]
