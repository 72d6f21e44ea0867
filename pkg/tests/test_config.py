import pytest

from redforge.config import (
    FilterConfig,
    PipelineConfig,
    RecipeConfig,
    load_config,
    parse_ratio,
    sns_share,
)


def test_recipe_defaults_match_training_setup():
    recipe = RecipeConfig()
    assert recipe.cpt_seq_len == 4096
    assert recipe.sft_seq_len == 16384
    assert recipe.po_seq_len == 4096
    assert recipe.dpo_beta == 0.1
    assert recipe.sft_loss_coef == 0.3
    assert recipe.cpt_epochs == 1
    assert recipe.sft_step1_epochs == 3
    assert recipe.sft_step2_epochs == 2
    assert recipe.po_epochs == 2
    assert recipe.sft_batch_size == 128
    assert recipe.po_batch_size == 64
    assert recipe.warmup_ratio == 0.1
    assert recipe.cpt_lr == 1e-5
    assert recipe.sft_lr == 3e-6
    assert recipe.po_lr == 1e-7
    assert (recipe.adam_beta1, recipe.adam_beta2) == (0.9, 0.95)
    assert recipe.adam_epsilon == 1e-8


def test_recipe_manifest_layout():
    manifest = RecipeConfig().to_json_dict()
    assert manifest["epochs"] == {"cpt": 1, "sft_step1": 3, "sft_step2": 2, "po": 2}
    assert manifest["batch_size"] == {"sft": 128, "po": 64}
    assert manifest["learning_rate"] == {"cpt": 1e-5, "sft": 3e-6, "po": 1e-7}
    assert manifest["adam_betas"] == [0.9, 0.95]
    assert manifest["sft_loss_coef"] == 0.3


def test_filter_defaults():
    cfg = FilterConfig()
    assert cfg.min_tokens == 10
    assert cfg.max_tokens == 65536
    assert cfg.repetition_threshold == 0.3
    assert cfg.retention_target == 0.20
    assert cfg.scorer_order == 2
    assert cfg.smoothing_k == 1.0


def test_mixture_and_pref_defaults():
    cfg = PipelineConfig()
    assert cfg.mixture.samples == 512
    assert cfg.mixture.search == 100000
    assert cfg.mixture.top_k == 32
    assert cfg.mixture.prune_epsilon == 1e-3
    assert cfg.pref.tau == 0.8
    assert cfg.pack.threshold == 4096
    assert (cfg.sft.r1, cfg.sft.r2) == ("1:3", "4:1")


def test_parse_ratio():
    assert parse_ratio("1:3") == (1, 3)
    assert parse_ratio("4:1") == (4, 1)
    assert sns_share((1, 3)) == 0.25
    for bad in ("1:3:4", "x:1", "0:3", "-1:2"):
        with pytest.raises(ValueError):
            parse_ratio(bad)


def test_load_config_with_overrides(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text(
        "seed = 11\n\n[filter]\nmin_tokens = 5\n\n[pack]\nthreshold = 128\n\n"
        "[sft]\nr1 = \"1:2\"\n\n[io]\ncorpus = \"corpus.jsonl\"\n",
        encoding="utf-8",
    )
    cfg = load_config(path)
    assert cfg.seed == 11
    assert cfg.filter.min_tokens == 5
    assert cfg.filter.max_tokens == 65536  # untouched default
    assert cfg.pack.threshold == 128
    assert cfg.sft.r1 == "1:2"
    assert cfg.inputs["corpus"] == str(tmp_path / "corpus.jsonl")


def test_load_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text("[filter]\nmin_token = 5\n", encoding="utf-8")
    with pytest.raises(ValueError, match="unknown key"):
        load_config(path)


def test_load_config_rejects_invalid_values(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text("[filter]\nretention_target = 1.5\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_config(path)
    path.write_text("seed = \"x\"\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_config(path)


def test_sequence_lengths_validated():
    with pytest.raises(ValueError):
        RecipeConfig(cpt_seq_len=0)
    with pytest.raises(ValueError):
        RecipeConfig(dpo_beta=0.0)
