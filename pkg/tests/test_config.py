import math

import pytest

from actor_expert.config import (
    ExperimentConfig,
    apply_overrides,
    format_config,
    load_config,
    parse_config,
)
from actor_expert.nn import ContractError


SAMPLE = """
# bimodal run
env = bimodal
agent = ae
seed = 3
total_steps = 20000
eval_period = 200
actor_lr = 0.001
refine = false
stop_at_return = nan
"""


def test_parse_reads_values_and_comments():
    cfg = parse_config(SAMPLE)
    assert cfg.env == "bimodal"
    assert cfg.agent == "ae"
    assert cfg.seed == 3
    assert cfg.total_steps == 20000
    assert cfg.actor_lr == 0.001
    assert cfg.refine is False
    assert math.isnan(cfg.stop_at_return)


def test_parse_keeps_defaults_for_absent_keys():
    cfg = parse_config("env = pendulum")
    assert cfg.batch_size == 32
    assert cfg.buffer_capacity == 1_000_000
    assert cfg.n_samples == 30
    assert cfg.rho == 0.2


def test_unknown_key_rejected():
    with pytest.raises(ContractError, match="unknown key"):
        parse_config("bogus = 1")


def test_duplicate_key_rejected():
    with pytest.raises(ContractError, match="duplicate"):
        parse_config("seed = 1\nseed = 2")


def test_malformed_line_rejected():
    with pytest.raises(ContractError, match="key = value"):
        parse_config("just some words")


def test_format_parse_round_trip():
    cfg = parse_config(SAMPLE)
    again = parse_config(format_config(cfg))
    # nan != nan, so compare the canonical text forms
    assert format_config(again) == format_config(cfg)


def test_load_config_from_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(SAMPLE)
    assert format_config(load_config(p)) == format_config(parse_config(SAMPLE))


def test_overrides_apply_in_order():
    cfg = ExperimentConfig()
    out = apply_overrides(cfg, ["seed=4", "agent=naf", "seed=9"])
    assert out.seed == 9
    assert out.agent == "naf"
    assert cfg.seed == 0


def test_override_shape_checked():
    with pytest.raises(ContractError, match="key=value"):
        apply_overrides(ExperimentConfig(), ["seed"])
    with pytest.raises(ContractError, match="unknown key"):
        apply_overrides(ExperimentConfig(), ["nope=1"])


def test_type_mismatches_rejected():
    with pytest.raises(ContractError, match="integer"):
        parse_config("seed = 1.5")
    with pytest.raises(ContractError, match="number"):
        parse_config("actor_lr = fast")
    with pytest.raises(ContractError, match="boolean"):
        parse_config("refine = maybe")


@pytest.mark.parametrize(
    "field,value",
    [
        ("agent", "sarsa"),
        ("env", "cartpole"),
        ("exploration", "boltzmann"),
        ("rho", 0.0),
        ("rho", 1.5),
        ("gamma", 1.2),
        ("tau", -0.1),
        ("slow_rate", 2.0),
        ("total_steps", -1),
        ("batch_size", 0),
        ("actor_lr", 0.0),
    ],
)
def test_validate_rejects_bad_values(field, value):
    from dataclasses import replace

    with pytest.raises(ContractError):
        replace(ExperimentConfig(), **{field: value}).validate()


def test_validate_accepts_defaults():
    ExperimentConfig().validate()
