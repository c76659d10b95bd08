#  ********************************************************************************
#
#       ___     __  ______
#   ___/ (_)__ / /_/ _/ /__ _    __
#  / _  / (_-</ __/ _/ / _ \ |/|/ /     Distance-Aware Training
#  \_,_/_/___/\__/_//_/\___/__,__/      for Autoregressive Models
#
#  Copyright (c) 2021-2022 FarSimple Oy.
#
#  The MIT License (MIT)
#
#  Permission is hereby granted, free of charge, to any person obtaining a copy of this software
#  and associated documentation files (the "Software"), to deal in the Software without restriction,
#  including without limitation the rights to use, copy, modify, merge, publish, distribute, sublicense,
#  and/or sell copies of the Software, and to permit persons to whom the Software is furnished to do so,
#  subject to the following conditions:
#
#  The above copyright notice and this permission notice shall be included
#  in all copies or substantial portions of the Software.
#
#  THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR IMPLIED,
#  INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
#  FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT.
#  IN NO EVENT SHALL THE AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER LIABILITY,
#  WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM, OUT OF OR IN CONNECTION WITH
#  THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE SOFTWARE.
#  ********************************************************************************
from __future__ import annotations

import json
import math

import pytest

from distflow.common.errors import ConfigurationError
from distflow.harness.run_configuration import (
    expand_grid,
    load_configurations,
    load_run_configuration,
    RunConfiguration,
    TaskKind,
)
from distflow.losses.variants import KLRestriction, LossVariant
from distflow.tasks.regression import PlaceValueMode


def test_constructor_defaults() -> None:
    config = RunConfiguration(task=TaskKind.REGRESSION, loss_variant=LossVariant.SFT)
    assert config.model is not None
    assert config.model.vocab_size == 20
    assert config.model.max_seq_len == 72
    assert config.run_id == "regression-sft-p10"
    assert config.place_value_mode == PlaceValueMode.DECIMAL


def test_distance_variants_need_tau() -> None:
    with pytest.raises(ConfigurationError):
        RunConfiguration(task=TaskKind.REGRESSION, loss_variant=LossVariant.DIST)
    config = RunConfiguration(task=TaskKind.REGRESSION, loss_variant=LossVariant.DIST, tau="entropy:1")
    assert config.tau == "entropy:1.0"


def test_constructor_validation() -> None:
    invalid = (
        {"alpha": -1.0},
        {"steps": 0},
        {"seeds": ()},
        {"seeds": (1, 1)},
        {"eval_every": -1},
        {"weight_decay": -0.01},
        {"weight_decay": math.inf},
    )
    for attributes in invalid:
        with pytest.raises(ConfigurationError):
            RunConfiguration(task=TaskKind.REGRESSION, loss_variant=LossVariant.SFT, **attributes)


def test_build() -> None:
    config = RunConfiguration.build(
        {"task": "regression", "loss_variant": "dist", "tau": 2, "kl_restriction": "renormalized", "seeds": [3, 4]}
    )
    assert config.loss_variant == LossVariant.DIST
    assert config.kl_restriction == KLRestriction.RENORMALIZED
    assert config.tau == 2.0
    assert config.seeds == (3, 4)
    with pytest.raises(ConfigurationError):
        RunConfiguration.build({"task": "regression", "loss_variant": "sft", "colour": "red"})
    with pytest.raises(ConfigurationError):
        RunConfiguration.build({"task": "regression"})
    with pytest.raises(ConfigurationError):
        RunConfiguration.build({"task": "regression", "loss_variant": "magic"})
    with pytest.raises(TypeError):
        RunConfiguration.build([])  # type: ignore


def test_codebook_configuration() -> None:
    config = RunConfiguration.build(
        {"task": "codebook", "loss_variant": "dist", "tau": 1.0, "codebook": {"m": 32, "length": 16}}
    )
    assert config.vocab_size == 33
    assert config.model.vocab_size == 33  # type: ignore
    assert config.model.max_seq_len == 17  # type: ignore
    assert config.eval_key()["codebook"]["m"] == 32
    with pytest.raises(ConfigurationError):
        RunConfiguration.build(
            {"task": "codebook", "loss_variant": "sft", "model": {"vocab_size": 20}, "codebook": {"m": 32}}
        )


def test_canonical_round_trip() -> None:
    config = RunConfiguration.build({"task": "regression", "loss_variant": "label_smooth", "tau": 0.5})
    rebuilt = RunConfiguration.build(json.loads(config.canonical()))
    assert rebuilt == config
    assert rebuilt.config_hash() == config.config_hash()
    assert config.copy(alpha=0.2).config_hash() != config.config_hash()


def test_eval_key_ignores_training_settings() -> None:
    config = RunConfiguration(task=TaskKind.REGRESSION, loss_variant=LossVariant.SFT)
    assert config.copy(train_problems=3, steps=9).eval_key() == config.eval_key()
    assert config.copy(test_problems=7).eval_key() != config.eval_key()


def test_expand_grid() -> None:
    configs = expand_grid(
        {
            "base": {"task": "regression", "tau": 1.0},
            "grid": {"train_problems": [1, 2], "loss_variant": ["sft", "dist"]},
        }
    )
    assert [(c.loss_variant.label, c.train_problems) for c in configs] == [
        ("sft", 1),
        ("sft", 2),
        ("dist", 1),
        ("dist", 2),
    ]
    with pytest.raises(ConfigurationError):
        expand_grid({"base": {"task": "regression"}, "grid": {"loss_variant": []}})


def test_load_configurations(tmp_path) -> None:  # type: ignore
    single = tmp_path / "single.json"
    single.write_text(json.dumps({"task": "regression", "loss_variant": "sft"}), encoding="utf-8")
    assert load_run_configuration(single).loss_variant == LossVariant.SFT
    runs = tmp_path / "runs.json"
    entries = [{"task": "regression", "loss_variant": "sft"}, {"task": "regression", "loss_variant": "vocab"}]
    runs.write_text(json.dumps({"runs": entries}), encoding="utf-8")
    assert [config.loss_variant for config in load_configurations(runs)] == [LossVariant.SFT, LossVariant.VOCAB]
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_run_configuration(broken)
    with pytest.raises(ConfigurationError):
        load_configurations(tmp_path / "missing.json")
