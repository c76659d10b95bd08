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

import pytest

from distflow.common.errors import ConfigurationError
from distflow.harness.ablation import ABLATION_VARIANTS, ablate, ablation_configurations
from distflow.harness.run_configuration import RunConfiguration
from distflow.harness.sweep import check_shared_evaluation, max_workers, MAX_WORKERS_VARIABLE, sweep
from distflow.losses.variants import LossVariant

TINY = {
    "task": "regression",
    "loss_variant": "dist",
    "tau": 1.0,
    "model": {"d_model": 8, "n_layers": 1, "n_heads": 2},
    "train_problems": 2,
    "steps": 2,
    "batch_size": 2,
    "test_problems": 2,
    "seeds": [1],
    "log_every": 1,
}


def tiny(**attributes) -> RunConfiguration:  # type: ignore
    return RunConfiguration.build(dict(TINY, **attributes))


def test_max_workers(monkeypatch) -> None:  # type: ignore
    monkeypatch.delenv(MAX_WORKERS_VARIABLE, raising=False)
    assert max_workers() is None
    monkeypatch.setenv(MAX_WORKERS_VARIABLE, "3")
    assert max_workers() == 3
    for value in ("0", "many"):
        monkeypatch.setenv(MAX_WORKERS_VARIABLE, value)
        with pytest.raises(ConfigurationError):
            max_workers()


def test_sweep_refuses_mismatched_evaluation() -> None:
    with pytest.raises(ConfigurationError):
        check_shared_evaluation([])
    with pytest.raises(ConfigurationError):
        check_shared_evaluation([tiny(), tiny(loss_variant="sft", test_problems=3)])
    with pytest.raises(ConfigurationError):
        check_shared_evaluation([tiny(), tiny(alpha=0.5)])
    check_shared_evaluation([tiny(), tiny(loss_variant="sft"), tiny(train_problems=1)])


def test_sweep_writes_table(tmp_path, monkeypatch) -> None:  # type: ignore
    monkeypatch.delenv(MAX_WORKERS_VARIABLE, raising=False)
    configs = [tiny(), tiny(loss_variant="sft")]
    rows = sweep(configs, tmp_path)
    assert [row.variant for row in rows] == [LossVariant.SFT, LossVariant.DIST]
    table = (tmp_path / "table.md").read_text(encoding="utf-8").splitlines()
    assert len(table) == 4
    data = json.loads((tmp_path / "sweep.json").read_text(encoding="utf-8"))
    assert data["metrics"] == ["mae", "rmse"]
    assert len(data["rows"]) == 2
    assert (tmp_path / "mae.svg").exists()
    assert rows == sweep(list(reversed(configs)), tmp_path / "again")


def test_ablation_configurations() -> None:
    configs = ablation_configurations(tiny(), seeds=(1, 2))
    assert tuple(config.loss_variant for config in configs) == ABLATION_VARIANTS
    assert all(config.seeds == (1, 2) for config in configs)
    assert len({json.dumps(config.eval_key()) for config in configs}) == 1
    with pytest.raises(ConfigurationError):
        ablation_configurations(tiny(task="codebook", codebook={"m": 8, "length": 4}, model={}))
    with pytest.raises(ConfigurationError):
        ablation_configurations(tiny(loss_variant="sft", tau=None))


def test_ablate_keeps_ablation_order(tmp_path, monkeypatch) -> None:  # type: ignore
    monkeypatch.delenv(MAX_WORKERS_VARIABLE, raising=False)
    rows = ablate(tiny(steps=1), tmp_path, seeds=(1,))
    assert tuple(row.variant for row in rows) == ABLATION_VARIANTS
    assert (tmp_path / "ablation.json").exists()
    assert (tmp_path / "table.md").read_text(encoding="utf-8").splitlines()[2].startswith("| dist |")
