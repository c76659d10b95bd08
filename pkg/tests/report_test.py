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

from pathlib import Path

import pytest

from distflow.common.errors import ConfigurationError
from distflow.harness.report import (
    aggregate,
    FinalResult,
    read_results,
    render_csv,
    render_svg,
    report,
    REGRESSION_METRICS,
)
from distflow.losses.variants import LossVariant

FIXTURES = Path(__file__).parent / "fixtures"


def test_read_results() -> None:
    results = read_results([FIXTURES / "metrics.jsonl"])
    assert len(results) == 4
    assert results[0] == FinalResult(
        variant=LossVariant.DIST, train_problems=1, seed=1, metrics={"mae": 0.125, "rmse": 0.25}, eval_hash="e0"
    )


def test_report_matches_golden_table(tmp_path) -> None:  # type: ignore
    rows = report([FIXTURES / "metrics.jsonl"], tmp_path)
    assert [row.variant for row in rows] == [LossVariant.SFT, LossVariant.DIST]
    expected = (FIXTURES / "table.md").read_text(encoding="utf-8")
    assert (tmp_path / "table.md").read_text(encoding="utf-8") == expected
    csv = (tmp_path / "table.csv").read_text(encoding="utf-8").splitlines()
    assert csv[0] == "variant,train_problems,seeds,mae_mean,mae_std,rmse_mean,rmse_std"
    assert csv[1].startswith("sft,1,2,0.375,")
    assert (tmp_path / "mae.svg").exists()


def test_report_accepts_run_directories(tmp_path) -> None:  # type: ignore
    run = tmp_path / "run"
    run.mkdir()
    (run / "metrics.jsonl").write_text((FIXTURES / "metrics.jsonl").read_text(encoding="utf-8"), encoding="utf-8")
    assert len(report([run], tmp_path / "out")) == 2


def test_svg_is_byte_stable() -> None:
    rows = aggregate(read_results([FIXTURES / "metrics.jsonl"]))
    first = render_svg(rows, "mae")
    assert first == render_svg(rows, "mae")
    assert first.startswith("<?xml")
    assert render_svg(rows, "mae", invert=False) != first


def test_report_errors(tmp_path) -> None:  # type: ignore
    empty = tmp_path / "empty.jsonl"
    empty.write_text('{"event":"start","run_id":"r","seed":1,"train_problems":1,"variant":"sft"}\n', encoding="utf-8")
    with pytest.raises(ConfigurationError):
        report([empty], tmp_path / "out")
    with pytest.raises(ConfigurationError):
        report([tmp_path / "missing.jsonl"], tmp_path / "out")
    broken = tmp_path / "broken.jsonl"
    broken.write_text('{"event":"final","run_id":"r","seed":1}\n', encoding="utf-8")
    with pytest.raises(ConfigurationError):
        read_results([broken])
    with pytest.raises(ConfigurationError):
        report([FIXTURES / "metrics.jsonl", FIXTURES / "metrics.jsonl"], tmp_path / "out")


def test_aggregate_single_seed_has_zero_std() -> None:
    result = FinalResult(variant=LossVariant.VOCAB, train_problems=2, seed=4, metrics={"mae": 0.5, "rmse": 0.5})
    rows = aggregate([result])
    assert rows[0].std == {"mae": 0.0, "rmse": 0.0}
    assert render_csv(rows, REGRESSION_METRICS).splitlines()[1] == "vocab,2,1,0.5,0.0,0.5,0.0"
