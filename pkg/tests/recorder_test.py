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
from rx.subject import Subject

from distflow.common.errors import ContractViolation
from distflow.harness.events import EvaluationCompleted, SeedCompleted, StepCompleted, TrainingStarted
from distflow.harness.recorder import METRICS_FILE, MetricsRecorder, TIMING_FILE


def records(path) -> list:  # type: ignore
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]


def test_recorder_writes_events(tmp_path) -> None:  # type: ignore
    events = Subject()
    recorder = MetricsRecorder(tmp_path)
    events.subscribe(recorder)
    events.on_next(TrainingStarted(run_id="r", seed=1, variant="dist", train_problems=3, eval_hash="h"))
    events.on_next(StepCompleted(run_id="r", seed=1, step=1, learning_rate=0.1, elapsed=0.5))
    events.on_next(EvaluationCompleted(run_id="r", seed=1, step=1, metrics={"mae": 0.5}, eval_hash="h"))
    events.on_next(SeedCompleted(run_id="r", seed=1, steps=1, metrics={"mae": 0.5}, elapsed=1.0))
    events.on_completed()
    lines = records(tmp_path / METRICS_FILE)
    assert [line["event"] for line in lines] == ["start", "train", "eval", "final"]
    assert lines[0]["variant"] == "dist" and lines[0]["train_problems"] == 3
    assert all("elapsed" not in line for line in lines)
    assert [line["elapsed"] for line in records(tmp_path / TIMING_FILE)] == [0.5, 1.0]


def test_recorder_summary(tmp_path) -> None:  # type: ignore
    recorder = MetricsRecorder(tmp_path)
    for seed, mae in ((1, 0.25), (2, 0.75)):
        recorder.on_next(SeedCompleted(run_id="r", seed=seed, steps=1, metrics={"mae": mae}))
    recorder.close()
    summary = recorder.summary()
    assert summary["seeds"]["1"] == {"mae": 0.25}
    assert summary["mean"]["mae"] == 0.5
    assert summary["std"]["mae"] == pytest.approx(math.sqrt(0.125))


def test_recorder_rejects_backward_steps(tmp_path) -> None:  # type: ignore
    recorder = MetricsRecorder(tmp_path)
    recorder.on_next(StepCompleted(run_id="r", seed=1, step=5))
    with pytest.raises(ContractViolation):
        recorder.on_next(StepCompleted(run_id="r", seed=1, step=4))
    recorder.on_next(StepCompleted(run_id="r", seed=2, step=1))
    recorder.close()


def test_recorder_rejects_non_finite_metrics(tmp_path) -> None:  # type: ignore
    recorder = MetricsRecorder(tmp_path)
    with pytest.raises(ContractViolation):
        recorder.on_next(EvaluationCompleted(run_id="r", seed=1, step=0, metrics={"mae": math.nan}))
    recorder.close()
    with pytest.raises(ContractViolation):
        recorder.on_next(StepCompleted(run_id="r", seed=1, step=0))


def test_event_validation() -> None:
    with pytest.raises(ValueError):
        StepCompleted(run_id=1, seed=1)  # type: ignore
    with pytest.raises(ValueError):
        StepCompleted(run_id="r", seed="1")  # type: ignore
    assert StepCompleted(run_id="r", seed=1).event_id != StepCompleted(run_id="r", seed=1).event_id  # type: ignore
