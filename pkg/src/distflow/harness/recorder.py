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
from pathlib import Path
from typing import Any, Dict, IO, List, Optional

from loguru import logger
from rx.core import Observer

from distflow.common.decorators import trace
from distflow.common.errors import ContractViolation, fail
from distflow.common.helpers import mean_std
from distflow.harness.events import (
    EvaluationCompleted,
    Event,
    SeedCompleted,
    StepCompleted,
    TrainingFailed,
    TrainingStarted,
)

METRICS_FILE = "metrics.jsonl"
TIMING_FILE = "timing.jsonl"
SUMMARY_FILE = "summary.json"


def _line(record: Dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


class MetricsRecorder(Observer):
    """Metrics recorder class.

    Observes training events and appends them as JSON lines: losses and evaluations to
    `metrics.jsonl`, wall-clock timings to `timing.jsonl`. Metrics lines carry no timings, so
    identical runs write identical metrics files.

    Attributes:
        out: Output directory.

    """

    @trace()
    def __init__(self, out: Path) -> None:
        logger.info("Constructing metrics recorder [{}]...", out)
        super().__init__()
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self._metrics: Optional[IO[str]] = (self.out / METRICS_FILE).open("w", encoding="utf-8")
        self._timing: Optional[IO[str]] = (self.out / TIMING_FILE).open("w", encoding="utf-8")
        self._last_step: Dict[Any, int] = {}
        self.final: Dict[int, Dict[str, float]] = {}
        self.failures: List[Dict[str, Any]] = []

    def _write(self, record: Dict[str, Any]) -> None:
        for key, value in record.items():
            if isinstance(value, float) and not math.isfinite(value):
                raise fail(ContractViolation, "Metrics record field [{}] is not finite.".format(key))
        if "step" in record:
            key = (record["run_id"], record["seed"], record["event"])
            if record["step"] < self._last_step.get(key, -1):
                raise fail(ContractViolation, "Step index went backwards in [{}].".format(key))
            self._last_step[key] = record["step"]
        if self._metrics is None:
            raise fail(ContractViolation, "Metrics recorder is closed.")
        self._metrics.write(_line(record))
        self._metrics.flush()

    def _time(self, event: Event, step: int, elapsed: float) -> None:
        if self._timing is not None:
            self._timing.write(_line({"run_id": event.run_id, "seed": event.seed, "step": step, "elapsed": elapsed}))

    def on_next(self, event: Event) -> None:
        """Handles training events.

        Args:
            event: Training event.

        """
        base = {"run_id": event.run_id, "seed": event.seed}
        if isinstance(event, TrainingStarted):
            self._write(
                dict(
                    base,
                    event="start",
                    variant=event.variant,
                    train_problems=event.train_problems,
                    config_hash=event.config_hash,
                    eval_hash=event.eval_hash,
                    parameters=event.parameters,
                )
            )
        elif isinstance(event, StepCompleted):
            report = event.report
            record = dict(base, event="train", step=event.step, learning_rate=event.learning_rate)
            if report is not None:
                record.update(report.to_dict())
            self._write(record)
            self._time(event, event.step, event.elapsed)
        elif isinstance(event, EvaluationCompleted):
            self._write(dict(base, event="eval", step=event.step, eval_hash=event.eval_hash, **event.metrics))
            logger.info("[{}] seed {} step {}: {}", event.run_id, event.seed, event.step, event.metrics)
        elif isinstance(event, SeedCompleted):
            self.final[event.seed] = dict(event.metrics)
            self._write(dict(base, event="final", step=event.steps, **event.metrics))
            self._time(event, event.steps, event.elapsed)
        elif isinstance(event, TrainingFailed):
            self.failures.append(dict(base, step=event.step, message=event.message))
            self._write(dict(base, event="failed", step=event.step, message=event.message))
        else:
            message = "Invalid event type [{}] for metrics recorder.".format(type(event).__name__)
            logger.error(message)
            raise ValueError(message)

    def on_error(self, error: Exception) -> None:
        logger.error("Training stream failed: {}", error)
        self.close()

    def on_completed(self) -> None:
        self.close()

    def close(self) -> None:
        for handle in (self._metrics, self._timing):
            if handle is not None:
                handle.close()
        self._metrics = None
        self._timing = None

    def summary(self) -> Dict[str, Any]:
        """Per-seed final metrics with their mean and sample standard deviation over seeds."""
        seeds = sorted(self.final.keys())
        names = sorted({name for metrics in self.final.values() for name in metrics})
        aggregate: Dict[str, Dict[str, float]] = {"mean": {}, "std": {}}
        for name in names:
            mean, std = mean_std(self.final[seed][name] for seed in seeds if name in self.final[seed])
            aggregate["mean"][name] = mean
            aggregate["std"][name] = std
        return {
            "seeds": {str(seed): self.final[seed] for seed in seeds},
            "mean": aggregate["mean"],
            "std": aggregate["std"],
        }
