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

from abc import ABC
from dataclasses import dataclass, field
from typing import Any, Dict, Optional
from uuid import uuid4

from loguru import logger

from distflow.losses.loss_report import LossReport


@dataclass(frozen=True)  # type: ignore
class Event(ABC):
    """Event class.

    Immutable dataclass for training events data.

    Attributes:
    run_id: Run identifier.
    seed: Seed of the training run.

    """

    run_id: str
    seed: int

    def __post_init__(self) -> None:
        if not isinstance(self.run_id, str):
            message = "Invalid type for attribute [run_id: str] in {}.".format(type(self).__name__)
            logger.error(message)
            raise ValueError(message)
        if not isinstance(self.seed, int):
            message = "Invalid type for attribute [seed: int] in {}.".format(type(self).__name__)
            logger.error(message)
            raise ValueError(message)
        object.__setattr__(self, "event_id", str(uuid4()))


@dataclass(frozen=True)
class TrainingStarted(Event):
    """Training started event.

    Attributes:
    variant: Loss variant label.
    train_problems: Number of training problems.
    config_hash: Content hash of the run configuration.
    eval_hash: Content hash of the evaluation set.
    parameters: Number of model parameters.

    """

    variant: str = ""
    train_problems: int = 0
    config_hash: str = ""
    eval_hash: str = ""
    parameters: int = 0


@dataclass(frozen=True)
class StepCompleted(Event):
    """Optimizer step event.

    Attributes:
    step: One-based index of the completed update.
    report: Loss report of the batch.
    learning_rate: Learning rate used by the update.
    elapsed: Wall-clock seconds since the seed started.

    """

    step: int = 0
    report: Optional[LossReport] = None
    learning_rate: float = 0.0
    elapsed: float = 0.0


@dataclass(frozen=True)
class EvaluationCompleted(Event):
    """Evaluation event.

    Attributes:
    step: Number of updates applied before the evaluation.
    metrics: Task metrics (`mae`, `rmse` or `top1`, `expected_distance`).
    eval_hash: Content hash of the evaluation set.
    elapsed: Wall-clock seconds since the seed started.

    """

    step: int = 0
    metrics: Dict[str, float] = field(default_factory=dict)
    eval_hash: str = ""
    elapsed: float = 0.0


@dataclass(frozen=True)
class SeedCompleted(Event):
    """Seed completed event, carrying the final evaluation.

    Attributes:
    steps: Number of updates applied.
    metrics: Final task metrics.
    elapsed: Wall-clock seconds of the seed.

    """

    steps: int = 0
    metrics: Dict[str, float] = field(default_factory=dict)
    elapsed: float = 0.0


@dataclass(frozen=True)
class TrainingFailed(Event):
    """Training failed event.

    Attributes:
    step: Update index at which training failed.
    message: Error message.
    diagnostic: Diagnostic details of the failure.

    """

    step: int = 0
    message: str = ""
    diagnostic: Dict[str, Any] = field(default_factory=dict)
