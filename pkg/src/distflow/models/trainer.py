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

from dataclasses import dataclass
import math
from typing import Any, Dict, Optional, Tuple

from loguru import logger
import numpy as np
import torch

from distflow.common.decorators import trace
from distflow.common.errors import ConfigurationError, NumericError, ShapeError, fail
from distflow.losses.batch import TrainingBatch
from distflow.losses.loss_report import LossReport
from distflow.losses.objective import Objective
from distflow.models.transformer import Transformer, forward, log_softmax

DEFAULT_LEARNING_RATE = 3e-4
DEFAULT_WEIGHT_DECAY = 0.01
DEFAULT_WARMUP_FRACTION = 0.05


@dataclass(frozen=True)
class OptimizerConfiguration:
    """Optimizer configuration class.

    Immutable dataclass for AdamW with a linear warmup followed by a constant learning rate.

    Attributes:
    learning_rate: Peak learning rate, >= 0.
    total_steps: Planned number of updates; the warmup is a fraction of it.
    warmup_fraction: Fraction of `total_steps` spent warming up.
    weight_decay: Decoupled weight decay applied to matrices and embeddings.
    betas: Adam moment coefficients.
    eps: Adam denominator constant.

    """

    learning_rate: float = DEFAULT_LEARNING_RATE
    total_steps: int = 1
    warmup_fraction: float = DEFAULT_WARMUP_FRACTION
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if not math.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise fail(ConfigurationError, "Invalid attribute [learning_rate: float] in OptimizerConfiguration.")
        if not isinstance(self.total_steps, int) or self.total_steps < 1:
            raise fail(ConfigurationError, "Invalid attribute [total_steps: int] in OptimizerConfiguration.")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise fail(ConfigurationError, "Invalid attribute [warmup_fraction: float] in OptimizerConfiguration.")
        if self.weight_decay < 0:
            raise fail(ConfigurationError, "Invalid attribute [weight_decay: float] in OptimizerConfiguration.")

    @property
    def warmup_steps(self) -> int:
        return int(math.ceil(self.warmup_fraction * self.total_steps))

    def factor(self, step: int) -> float:
        """Learning rate multiplier for the update with zero-based index `step`."""
        if self.warmup_steps == 0:
            return 1.0
        return min(1.0, (step + 1) / self.warmup_steps)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "learning_rate": self.learning_rate,
            "total_steps": self.total_steps,
            "warmup_fraction": self.warmup_fraction,
            "weight_decay": self.weight_decay,
            "betas": list(self.betas),
            "eps": self.eps,
        }


class Trainer:
    """Trainer class.

    Owns a model, its objective and its optimizer state, and applies one update per batch.

    Attributes:
        model: Transformer being trained.
        objective: Training objective.
        config: Optimizer configuration.
        step: Number of updates applied so far.

    """

    @trace()
    def __init__(self, model: Transformer, objective: Objective, config: OptimizerConfiguration) -> None:
        logger.info("Constructing trainer [{}]...", config.to_dict())
        self.model = model
        self.objective = objective
        self.config = config
        self.step = 0
        decay = [p for p in model.parameters() if p.dim() >= 2]
        no_decay = [p for p in model.parameters() if p.dim() < 2]
        self.optimizer = torch.optim.AdamW(
            [{"params": decay, "weight_decay": config.weight_decay}, {"params": no_decay, "weight_decay": 0.0}],
            lr=config.learning_rate,
            betas=config.betas,
            eps=config.eps,
            foreach=False,
        )
        self.scheduler = torch.optim.lr_scheduler.LambdaLR(self.optimizer, config.factor)

    @property
    def learning_rate(self) -> float:
        return float(self.optimizer.param_groups[0]["lr"])

    def train_step(self, batch: TrainingBatch, rng: Optional[np.random.Generator] = None) -> LossReport:
        """Apply one optimizer update on a teacher-forced batch.

        Args:
            batch: Non-empty batch.
            rng: Generator for contrastive negatives.

        Returns:
            Loss report of the batch, evaluated before the update.
        """
        if batch.size < 1:
            raise fail(ShapeError, "Cannot train on an empty batch.")
        self.model.train()
        self.optimizer.zero_grad(set_to_none=True)
        try:
            loss, report = self.objective(log_softmax(forward(self.model, batch.inputs)), batch, rng)
        except NumericError as error:
            error.diagnostic["step"] = self.step
            raise
        loss.backward()
        for name, parameter in self.model.named_parameters():
            if parameter.grad is not None and not torch.isfinite(parameter.grad).all():
                diagnostic = {"step": self.step, "parameter": name}
                raise fail(NumericError, "Non-finite gradient: {}".format(diagnostic), diagnostic=diagnostic)
        self.optimizer.step()
        self.scheduler.step()
        self.step += 1
        return report

    @torch.no_grad()
    def evaluate(self, batch: TrainingBatch, rng: Optional[np.random.Generator] = None) -> LossReport:
        """Loss report of a batch without updating the model."""
        self.model.eval()
        _, report = self.objective(log_softmax(forward(self.model, batch.inputs)), batch, rng)
        return report
