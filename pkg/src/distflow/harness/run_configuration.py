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

from dataclasses import dataclass, field
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from loguru import logger

from distflow.common.decorators import trace
from distflow.common.errors import ConfigurationError, fail
from distflow.common.helpers import FromStringEnum, canonical_json, content_hash
from distflow.losses.variants import KLRestriction, LossVariant, Reduction
from distflow.models.model_configuration import ModelConfiguration
from distflow.targets.target_configuration import parse_tau_setting
from distflow.tasks.regression import PlaceValueMode
from distflow.tasks.tokenizer import NumericTokenization

REGRESSION_MAX_SEQ_LEN = 72
DEFAULT_TEST_PROBLEMS = 200
FULL_TEST_PROBLEMS = 1000


class TaskKind(FromStringEnum):
    """Evaluation task enum."""

    REGRESSION = 0
    CODEBOOK = 1


@dataclass(frozen=True)
class CodebookSettings:
    """Codebook settings class.

    Immutable dataclass sizing the synthetic codebook task.

    Attributes:
    m: Codebook size.
    d: Embedding dimension.
    length: Codebook tokens per sequence.
    tau_gen: Generator temperature.
    sequences: Number of training sequences.
    held_out: Number of evaluation sequences.

    """

    m: int = 256
    d: int = 16
    length: int = 64
    tau_gen: float = 0.25
    sequences: int = 512
    held_out: int = 64

    def __post_init__(self) -> None:
        for name in ("m", "d", "length", "sequences", "held_out"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise fail(ConfigurationError, "Invalid attribute [{}: int] in CodebookSettings.".format(name))
        if not isinstance(self.tau_gen, (int, float)) or not self.tau_gen > 0:
            raise fail(ConfigurationError, "Invalid attribute [tau_gen: float] in CodebookSettings.")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "m": self.m,
            "d": self.d,
            "length": self.length,
            "tau_gen": self.tau_gen,
            "sequences": self.sequences,
            "held_out": self.held_out,
        }

    @staticmethod
    def build(config: Dict) -> CodebookSettings:
        defaults = CodebookSettings()
        return CodebookSettings(**{key: config.get(key, value) for key, value in defaults.to_dict().items()})


@dataclass(frozen=True)
class RunConfiguration:
    """Run configuration class.

    Immutable dataclass describing one experiment: task, objective, model, optimizer and seeds.

    Attributes:
    task: Evaluation task.
    loss_variant: Training objective.
    alpha: Weight of the auxiliary loss term.
    tau: Target temperature, a number or `entropy:<nats>`; required by distance variants.
    model: Model shape; `vocab_size` follows from the task.
    train_problems: Number of training problems (regression task).
    steps: Optimizer updates per seed.
    seeds: Seeds, one training run each.
    kl_restriction: Likelihood restriction inside the distance loss.
    reduction: Reduction over positions.
    batch_size: Sequences per update.
    learning_rate: Peak learning rate.
    warmup_fraction: Fraction of steps spent warming up.
    weight_decay: Decoupled weight decay.
    eval_every: Evaluate every that many steps; 0 evaluates before and after training only.
    log_every: Record losses every that many steps.
    eval_seed: Seed of the evaluation set, shared by every run it is compared with.
    test_problems: Size of the regression evaluation set.
    contrastive_radius: Neighbourhood radius of contrastive negatives.
    label_smoothing: Smoothing value of the label-smoothing variant.
    place_value_mode: Place weighting of regression answers.
    threads: torch intra-op threads.
    codebook: Codebook task settings.

    """

    task: TaskKind
    loss_variant: LossVariant
    alpha: float = 0.1
    tau: Optional[Union[float, str]] = None
    model: Optional[ModelConfiguration] = None
    train_problems: int = 10
    steps: int = 250
    seeds: Tuple[int, ...] = (1, 2, 3, 4, 5)
    kl_restriction: KLRestriction = KLRestriction.LITERAL
    reduction: Reduction = Reduction.MEAN
    batch_size: int = 8
    learning_rate: float = 3e-4
    warmup_fraction: float = 0.05
    weight_decay: float = 0.01
    eval_every: int = 0
    log_every: int = 10
    eval_seed: int = 0
    test_problems: int = DEFAULT_TEST_PROBLEMS
    contrastive_radius: int = 2
    label_smoothing: float = 0.1
    place_value_mode: PlaceValueMode = PlaceValueMode.DECIMAL
    threads: int = 1
    codebook: CodebookSettings = field(default_factory=CodebookSettings)

    def __post_init__(self) -> None:
        if not isinstance(self.task, TaskKind):
            raise fail(ConfigurationError, "Invalid type for attribute [task: TaskKind] in RunConfiguration.")
        if not isinstance(self.loss_variant, LossVariant):
            message = "Invalid type for attribute [loss_variant: LossVariant] in RunConfiguration."
            raise fail(ConfigurationError, message)
        if isinstance(self.alpha, bool) or not isinstance(self.alpha, (int, float)):
            raise fail(ConfigurationError, "Invalid type for attribute [alpha: float] in RunConfiguration.")
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise fail(ConfigurationError, "Invalid attribute [alpha: float] in RunConfiguration. Must be >= 0.")
        if self.loss_variant.uses_distance_loss and self.tau is None:
            raise fail(
                ConfigurationError,
                "Missing required attribute [tau] in RunConfiguration for variant [{}].".format(
                    self.loss_variant.label
                ),
            )
        if self.tau is not None:
            object.__setattr__(self, "tau", parse_tau_setting(self.tau))
        for name in ("train_problems", "steps", "batch_size", "test_problems", "threads", "log_every"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise fail(
                    ConfigurationError, "Invalid attribute [{}: int] in RunConfiguration. Must be >= 1.".format(name)
                )
        if not isinstance(self.eval_every, int) or self.eval_every < 0:
            raise fail(ConfigurationError, "Invalid attribute [eval_every: int] in RunConfiguration. Must be >= 0.")
        if not self.seeds or not all(isinstance(seed, int) and not isinstance(seed, bool) for seed in self.seeds):
            raise fail(ConfigurationError, "Invalid attribute [seeds] in RunConfiguration. Needs at least one integer.")
        object.__setattr__(self, "seeds", tuple(self.seeds))
        if len(set(self.seeds)) != len(self.seeds):
            raise fail(ConfigurationError, "Invalid attribute [seeds] in RunConfiguration. Seeds must be distinct.")
        if not math.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise fail(ConfigurationError, "Invalid attribute [learning_rate: float] in RunConfiguration.")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise fail(ConfigurationError, "Invalid attribute [warmup_fraction: float] in RunConfiguration.")
        if not math.isfinite(self.weight_decay) or self.weight_decay < 0:
            raise fail(ConfigurationError, "Invalid attribute [weight_decay: float] in RunConfiguration. Must be >= 0.")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise fail(ConfigurationError, "Invalid attribute [label_smoothing: float] in RunConfiguration.")
        if not isinstance(self.contrastive_radius, int) or self.contrastive_radius < 1:
            raise fail(ConfigurationError, "Invalid attribute [contrastive_radius: int] in RunConfiguration.")
        vocab_size = self.vocab_size
        if self.model is None:
            default_length = REGRESSION_MAX_SEQ_LEN if self.task == TaskKind.REGRESSION else self.codebook.length + 1
            object.__setattr__(self, "model", ModelConfiguration(vocab_size=vocab_size, max_seq_len=default_length))
        if self.model.vocab_size != vocab_size:  # type: ignore
            raise fail(
                ConfigurationError,
                "Invalid attribute [model.vocab_size] in RunConfiguration. Task needs [{}].".format(vocab_size),
            )

    @property
    def vocab_size(self) -> int:
        if self.task == TaskKind.REGRESSION:
            return NumericTokenization().vocab_size
        return self.codebook.m + 1

    @property
    def run_id(self) -> str:
        return "{}-{}-p{}".format(self.task.label, self.loss_variant.label, self.train_problems)

    def to_dict(self) -> Dict[str, Any]:
        """Canonical dictionary form; `build(to_dict())` reproduces the configuration."""
        data: Dict[str, Any] = {
            "task": self.task.label,
            "loss_variant": self.loss_variant.label,
            "alpha": self.alpha,
            "tau": self.tau,
            "model": self.model.to_dict(),  # type: ignore
            "train_problems": self.train_problems,
            "steps": self.steps,
            "seeds": list(self.seeds),
            "kl_restriction": self.kl_restriction.label,
            "reduction": self.reduction.label,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "warmup_fraction": self.warmup_fraction,
            "weight_decay": self.weight_decay,
            "eval_every": self.eval_every,
            "log_every": self.log_every,
            "eval_seed": self.eval_seed,
            "test_problems": self.test_problems,
            "contrastive_radius": self.contrastive_radius,
            "label_smoothing": self.label_smoothing,
            "place_value_mode": self.place_value_mode.label,
            "threads": self.threads,
        }
        if self.task == TaskKind.CODEBOOK:
            data["codebook"] = self.codebook.to_dict()
        return data

    def canonical(self) -> str:
        return canonical_json(self.to_dict())

    def config_hash(self) -> str:
        return content_hash(self.to_dict())

    def eval_key(self) -> Dict[str, Any]:
        """Everything that determines the evaluation set."""
        if self.task == TaskKind.REGRESSION:
            return {"task": self.task.label, "eval_seed": self.eval_seed, "test_problems": self.test_problems}
        return {"task": self.task.label, "eval_seed": self.eval_seed, "codebook": self.codebook.to_dict()}

    @staticmethod
    @trace()
    def build(config: Dict) -> RunConfiguration:
        """Build RunConfiguration from dictionary of configuration data.

        Args:
            config: Dictionary containing configuration data.

        Returns:
            An instance of `distflow.harness.run_configuration.RunConfiguration`.
        """
        if config is None:
            message = "Missing required argument [config: Dict] in [RunConfiguration.build] method call."
            logger.error(message)
            raise ValueError(message)
        if not isinstance(config, Dict):
            message = "Invalid argument type: [config: Dict] must be Dict in [RunConfiguration.build] method call."
            logger.error(message)
            raise TypeError(message)
        unknown = set(config.keys()) - set(RunConfiguration.__dataclass_fields__.keys())
        if unknown:
            raise fail(ConfigurationError, "Unknown attributes {} in RunConfiguration.".format(sorted(unknown)))
        for name in ("task", "loss_variant"):
            if config.get(name, None) is None:
                raise fail(ConfigurationError, "Missing required attribute [{}] in RunConfiguration.".format(name))
        values = dict(config)
        try:
            values["task"] = TaskKind.from_string(str(config["task"]))
            values["loss_variant"] = LossVariant.from_string(str(config["loss_variant"]))
            if "kl_restriction" in config:
                values["kl_restriction"] = KLRestriction.from_string(str(config["kl_restriction"]))
            if "reduction" in config:
                values["reduction"] = Reduction.from_string(str(config["reduction"]))
            if "place_value_mode" in config:
                values["place_value_mode"] = PlaceValueMode.from_string(str(config["place_value_mode"]))
        except ValueError as error:
            raise fail(ConfigurationError, str(error))
        codebook = CodebookSettings.build(config.get("codebook", None) or {})
        values["codebook"] = codebook
        if "seeds" in config:
            values["seeds"] = tuple(config["seeds"])
        model = dict(config.get("model", None) or {})
        if "vocab_size" not in model:
            task = values["task"]
            model["vocab_size"] = NumericTokenization().vocab_size if task == TaskKind.REGRESSION else codebook.m + 1
            if "max_seq_len" not in model:
                model["max_seq_len"] = REGRESSION_MAX_SEQ_LEN if task == TaskKind.REGRESSION else codebook.length + 1
        values["model"] = ModelConfiguration.build(model)
        return RunConfiguration(**values)

    def copy(self, **attributes: Any) -> RunConfiguration:
        """Copy RunConfiguration state while replacing attributes with new values, and return new immutable instance.

        Args:
            **attributes: New configuration attributes.

        Returns:
            An instance of `distflow.harness.run_configuration.RunConfiguration`.
        """
        values = {name: getattr(self, name) for name in RunConfiguration.__dataclass_fields__.keys()}
        values.update(attributes)
        return RunConfiguration(**values)


@trace()
def load_run_configuration(path: Union[str, Path]) -> RunConfiguration:
    """Read a run configuration from a JSON file."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as error:
        raise fail(ConfigurationError, "Cannot read configuration [{}]: {}".format(path, error))
    return RunConfiguration.build(data)


def load_configurations(path: Union[str, Path]) -> List[RunConfiguration]:
    """Read a JSON file holding one configuration or a list of them (`{"runs": [...]}` or `[...]`)."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as error:
        raise fail(ConfigurationError, "Cannot read configuration [{}]: {}".format(path, error))
    if isinstance(data, dict) and "runs" in data:
        data = data["runs"]
    if isinstance(data, dict) and "grid" in data:
        return expand_grid(data)
    if isinstance(data, list):
        return [RunConfiguration.build(entry) for entry in data]
    return [RunConfiguration.build(data)]


def expand_grid(data: Dict[str, Any]) -> List[RunConfiguration]:
    """Expand `{"base": {...}, "grid": {"loss_variant": [...], "train_problems": [...]}}` into configurations.

    Grid keys are expanded in sorted order, values in the order given.
    """
    base = dict(data.get("base", None) or {})
    grid = data.get("grid", None) or {}
    combinations: List[Dict[str, Any]] = [{}]
    for key in sorted(grid.keys()):
        values = grid[key]
        if not isinstance(values, list) or not values:
            raise fail(ConfigurationError, "Grid entry [{}] must be a non-empty list.".format(key))
        combinations = [dict(combination, **{key: value}) for combination in combinations for value in values]
    return [RunConfiguration.build(dict(base, **combination)) for combination in combinations]
