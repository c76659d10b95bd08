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
from typing import Any, Dict, Optional, Union

from loguru import logger
import numpy as np

from distflow.common.decorators import timer, trace
from distflow.common.errors import ConfigurationError, fail
from distflow.metrics.metric_spec import MetricSpec

DEFAULT_ENTROPY_NATS = math.log(10.0)
CALIBRATION_SAMPLE = 256
_TAU_BOUNDS = (1e-8, 1e8)
_BISECTION_STEPS = 200


@dataclass(frozen=True)
class TargetConfiguration:
    """Target configuration class.

    Immutable dataclass pairing a metric with the temperature of its target distribution.

    Attributes:
    tau: Positive temperature; small values sharpen targets towards one-hot.
    metric: Metric over the vocabulary subset.

    """

    tau: float
    metric: MetricSpec

    def __post_init__(self) -> None:
        if self.tau is None:
            raise fail(ConfigurationError, "Missing required attribute [tau: float] in TargetConfiguration.")
        if isinstance(self.tau, bool) or not isinstance(self.tau, (int, float)):
            raise fail(ConfigurationError, "Invalid type for attribute [tau: float] in TargetConfiguration.")
        if not math.isfinite(self.tau) or self.tau <= 0.0:
            raise fail(
                ConfigurationError,
                "Invalid attribute [tau: float] in TargetConfiguration. [tau] must be positive, got {}.".format(
                    self.tau
                ),
            )
        object.__setattr__(self, "tau", float(self.tau))
        if not isinstance(self.metric, MetricSpec):
            raise fail(ConfigurationError, "Invalid type for attribute [metric: MetricSpec] in TargetConfiguration.")

    @staticmethod
    @trace()
    def build(config: Dict) -> TargetConfiguration:
        """Build TargetConfiguration from dictionary of configuration data.

        `tau` is either a number or the string `entropy:<nats>`, which calibrates tau so that
        the mean target entropy equals `<nats>` (see `calibrate_tau`).

        Args:
            config: Dictionary with `tau`, `metric` (MetricSpec) and optional `seed`.

        Returns:
            An instance of `distflow.targets.target_configuration.TargetConfiguration`.
        """
        if not isinstance(config, Dict):
            message = "Invalid argument type: [config: Dict] must be Dict in [TargetConfiguration.build] method call."
            logger.error(message)
            raise TypeError(message)
        metric = config.get("metric", None)
        if not isinstance(metric, MetricSpec):
            raise fail(ConfigurationError, "Missing required attribute [metric: MetricSpec] in TargetConfiguration.")
        tau = resolve_tau(config.get("tau", None), metric, seed=config.get("seed", 0))
        return TargetConfiguration(tau=tau, metric=metric)

    def copy(self, **attributes: Any) -> TargetConfiguration:
        """Copy TargetConfiguration state while replacing attributes with new values, and return new immutable instance.

        Args:
            **attributes: New attributes.

        Returns:
            An instance of `distflow.targets.target_configuration.TargetConfiguration`.
        """
        tau = attributes.get("tau", None) if "tau" in attributes.keys() else self.tau
        metric = attributes.get("metric", None) if "metric" in attributes.keys() else self.metric
        return TargetConfiguration(tau=tau, metric=metric)


def parse_tau_setting(setting: Union[float, int, str, None]) -> Union[float, str]:
    """Validate a tau setting: a positive number or `entropy:<nats>`.

    Returns:
        The float temperature, or the normalised `entropy:<nats>` string.
    """
    if setting is None:
        raise fail(ConfigurationError, "Missing required attribute [tau] in configuration.")
    if isinstance(setting, str):
        text = setting.strip().lower()
        if text.startswith("entropy:"):
            try:
                nats = float(text.split(":", 1)[1])
            except ValueError:
                raise fail(ConfigurationError, "Invalid tau setting [{}].".format(setting))
            if not math.isfinite(nats) or nats <= 0.0:
                raise fail(ConfigurationError, "Entropy target in [{}] must be positive.".format(setting))
            return "entropy:{}".format(repr(nats))
        try:
            setting = float(text)
        except ValueError:
            raise fail(ConfigurationError, "Invalid tau setting [{}].".format(setting))
    if isinstance(setting, bool) or not isinstance(setting, (int, float)):
        raise fail(ConfigurationError, "Invalid type for tau setting [{}].".format(setting))
    if not math.isfinite(setting) or setting <= 0.0:
        raise fail(ConfigurationError, "Invalid tau [{}]. tau must be positive.".format(setting))
    return float(setting)


def resolve_tau(setting: Union[float, int, str, None], metric: MetricSpec, seed: int = 0) -> float:
    """Turn a tau setting into a temperature for a metric.

    Args:
        setting: Positive number, or `entropy:<nats>`.
        metric: Metric the targets are built over.
        seed: Seed for the calibration sample.

    Returns:
        Temperature.
    """
    parsed = parse_tau_setting(setting)
    if isinstance(parsed, float):
        return parsed
    return calibrate_tau(metric, float(parsed.split(":", 1)[1]), seed=seed)


def mean_target_entropy(distances: np.ndarray, tau: float) -> float:
    """Mean entropy (nats) of the targets built from rows of distances at temperature tau."""
    z = distances / tau
    z = z - z.min(axis=1, keepdims=True)
    weights = np.exp(-z)
    probs = weights / weights.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0.0, -probs * np.log(probs), 0.0)
    return float(terms.sum(axis=1).mean())


@trace()
@timer()
def calibrate_tau(
    metric: MetricSpec,
    entropy_nats: float = DEFAULT_ENTROPY_NATS,
    sample_size: int = CALIBRATION_SAMPLE,
    seed: Optional[int] = 0,
) -> float:
    """Find tau such that the mean target entropy over a token sample equals a given value.

    Entropy grows monotonically with tau, so bisection in log-tau converges. The sample is every
    subset token when M <= sample_size, otherwise a seeded draw without replacement.

    Args:
        metric: Metric over the vocabulary subset.
        entropy_nats: Desired mean entropy in nats, 0 < entropy_nats < ln(M).
        sample_size: Number of calibration tokens.
        seed: Seed for the token sample.

    Returns:
        Calibrated temperature.
    """
    upper_entropy = math.log(metric.size)
    if not 0.0 < entropy_nats < upper_entropy:
        raise fail(
            ConfigurationError,
            "Entropy target [{}] must lie in (0, ln M = {:.6f}).".format(entropy_nats, upper_entropy),
        )
    tokens = np.array(metric.subset.token_ids)
    if len(tokens) > sample_size:
        tokens = np.sort(np.random.default_rng(seed).choice(tokens, size=sample_size, replace=False))
    distances = np.stack([metric.distance_row(int(token)) for token in tokens])
    low, high = math.log(_TAU_BOUNDS[0]), math.log(_TAU_BOUNDS[1])
    for _ in range(_BISECTION_STEPS):
        middle = 0.5 * (low + high)
        if mean_target_entropy(distances, math.exp(middle)) < entropy_nats:
            low = middle
        else:
            high = middle
    tau = math.exp(0.5 * (low + high))
    logger.info("Calibrated tau [{:.6g}] for mean target entropy [{:.4f}] nats.", tau, entropy_nats)
    return tau
