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
from typing import List, Sequence

import numpy as np

from distflow.common.errors import ContractViolation, NumericError, fail
from distflow.targets.target_configuration import TargetConfiguration

NORMALIZATION_TOLERANCE = 1e-12


def softmin(distances: np.ndarray, tau: float) -> np.ndarray:
    """Normalized exp(-d/tau) over the last axis.

    The row minimum of d/tau is subtracted before exponentiating, which leaves the result
    unchanged and keeps the target entry away from underflow. Infinite distances get mass 0.

    Args:
        distances: Array of distances, last axis indexes outcomes.
        tau: Positive temperature.

    Returns:
        Array of probabilities with the shape of `distances`.
    """
    z = np.asarray(distances, dtype=np.float64) / tau
    if np.any(np.isnan(z)) or np.any(np.isneginf(z)):
        raise fail(NumericError, "Distances must be finite or +inf.")
    finite_min = np.min(np.where(np.isfinite(z), z, np.inf), axis=-1, keepdims=True)
    if not np.all(np.isfinite(finite_min)):
        raise fail(NumericError, "Every distance row needs at least one finite entry.")
    weights = np.exp(-(z - finite_min))
    return weights / weights.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class TargetDistribution:
    """Target distribution class.

    Immutable dataclass holding the soft target over the vocabulary subset at one position.

    Attributes:
    probs: Probabilities aligned with the subset token ids.
    target_token: Ground-truth token id.

    """

    probs: np.ndarray
    target_token: int

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 2:
            raise fail(ContractViolation, "Target distribution must be a vector of at least 2 entries.")
        if np.any(probs < 0.0) or abs(float(probs.sum()) - 1.0) > NORMALIZATION_TOLERANCE:
            raise fail(ContractViolation, "Target distribution must be non-negative and sum to 1.")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "target_token", int(self.target_token))

    @property
    def size(self) -> int:
        return int(self.probs.size)

    def entropy(self) -> float:
        positive = self.probs[self.probs > 0.0]
        return float(-(positive * np.log(positive)).sum())

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, TargetDistribution)
            and self.target_token == other.target_token
            and np.array_equal(self.probs, other.probs)
        )


def build_target(config: TargetConfiguration, target: int) -> TargetDistribution:
    """Build the distance-aware target distribution for one ground-truth token.

    probs[i] = exp(-d(token_i, target) / tau) / sum_j exp(-d(token_j, target) / tau)

    Args:
        config: Target configuration.
        target: Ground-truth token id, a member of the metric's subset.

    Returns:
        An instance of `distflow.targets.target_distribution.TargetDistribution`.
    """
    row = config.metric.distance_row(target)
    return TargetDistribution(probs=softmin(row, config.tau), target_token=target)


def build_target_batch(config: TargetConfiguration, targets: Sequence[int]) -> List[TargetDistribution]:
    """Build targets for a list of ground-truth tokens, identical to calling `build_target` per token."""
    return [build_target(config, int(target)) for target in targets]


def target_table(config: TargetConfiguration) -> np.ndarray:
    """Targets for every subset token, row i for `subset.token_ids[i]`.

    Returns:
        Array of shape (M, M).
    """
    return np.stack([target.probs for target in build_target_batch(config, config.metric.subset.token_ids)])
