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
from typing import List, Optional, Tuple

import numpy as np

from distflow.common.errors import ContractViolation, RangeError, SamplingError, fail
from distflow.targets.target_configuration import TargetConfiguration
from distflow.targets.target_distribution import TargetDistribution, softmin

UNUSED_POSITION = math.inf


@dataclass(frozen=True)
class ContrastivePlan:
    """Contrastive plan class.

    Immutable dataclass pairing a multi-digit target with one nearby negative candidate.
    Both sequences are digit token ids of equal length, most significant digit first.

    Attributes:
    target_sequence: Digit tokens of the target value.
    negative_sequence: Digit tokens of the negative value.
    per_position_distance: Distance contribution of the negative token at each position.
    target_value: Integer value of the target.
    negative_value: Integer value of the negative.

    """

    target_sequence: Tuple[int, ...]
    negative_sequence: Tuple[int, ...]
    per_position_distance: Tuple[float, ...]
    target_value: int
    negative_value: int

    def __post_init__(self) -> None:
        length = len(self.target_sequence)
        if length < 1 or len(self.negative_sequence) != length or len(self.per_position_distance) != length:
            raise fail(ContractViolation, "Contrastive plan sequences must share a length of at least 1.")
        if any(not distance >= 0.0 for distance in self.per_position_distance):
            raise fail(ContractViolation, "Contrastive distances must be non-negative.")

    def __len__(self) -> int:
        return len(self.target_sequence)


@dataclass(frozen=True)
class ExtendedTarget:
    """Target over the M subset tokens plus one extra slot for the negative token.

    The matching model likelihood is the softmax over the M subset logits concatenated with the
    model's logit for `negative_token` (see `distflow.losses.objectives.extended_log_likelihood`).

    Attributes:
    probs: M + 1 probabilities, the last one for the negative slot.
    target_token: Ground-truth token id at this position.
    negative_token: Negative token id at this position.
    extra_distance: Distance assigned to the negative slot.

    """

    probs: np.ndarray
    target_token: int
    negative_token: int
    extra_distance: float


def digits_of(value: int, width: int, base: int = 10) -> List[int]:
    """Left zero-padded digits of a non-negative integer, most significant first."""
    digits = []
    for _ in range(width):
        value, digit = divmod(value, base)
        digits.append(digit)
    if value != 0:
        raise fail(RangeError, "Value does not fit in [{}] digits.".format(width))
    return digits[::-1]


def _position_distances(target_digits: List[int], negative_digits: List[int], gap: int, base: int) -> List[float]:
    if gap < base:
        # A neighbour closer than one unit of the next place differs by `gap` units, whatever
        # borrows or carries did to the higher digits: all of it lands on the last position.
        return [0.0] * (len(target_digits) - 1) + [float(gap)]
    return [float(abs(a - b)) for a, b in zip(target_digits, negative_digits)]


def sample_contrastive(
    config: TargetConfiguration,
    target_value: int,
    radius: int,
    rng: np.random.Generator,
    width: Optional[int] = None,
    negative_value: Optional[int] = None,
) -> ContrastivePlan:
    """Sample a nearby multi-digit negative for an integer target.

    The negative is uniform over {target - radius, ..., target + radius} without the target,
    restricted to values representable in `width` digits. Digits are rendered left zero-padded
    to the same width. The metric's subset must be numeric with values 0..base-1.

    Args:
        config: Target configuration; its metric supplies the digit tokens.
        target_value: Non-negative integer target.
        radius: Positive neighbourhood radius.
        rng: Seeded random generator owned by the caller.
        width: Digit width; defaults to the width of the target itself.
        negative_value: Forces the negative instead of drawing it.

    Returns:
        An instance of `distflow.targets.contrastive.ContrastivePlan`.
    """
    base = config.metric.subset.size
    if width is None:
        width = max(1, len(np.base_repr(max(target_value, 0), base)))
    if radius < 1:
        raise fail(RangeError, "Contrastive radius must be positive, got [{}].".format(radius))
    largest = base**width - 1
    if largest + 1 < 2:
        raise fail(SamplingError, "Representable range holds fewer than 2 values.")
    if not 0 <= target_value <= largest:
        raise fail(RangeError, "Target [{}] is not representable in [{}] digits.".format(target_value, width))
    if negative_value is None:
        candidates = [
            value
            for value in range(target_value - radius, target_value + radius + 1)
            if value != target_value and 0 <= value <= largest
        ]
        if not candidates:
            raise fail(SamplingError, "No negative candidate near [{}].".format(target_value))
        negative_value = candidates[int(rng.integers(len(candidates)))]
    elif negative_value == target_value or not 0 <= negative_value <= largest:
        raise fail(RangeError, "Invalid forced negative [{}].".format(negative_value))
    target_digits = digits_of(target_value, width, base)
    negative_digits = digits_of(negative_value, width, base)
    subset = config.metric.subset
    return ContrastivePlan(
        target_sequence=tuple(subset.token_for_value(float(d)) for d in target_digits),
        negative_sequence=tuple(subset.token_for_value(float(d)) for d in negative_digits),
        per_position_distance=tuple(
            _position_distances(target_digits, negative_digits, abs(target_value - negative_value), base)
        ),
        target_value=target_value,
        negative_value=negative_value,
    )


def extend_with_contrastive(
    base: TargetDistribution, plan: ContrastivePlan, position: int, config: TargetConfiguration
) -> ExtendedTarget:
    """Extend a position's target with the plan's negative slot.

    The extended target is exp(-d/tau) renormalized over the M subset distances plus the
    negative's distance at this position. An infinite distance marks an unused position.

    Args:
        base: Target at this position.
        plan: Contrastive plan of the enclosing span.
        position: Index into the plan.
        config: Target configuration the base target was built with.

    Returns:
        An instance of `distflow.targets.contrastive.ExtendedTarget`.
    """
    if not 0 <= position < len(plan):
        raise fail(RangeError, "Position [{}] outside contrastive plan of length [{}].".format(position, len(plan)))
    if base.target_token != plan.target_sequence[position]:
        raise fail(ContractViolation, "Target token does not match the contrastive plan at this position.")
    extra = plan.per_position_distance[position]
    row = np.append(config.metric.distance_row(base.target_token), extra)
    return ExtendedTarget(
        probs=softmin(row, config.tau),
        target_token=base.target_token,
        negative_token=plan.negative_sequence[position],
        extra_distance=extra,
    )


def extend_label_smoothed(smoothed: np.ndarray, extra_distance: float, epsilon: float) -> np.ndarray:
    """Extend a label-smoothed row with a negative slot.

    The slot gets the target's mass 1 - epsilon when its distance is 0 and the off-target
    mass epsilon / (M - 1) otherwise; the row is then renormalized.

    Args:
        smoothed: Label-smoothed row over the M subset tokens.
        extra_distance: Distance of the negative slot.
        epsilon: Smoothing value used for `smoothed`.

    Returns:
        Array of M + 1 probabilities.
    """
    size = smoothed.size
    slot = (1.0 - epsilon) if extra_distance == 0.0 else epsilon / (size - 1)
    row = np.append(smoothed, slot)
    return row / row.sum()
