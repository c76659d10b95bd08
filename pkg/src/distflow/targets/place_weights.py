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
from typing import Tuple

from loguru import logger

from distflow.common.errors import RangeError, fail


@dataclass(frozen=True)
class PlaceWeights:
    """Place weights class.

    Immutable dataclass of per-position loss weights for a multi-digit span, most significant first.

    Attributes:
    weights: Positive weight per digit position.

    """

    weights: Tuple[float, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.weights, (tuple, list)) or len(self.weights) < 1:
            message = "Invalid attribute [weights: Tuple[float, ...]] in PlaceWeights. Needs at least one weight."
            logger.error(message)
            raise ValueError(message)
        object.__setattr__(self, "weights", tuple(float(weight) for weight in self.weights))
        if any(weight <= 0.0 for weight in self.weights):
            message = "Invalid attribute [weights: Tuple[float, ...]] in PlaceWeights. Weights must be positive."
            logger.error(message)
            raise ValueError(message)

    def __len__(self) -> int:
        return len(self.weights)


def place_weights_for(span_len: int, fraction_digits: int = 0) -> PlaceWeights:
    """Place-value weights of a digit span.

    Integer digits get their place value rank counted from the units position (units 1, tens 2,
    hundreds 3, ...). Digits right of the decimal point all get weight 1.

    Args:
        span_len: Number of digit positions.
        fraction_digits: How many of the trailing positions are fractional digits.

    Returns:
        An instance of `distflow.targets.place_weights.PlaceWeights`.
    """
    if span_len < 1 or not 0 <= fraction_digits <= span_len:
        raise fail(RangeError, "Invalid digit span [{}] with [{}] fractional digits.".format(span_len, fraction_digits))
    integer_digits = span_len - fraction_digits
    weights = [float(integer_digits - i) for i in range(integer_digits)] + [1.0] * fraction_digits
    return PlaceWeights(weights=tuple(weights))
