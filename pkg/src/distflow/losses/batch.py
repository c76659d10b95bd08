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
from typing import Sequence, Tuple

import torch

from distflow.common.errors import ShapeError, fail
from distflow.losses.position_mask import PositionMask


@dataclass(frozen=True)
class NumericSpan:
    """Digits of one multi-digit number inside a sequence.

    Attributes:
    positions: Token positions of the digits, most significant first.
    value: Integer value of the digits read as one number.
    fraction_digits: How many trailing digits lie right of a decimal point for place weighting.

    """

    positions: Tuple[int, ...]
    value: int
    fraction_digits: int = 0

    def shifted(self, offset: int) -> NumericSpan:
        return NumericSpan(
            positions=tuple(p + offset for p in self.positions), value=self.value, fraction_digits=self.fraction_digits
        )


@dataclass(frozen=True)
class SequenceExample:
    """One training sequence with its supervision.

    Attributes:
    tokens: Full token sequence.
    supervise: Per-token flag; true where the token is a training target.
    mask: Metric-bearing positions.
    spans: Multi-digit numbers among the masked positions.

    """

    tokens: Tuple[int, ...]
    supervise: Tuple[bool, ...]
    mask: PositionMask
    spans: Tuple[NumericSpan, ...] = ()

    def __post_init__(self) -> None:
        if len(self.tokens) < 2 or len(self.supervise) != len(self.tokens) or len(self.mask) != len(self.tokens):
            raise fail(ShapeError, "Example tokens, supervision and mask must share a length of at least 2.")


@dataclass(frozen=True)
class TrainingBatch:
    """Teacher-forced batch: row b predicts `targets[b, t]` from `inputs[b, :t + 1]`.

    Attributes:
    inputs: Input tokens (B, T).
    targets: Next tokens (B, T).
    supervise: Positions contributing cross-entropy (B, T).
    mask: Positions carrying distance targets (B, T).
    spans: Per batch row, the numeric spans in target coordinates.

    """

    inputs: torch.Tensor
    targets: torch.Tensor
    supervise: torch.Tensor
    mask: torch.Tensor
    spans: Tuple[Tuple[NumericSpan, ...], ...]

    @property
    def size(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def length(self) -> int:
        return int(self.inputs.shape[1])

    @staticmethod
    def from_examples(examples: Sequence[SequenceExample]) -> TrainingBatch:
        """Stack equal-length examples into a teacher-forced batch.

        Args:
            examples: Non-empty list of examples of one length.

        Returns:
            An instance of `distflow.losses.batch.TrainingBatch`.
        """
        if not examples:
            raise fail(ShapeError, "A batch needs at least one example.")
        lengths = {len(example.tokens) for example in examples}
        if len(lengths) != 1:
            raise fail(ShapeError, "Batch examples must share one length, got {}.".format(sorted(lengths)))
        tokens = torch.tensor([example.tokens for example in examples], dtype=torch.long)
        supervise = torch.tensor([example.supervise for example in examples], dtype=torch.bool)
        mask = torch.tensor([example.mask.flags for example in examples], dtype=torch.bool)
        return TrainingBatch(
            inputs=tokens[:, :-1],
            targets=tokens[:, 1:],
            supervise=supervise[:, 1:],
            mask=mask[:, 1:] & supervise[:, 1:],
            spans=tuple(tuple(span.shifted(-1) for span in example.spans) for example in examples),
        )
