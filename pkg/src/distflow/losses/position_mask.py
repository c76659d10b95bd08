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
from typing import List, Sequence, Tuple

import torch

from distflow.common.errors import ContractViolation, ShapeError, fail
from distflow.metrics.vocab_subset import VocabSubset


@dataclass(frozen=True)
class PositionMask:
    """Position mask class.

    Immutable dataclass flagging the metric-bearing positions of a token sequence.

    Attributes:
    flags: One flag per token; true where the ground-truth token belongs to the vocabulary subset.

    """

    flags: Tuple[bool, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "flags", tuple(bool(flag) for flag in self.flags))

    def __len__(self) -> int:
        return len(self.flags)

    @property
    def positions(self) -> List[int]:
        return [i for i, flag in enumerate(self.flags) if flag]

    @property
    def count(self) -> int:
        return sum(self.flags)

    def validate(self, tokens: Sequence[int], subset: VocabSubset) -> None:
        """Check the mask against its sequence.

        Args:
            tokens: Ground-truth token sequence.
            subset: Vocabulary subset the masked tokens must belong to.
        """
        if len(tokens) != len(self.flags):
            raise fail(ShapeError, "Mask length [{}] differs from sequence length [{}].".format(len(self), len(tokens)))
        for position in self.positions:
            if tokens[position] not in subset:
                raise fail(
                    ContractViolation, "Masked position [{}] holds a token outside the subset.".format(position)
                )

    def to_tensor(self) -> torch.Tensor:
        return torch.tensor(self.flags, dtype=torch.bool)

    @staticmethod
    def of(tokens: Sequence[int], subset: VocabSubset) -> PositionMask:
        """Mask every position whose token belongs to the subset."""
        return PositionMask(flags=tuple(token in subset for token in tokens))
