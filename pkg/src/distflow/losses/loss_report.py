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
from typing import Any, Dict, Optional, Tuple

import torch


@dataclass(frozen=True)
class LossTerm:
    """One reduced loss term with its per-position values.

    Attributes:
    value: Reduced loss (scalar tensor, part of the autograd graph).
    per_position: Unreduced values of the contributing positions, in position order.
    count: Number of contributing positions.
    empty: True when no position contributed; `value` is then 0.

    """

    value: torch.Tensor
    per_position: torch.Tensor
    count: int
    empty: bool = False

    def item(self) -> float:
        return float(self.value.detach())


@dataclass(frozen=True)
class LossReport:
    """Loss report class.

    Immutable dataclass summarizing one evaluation of a training objective.

    Attributes:
    ce: Cross-entropy over the full vocabulary.
    dist: Auxiliary term (distance loss, or restricted cross-entropy for the vocab baseline).
    combined: ce + alpha * dist.
    alpha: Weight of the auxiliary term.
    dist_empty: True when no position carried a distance target.
    per_position: Optional (position, ce_t, dist_t) triples; dist_t is nan where no distance target applies.

    """

    ce: float
    dist: float
    combined: float
    alpha: float
    dist_empty: bool = False
    per_position: Optional[Tuple[Tuple[int, float, float], ...]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"ce": self.ce, "dist": self.dist, "combined": self.combined, "alpha": self.alpha}
