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

from typing import Iterable, List, Optional, Sequence, Union

import torch

from distflow.common.errors import DomainError, NumericError, RangeError, fail
from distflow.metrics.vocab_subset import VocabSubset
from distflow.models.transformer import Transformer, forward

Allowed = Union[None, VocabSubset, Iterable[int]]


def _allowed_ids(allowed: Allowed, vocab_size: int) -> Optional[torch.Tensor]:
    if allowed is None:
        return None
    ids = allowed.token_ids if isinstance(allowed, VocabSubset) else tuple(int(token) for token in allowed)
    if not ids:
        raise fail(DomainError, "Allowed token set must not be empty.")
    if min(ids) < 0 or max(ids) >= vocab_size:
        raise fail(DomainError, "Allowed token ids must lie in [0, {}).".format(vocab_size))
    return torch.tensor(sorted(set(ids)), dtype=torch.long)


def _per_step(allowed: Union[Allowed, Sequence[Allowed]], max_new: int) -> List[Allowed]:
    if allowed is None or isinstance(allowed, VocabSubset):
        return [allowed] * max_new
    entries = list(allowed)  # type: ignore
    if all(isinstance(entry, int) for entry in entries):
        return [entries] * max_new
    if len(entries) != max_new:
        raise fail(RangeError, "Got [{}] allowed sets for [{}] decoding steps.".format(len(entries), max_new))
    return entries


@torch.no_grad()
def greedy_decode(
    model: Transformer,
    prompt: Sequence[int],
    max_new: int,
    allowed: Union[Allowed, Sequence[Allowed]] = None,
) -> List[int]:
    """Greedy argmax decoding, optionally constrained to an allowed token set per step.

    Ties go to the lowest token id.

    Args:
        model: Transformer.
        prompt: Non-empty prompt token ids.
        max_new: Number of tokens to generate.
        allowed: None (unconstrained), one token set applied at every step, or a list with one
            entry (token set or None) per step.

    Returns:
        Generated token ids, without the prompt.
    """
    if max_new < 1:
        raise fail(RangeError, "max_new must be positive, got [{}].".format(max_new))
    if len(prompt) < 1:
        raise fail(RangeError, "Prompt must not be empty.")
    if len(prompt) + max_new > model.config.max_seq_len:
        raise fail(
            RangeError,
            "Prompt length [{}] plus [{}] new tokens exceeds max_seq_len [{}].".format(
                len(prompt), max_new, model.config.max_seq_len
            ),
        )
    steps = [_allowed_ids(entry, model.config.vocab_size) for entry in _per_step(allowed, max_new)]
    model.eval()
    tokens = [int(token) for token in prompt]
    generated: List[int] = []
    for ids in steps:
        row = forward(model, tokens)[-1]
        if torch.isnan(row).any():
            raise fail(NumericError, "Logits contain NaN at decoding step [{}].".format(len(generated)))
        # torch.argmax returns the first maximal index.
        if ids is None:
            token = int(torch.argmax(row))
        else:
            token = int(ids[int(torch.argmax(row[ids]))])
        tokens.append(token)
        generated.append(token)
    return generated
