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
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
import math
import re
from typing import Dict, List, Sequence, Tuple

from loguru import logger

from distflow.common.errors import DomainError, RangeError, fail
from distflow.metrics.vocab_subset import VocabSubset

DIGITS = tuple(str(digit) for digit in range(10))
SYMBOLS = DIGITS + (".", "-", "x", "y", "=", " ", ";", "<bos>", "<eos>", "<pad>")
BOS = "<bos>"
EOS = "<eos>"
PAD = "<pad>"


@dataclass(frozen=True)
class NumericTokenization:
    """Numeric tokenization class.

    Immutable dataclass of the character-level vocabulary of the regression prompts and its
    fixed-width rendering of reals: `integer_digits` digits, a decimal point and `decimals`
    digits, without sign. Digit d has token id d.

    Attributes:
    decimals: Number of fractional digits.
    integer_digits: Number of integer digits.

    """

    decimals: int = 3
    integer_digits: int = 1
    _ids: Dict[str, int] = field(init=False, repr=False, compare=False)
    _pattern: "re.Pattern[str]" = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not isinstance(self.decimals, int) or self.decimals < 1:
            message = "Invalid attribute [decimals: int] in NumericTokenization. Must be positive."
            logger.error(message)
            raise ValueError(message)
        if not isinstance(self.integer_digits, int) or self.integer_digits < 1:
            message = "Invalid attribute [integer_digits: int] in NumericTokenization. Must be positive."
            logger.error(message)
            raise ValueError(message)
        object.__setattr__(self, "_ids", {symbol: i for i, symbol in enumerate(SYMBOLS)})
        pattern = re.compile(r"[0-9]{{{}}}\.[0-9]{{{}}}".format(self.integer_digits, self.decimals))
        object.__setattr__(self, "_pattern", pattern)

    @property
    def vocab_size(self) -> int:
        return len(SYMBOLS)

    @property
    def width(self) -> int:
        """Number of tokens of a rendered value."""
        return self.integer_digits + 1 + self.decimals

    @property
    def upper_bound(self) -> int:
        return 10**self.integer_digits

    def token_id(self, symbol: str) -> int:
        token = self._ids.get(symbol, None)
        if token is None:
            raise fail(DomainError, "Unknown symbol [{}].".format(symbol))
        return token

    def symbol(self, token: int) -> str:
        if not 0 <= token < len(SYMBOLS):
            raise fail(DomainError, "Token id [{}] is not in vocabulary of size [{}].".format(token, len(SYMBOLS)))
        return SYMBOLS[token]

    @property
    def bos(self) -> int:
        return self._ids[BOS]

    @property
    def eos(self) -> int:
        return self._ids[EOS]

    def digit_subset(self) -> VocabSubset:
        """Digit tokens 0..9 with their numeric values."""
        return VocabSubset.digits(self.vocab_size)

    def encode(self, text: str) -> List[int]:
        """Token ids of a string; markers such as `<bos>` are single tokens."""
        tokens: List[int] = []
        i = 0
        while i < len(text):
            if text[i] == "<":
                end = text.find(">", i)
                if end < 0:
                    raise fail(DomainError, "Unterminated marker at offset [{}].".format(i))
                tokens.append(self.token_id(text[i : end + 1]))
                i = end + 1
            else:
                tokens.append(self.token_id(text[i]))
                i += 1
        return tokens

    def decode(self, tokens: Sequence[int]) -> str:
        return "".join(self.symbol(int(token)) for token in tokens)

    def quantize(self, value: float) -> Decimal:
        """Value rounded half-up to `decimals` places, as a Decimal."""
        if not math.isfinite(value):
            raise fail(RangeError, "Cannot render non-finite value [{}].".format(value))
        quantum = Decimal(1).scaleb(-self.decimals)
        # Decimal(repr) keeps the shortest round-trip form, so 0.0005 rounds up as written.
        rounded = Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_UP)
        if rounded == 0:
            rounded = abs(rounded)
        if not Decimal(0) <= rounded < self.upper_bound:
            raise fail(RangeError, "Value [{}] is outside [0, {}).".format(value, self.upper_bound))
        return rounded

    def render(self, value: float) -> str:
        """Fixed-width rendering of a real in [0, 10**integer_digits), e.g. 0.5 -> `0.500`."""
        rounded = self.quantize(value)
        return "{:0{width}.{decimals}f}".format(rounded, width=self.width, decimals=self.decimals)

    def parse(self, text: str) -> float:
        """Inverse of `render` on well-formed strings."""
        if not self._pattern.fullmatch(text):
            raise fail(DomainError, "Malformed numeric string [{}].".format(text))
        try:
            return float(Decimal(text))
        except InvalidOperation:
            raise fail(DomainError, "Malformed numeric string [{}].".format(text))

    def digits_of(self, text: str) -> Tuple[int, ...]:
        """Digit token ids of a rendered value, without the decimal point."""
        return tuple(self.token_id(char) for char in text if char != ".")

    def scaled_integer(self, text: str) -> int:
        """A rendered value read as an integer count of its last decimal unit (`1.234` -> 1234)."""
        self.parse(text)
        return int(text.replace(".", ""))
