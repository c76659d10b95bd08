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
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

from loguru import logger
import numpy as np

from distflow.common.decorators import trace
from distflow.common.errors import DomainError, fail


@dataclass(frozen=True)
class VocabSubset:
    """Vocabulary subset class.

    Immutable dataclass describing the metric-bearing subset of the full vocabulary.

    Attributes:
    token_ids: Ordered token identifiers of the subset (indices into the full vocabulary).
    vocab_size: Size of the full vocabulary.
    value_map: Optional mapping from token identifier to semantic scalar value.

    """

    token_ids: Tuple[int, ...]
    vocab_size: int
    value_map: Optional[Mapping[int, float]] = None
    _index: Dict[int, int] = field(init=False, repr=False, compare=False)
    _values: Optional[np.ndarray] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.token_ids is None:
            message = "Missing required attribute [token_ids: Tuple[int, ...]] in VocabSubset."
            logger.error(message)
            raise ValueError(message)
        if not isinstance(self.token_ids, (tuple, list)) or not all(
            isinstance(token, (int, np.integer)) for token in self.token_ids
        ):
            message = "Invalid type for attribute [token_ids: Tuple[int, ...]] in VocabSubset."
            logger.error(message)
            raise ValueError(message)
        object.__setattr__(self, "token_ids", tuple(int(token) for token in self.token_ids))
        if not isinstance(self.vocab_size, int) or self.vocab_size < 2:
            message = "Invalid attribute [vocab_size: int] in VocabSubset. [vocab_size: int] must be at least 2."
            logger.error(message)
            raise ValueError(message)
        if len(self.token_ids) < 2:
            message = "Invalid attribute [token_ids: Tuple[int, ...]] in VocabSubset. Subset needs at least 2 tokens."
            logger.error(message)
            raise ValueError(message)
        if len(set(self.token_ids)) != len(self.token_ids):
            message = "Invalid attribute [token_ids: Tuple[int, ...]] in VocabSubset. Token ids must be distinct."
            logger.error(message)
            raise ValueError(message)
        for token in self.token_ids:
            if token < 0 or token >= self.vocab_size:
                message = "Token id [{}] is not in vocabulary of size [{}].".format(token, self.vocab_size)
                raise fail(DomainError, message)
        object.__setattr__(self, "_index", {token: i for i, token in enumerate(self.token_ids)})
        object.__setattr__(self, "_values", None)
        if self.value_map is not None:
            missing = [token for token in self.token_ids if token not in self.value_map]
            if missing:
                message = "Invalid attribute [value_map] in VocabSubset. No values for tokens {}.".format(missing)
                logger.error(message)
                raise ValueError(message)
            values = np.array([float(self.value_map[token]) for token in self.token_ids], dtype=np.float64)
            if not np.all(np.isfinite(values)):
                message = "Invalid attribute [value_map] in VocabSubset. Values must be finite."
                logger.error(message)
                raise ValueError(message)
            if len(set(values.tolist())) != len(values):
                message = "Invalid attribute [value_map] in VocabSubset. Values must be injective."
                logger.error(message)
                raise ValueError(message)
            values.setflags(write=False)
            object.__setattr__(self, "_values", values)

    @property
    def size(self) -> int:
        """Subset cardinality M."""
        return len(self.token_ids)

    @property
    def is_numeric(self) -> bool:
        return self._values is not None

    @property
    def values(self) -> np.ndarray:
        """Scalar values aligned with `token_ids`."""
        if self._values is None:
            raise fail(DomainError, "VocabSubset has no value map.")
        return self._values

    def __contains__(self, token: object) -> bool:
        return token in self._index

    def index_of(self, token: int) -> int:
        """Position of token within the subset.

        Args:
            token: Token identifier.

        Returns:
            Index into `token_ids`.
        """
        index = self._index.get(int(token), None)
        if index is None:
            raise fail(DomainError, "Token id [{}] is not in the vocabulary subset.".format(token))
        return index

    def value_of(self, token: int) -> float:
        return float(self.values[self.index_of(token)])

    def token_for_value(self, value: float) -> int:
        """Inverse of the value map.

        Args:
            value: Semantic value.

        Returns:
            Token identifier whose value equals `value`.
        """
        matches = np.nonzero(self.values == value)[0]
        if len(matches) == 0:
            raise fail(DomainError, "No token in the vocabulary subset has value [{}].".format(value))
        return self.token_ids[int(matches[0])]

    @staticmethod
    def digits(vocab_size: int, first_id: int = 0, base: int = 10) -> VocabSubset:
        """Build the numeric subset of digit tokens.

        Args:
            vocab_size: Size of full vocabulary.
            first_id: Token id of digit 0; digits occupy consecutive ids.
            base: Number of digits.

        Returns:
            An instance of `distflow.metrics.vocab_subset.VocabSubset`.
        """
        token_ids = tuple(range(first_id, first_id + base))
        return VocabSubset(
            token_ids=token_ids, vocab_size=vocab_size, value_map={t: float(t - first_id) for t in token_ids}
        )

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"token_ids": list(self.token_ids), "vocab_size": self.vocab_size}
        if self.value_map is not None:
            data["values"] = [float(v) for v in self.values]
        return data

    @staticmethod
    @trace()
    def build(config: Dict) -> VocabSubset:
        """Build VocabSubset from dictionary of configuration data.

        Args:
            config: Dictionary with `token_ids`, `vocab_size` and optional `values` aligned with `token_ids`.

        Returns:
            An instance of `distflow.metrics.vocab_subset.VocabSubset`.
        """
        if config is None:
            message = "Missing required argument [config: Dict] in [VocabSubset.build] method call."
            logger.error(message)
            raise ValueError(message)
        if not isinstance(config, Dict):
            message = "Invalid argument type: [config: Dict] must be Dict in [VocabSubset.build] method call."
            logger.error(message)
            raise TypeError(message)
        token_ids = config.get("token_ids", None)
        values: Optional[Sequence[float]] = config.get("values", None)
        value_map = None
        if values is not None and token_ids is not None:
            if len(values) != len(token_ids):
                message = "Invalid attribute [values] in VocabSubset. Length must match [token_ids]."
                logger.error(message)
                raise ValueError(message)
            value_map = {int(t): float(v) for t, v in zip(token_ids, values)}
        return VocabSubset(
            token_ids=tuple(token_ids) if token_ids is not None else None,  # type: ignore
            vocab_size=config.get("vocab_size", None),  # type: ignore
            value_map=value_map,
        )

    def copy(self, **attributes: Any) -> VocabSubset:
        """Copy VocabSubset state while replacing attributes with new values, and return new immutable instance.

        Args:
            **attributes: New attributes.

        Returns:
            An instance of `distflow.metrics.vocab_subset.VocabSubset`.
        """
        token_ids = attributes.get("token_ids", None) if "token_ids" in attributes.keys() else self.token_ids
        vocab_size = attributes.get("vocab_size", None) if "vocab_size" in attributes.keys() else self.vocab_size
        value_map = attributes.get("value_map", None) if "value_map" in attributes.keys() else self.value_map
        return VocabSubset(token_ids=token_ids, vocab_size=vocab_size, value_map=value_map)
