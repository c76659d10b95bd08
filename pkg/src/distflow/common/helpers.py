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

from enum import Enum
import hashlib
import json
import math
from typing import Any, Iterable, List, Optional, Tuple

from loguru import logger
import numpy as np


class FromStringEnum(Enum):
    @staticmethod
    def default() -> Optional[FromStringEnum]:
        return None

    @classmethod
    def from_string(cls, name: str) -> FromStringEnum:
        """Map string to enum value.

        Matching is case-insensitive and treats `-` as `_`, so both `dist_no_place` and
        `dist-no-place` select the same member.

        Returns:
            Enum value.
        """
        key_name = name.upper().replace("-", "_")
        for key, value in cls.__members__.items():
            if key == key_name:
                return value
        default = cls.default()
        if default:
            return default
        else:
            error = ValueError("Name {} does not match any valid {} enum value.".format(name, cls.__name__))
            logger.error(repr(error))
            raise error

    @property
    def label(self) -> str:
        return self.name.lower()


def canonical_json(data: Any) -> str:
    """Serialize data to the canonical JSON form used for configs, manifests and hashes.

    Args:
        data: JSON-serializable data.

    Returns:
        JSON text with sorted keys, two-space indent and a trailing newline.
    """
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=True, allow_nan=False) + "\n"


def content_hash(data: Any) -> str:
    """Hash data by its canonical JSON form.

    Args:
        data: JSON-serializable data.

    Returns:
        Hex sha256 digest.
    """
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def file_hash(path: Any) -> str:
    """Hash a file's bytes.

    Args:
        path: Path to file.

    Returns:
        Hex sha256 digest.
    """
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def spawn_generators(seed: int, count: int) -> List[np.random.Generator]:
    """Derive independent numpy generators from one seed.

    Args:
        seed: Root seed.
        count: Number of generators.

    Returns:
        List of generators, stable for a given (seed, count).
    """
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(count)]


def mean_std(values: Iterable[float]) -> Tuple[float, float]:
    """Mean and sample standard deviation (zero for a single value, nan for none)."""
    array = np.asarray(list(values), dtype=np.float64)
    if array.size == 0:
        return math.nan, math.nan
    if array.size == 1:
        return float(array[0]), 0.0
    return float(array.mean()), float(array.std(ddof=1))


def parse_int_list(text: str) -> List[int]:
    """Parse `1,2,3` or an inclusive range `1-5` (non-negative integers) into a list of integers."""
    values: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            start, end = part.split("-", 1)
            values.extend(range(int(start), int(end) + 1))
        else:
            values.append(int(part))
    return values
