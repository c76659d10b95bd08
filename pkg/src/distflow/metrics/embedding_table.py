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

from pathlib import Path
from typing import Union

from loguru import logger
import numpy as np

from distflow.common.decorators import timer, trace
from distflow.common.errors import DegenerateEmbeddingError, ShapeError, fail

_HEADER = np.dtype([("m", "<u4"), ("d", "<u4")])


class EmbeddingTable:
    """Embedding table class.

    Fixed vector representation of every token of a vocabulary subset, row i belonging to
    `subset.token_ids[i]`. Rows are held in double precision and never modified.

    Attributes:
        vectors: Array of shape (M, D).

    """

    def __init__(self, vectors: np.ndarray) -> None:
        array = np.array(vectors, dtype=np.float64, copy=True)
        if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] < 1:
            raise fail(ShapeError, "Embedding table must be a non-empty 2D array, got shape {}.".format(array.shape))
        if not np.all(np.isfinite(array)):
            raise fail(DegenerateEmbeddingError, "Embedding table contains non-finite components.")
        array.setflags(write=False)
        self.vectors = array
        self._norms = np.sqrt(np.sum(array * array, axis=1))

    @property
    def rows(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def norms(self) -> np.ndarray:
        return self._norms

    def unit_vectors(self) -> np.ndarray:
        """Rows scaled to unit norm.

        Returns:
            Array of shape (M, D).
        """
        zero = np.nonzero(self._norms == 0.0)[0]
        if len(zero) > 0:
            raise fail(
                DegenerateEmbeddingError, "Embedding rows {} have zero norm.".format([int(i) for i in zero[:10]])
            )
        return self.vectors / self._norms[:, None]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, EmbeddingTable) and np.array_equal(self.vectors, other.vectors)

    def __repr__(self) -> str:
        return "EmbeddingTable(rows={}, dim={})".format(self.rows, self.dim)


@trace()
@timer()
def load_embedding_table(path: Union[str, Path]) -> EmbeddingTable:
    """Load an embedding table from its flat binary file.

    The layout is a little-endian header (u32 M, u32 D) followed by M·D little-endian float32
    values, row-major. Values are promoted to float64.

    Args:
        path: Path to binary file.

    Returns:
        An instance of `distflow.metrics.embedding_table.EmbeddingTable`.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.itemsize:
        raise fail(ShapeError, "Embedding file [{}] is shorter than its header.".format(path))
    header = np.frombuffer(raw[: _HEADER.itemsize], dtype=_HEADER)[0]
    m, d = int(header["m"]), int(header["d"])
    body = np.frombuffer(raw[_HEADER.itemsize :], dtype="<f4")
    if body.size != m * d:
        raise fail(
            ShapeError,
            "Embedding file [{}] declares {}x{} values but holds {}.".format(path, m, d, body.size),
        )
    logger.debug("Loaded embedding table [{}] with {} rows of dim {}.", path, m, d)
    return EmbeddingTable(body.reshape(m, d).astype(np.float64))


@trace()
def save_embedding_table(table: EmbeddingTable, path: Union[str, Path]) -> None:
    """Write an embedding table in the flat binary format read by `load_embedding_table`.

    Values are narrowed to float32.

    Args:
        table: Embedding table.
        path: Destination path.
    """
    header = np.array([(table.rows, table.dim)], dtype=_HEADER)
    body = np.ascontiguousarray(table.vectors, dtype="<f4")
    Path(path).write_bytes(header.tobytes() + body.tobytes())
