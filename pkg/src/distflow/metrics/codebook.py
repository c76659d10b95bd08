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
import json
from pathlib import Path
from typing import Any, Dict, Union

from loguru import logger

from distflow.common.decorators import trace
from distflow.common.helpers import canonical_json
from distflow.metrics.embedding_table import EmbeddingTable, load_embedding_table, save_embedding_table
from distflow.metrics.metric_spec import MetricKind, MetricSpec
from distflow.metrics.vocab_subset import VocabSubset


@dataclass(frozen=True)
class CodebookManifest:
    """Codebook manifest class.

    Immutable dataclass binding a binary embedding file to a metric. Codebook tokens occupy
    vocabulary ids 0..m-1.

    Attributes:
    path: Path of the binary embedding file, relative to the manifest.
    m: Number of codebook rows.
    d: Embedding dimension.
    metric: Embedding metric kind (`cosine_embedding` or `mse_embedding`).

    """

    path: str
    m: int
    d: int
    metric: str

    def __post_init__(self) -> None:
        if not isinstance(self.path, str) or not self.path:
            message = "Invalid type for attribute [path: str] in CodebookManifest."
            logger.error(message)
            raise ValueError(message)
        for name in ("m", "d"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                message = "Invalid attribute [{}: int] in CodebookManifest. Must be a positive integer.".format(name)
                logger.error(message)
                raise ValueError(message)
        if MetricKind.from_string(self.metric).is_scalar:
            message = "Invalid attribute [metric: str] in CodebookManifest. Must be an embedding metric."
            logger.error(message)
            raise ValueError(message)

    def to_dict(self) -> Dict[str, Any]:
        return {"path": self.path, "m": self.m, "d": self.d, "metric": self.metric}

    @staticmethod
    @trace()
    def build(config: Dict) -> CodebookManifest:
        """Build CodebookManifest from dictionary of configuration data.

        Args:
            config: Dictionary containing manifest data.

        Returns:
            An instance of `distflow.metrics.codebook.CodebookManifest`.
        """
        if not isinstance(config, Dict):
            message = "Invalid argument type: [config: Dict] must be Dict in [CodebookManifest.build] method call."
            logger.error(message)
            raise TypeError(message)
        return CodebookManifest(
            path=config.get("path", None),  # type: ignore
            m=config.get("m", None),  # type: ignore
            d=config.get("d", None),  # type: ignore
            metric=config.get("metric", None),  # type: ignore
        )


@trace()
def load_codebook_metric(manifest_path: Union[str, Path], vocab_size: int) -> MetricSpec:
    """Load a codebook manifest and its embedding file into a metric.

    Args:
        manifest_path: Path of the JSON manifest.
        vocab_size: Size of the full vocabulary the codebook tokens belong to.

    Returns:
        An instance of `distflow.metrics.metric_spec.MetricSpec`.
    """
    manifest_path = Path(manifest_path)
    manifest = CodebookManifest.build(json.loads(manifest_path.read_text(encoding="utf-8")))
    table = load_embedding_table(manifest_path.parent / manifest.path)
    if table.rows != manifest.m or table.dim != manifest.d:
        message = "Codebook [{}] declares {}x{} but file holds {}x{}.".format(
            manifest_path, manifest.m, manifest.d, table.rows, table.dim
        )
        logger.error(message)
        raise ValueError(message)
    subset = VocabSubset(token_ids=tuple(range(manifest.m)), vocab_size=vocab_size)
    return MetricSpec(kind=MetricKind.from_string(manifest.metric), subset=subset, embeddings=table)  # type: ignore


@trace()
def save_codebook(table: EmbeddingTable, metric: MetricKind, directory: Union[str, Path], stem: str) -> Path:
    """Write an embedding table and its manifest.

    Args:
        table: Embedding table.
        metric: Embedding metric kind.
        directory: Destination directory.
        stem: File name stem; writes `<stem>.bin` and `<stem>.json`.

    Returns:
        Path of the manifest.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_embedding_table(table, directory / "{}.bin".format(stem))
    manifest = CodebookManifest(path="{}.bin".format(stem), m=table.rows, d=table.dim, metric=metric.label)
    manifest_path = directory / "{}.json".format(stem)
    manifest_path.write_text(canonical_json(manifest.to_dict()), encoding="utf-8")
    return manifest_path
