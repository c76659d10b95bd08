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
from typing import Any, Dict

from loguru import logger

from distflow.common.decorators import trace
from distflow.common.errors import ConfigurationError, fail

DEFAULT_D_MODEL = 128
DEFAULT_N_LAYERS = 4
DEFAULT_N_HEADS = 4
DEFAULT_MAX_SEQ_LEN = 64


@dataclass(frozen=True)
class ModelConfiguration:
    """Model configuration class.

    Immutable dataclass describing the shape of a decoder-only transformer.

    Attributes:
    vocab_size: Number of token ids.
    d_model: Width of the residual stream.
    n_layers: Number of transformer blocks.
    n_heads: Number of attention heads; must divide d_model.
    max_seq_len: Longest input sequence, at least 2.
    seed: Seed of the parameter initialization.
    tie_embeddings: Share the token embedding with the output projection.

    """

    vocab_size: int
    d_model: int = DEFAULT_D_MODEL
    n_layers: int = DEFAULT_N_LAYERS
    n_heads: int = DEFAULT_N_HEADS
    max_seq_len: int = DEFAULT_MAX_SEQ_LEN
    seed: int = 0
    tie_embeddings: bool = False

    def __post_init__(self) -> None:
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "max_seq_len"):
            value = getattr(self, name)
            if value is None:
                message = "Missing required attribute [{}: int] in ModelConfiguration.".format(name)
                raise fail(ConfigurationError, message)
            if isinstance(value, bool) or not isinstance(value, int):
                raise fail(
                    ConfigurationError, "Invalid type for attribute [{}: int] in ModelConfiguration.".format(name)
                )
            if value < 1:
                message = "Invalid attribute [{}: int] in ModelConfiguration. Must be positive.".format(name)
                raise fail(ConfigurationError, message)
        if self.d_model % self.n_heads != 0:
            raise fail(
                ConfigurationError,
                "Invalid attribute [d_model: int] in ModelConfiguration. [d_model] must be divisible by [n_heads].",
            )
        if self.max_seq_len < 2:
            raise fail(ConfigurationError, "Invalid attribute [max_seq_len: int] in ModelConfiguration. Must be >= 2.")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise fail(ConfigurationError, "Invalid type for attribute [seed: int] in ModelConfiguration.")
        if not isinstance(self.tie_embeddings, bool):
            raise fail(ConfigurationError, "Invalid type for attribute [tie_embeddings: bool] in ModelConfiguration.")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> Dict[str, Any]:
        return {
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "max_seq_len": self.max_seq_len,
            "seed": self.seed,
            "tie_embeddings": self.tie_embeddings,
        }

    @staticmethod
    @trace()
    def build(config: Dict) -> ModelConfiguration:
        """Build ModelConfiguration from dictionary of configuration data.

        Args:
            config: Dictionary of configuration data; `vocab_size` is required.

        Returns:
            An instance of `distflow.models.model_configuration.ModelConfiguration`.
        """
        if not isinstance(config, Dict):
            message = "Invalid argument type: [config: Dict] must be Dict in [ModelConfiguration.build] method call."
            logger.error(message)
            raise TypeError(message)
        unknown = set(config.keys()) - set(ModelConfiguration.__dataclass_fields__.keys())
        if unknown:
            raise fail(ConfigurationError, "Unknown attributes {} in ModelConfiguration.".format(sorted(unknown)))
        return ModelConfiguration(
            vocab_size=config.get("vocab_size", None),
            d_model=config.get("d_model", DEFAULT_D_MODEL),
            n_layers=config.get("n_layers", DEFAULT_N_LAYERS),
            n_heads=config.get("n_heads", DEFAULT_N_HEADS),
            max_seq_len=config.get("max_seq_len", DEFAULT_MAX_SEQ_LEN),
            seed=config.get("seed", 0),
            tie_embeddings=config.get("tie_embeddings", False),
        )

    def copy(self, **attributes: Any) -> ModelConfiguration:
        """Copy ModelConfiguration state while replacing attributes with new values, and return new immutable instance.

        Args:
            **attributes: New attributes.

        Returns:
            An instance of `distflow.models.model_configuration.ModelConfiguration`.
        """
        values = self.to_dict()
        values.update(attributes)
        return ModelConfiguration(**values)
