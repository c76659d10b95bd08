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

from typing import Any, Dict, Optional, Type

from loguru import logger


class DistflowError(ValueError):
    """Base class of all errors raised by distflow."""


class DomainError(DistflowError):
    """Token identifier outside the declared vocabulary or subset."""


class DegenerateEmbeddingError(DistflowError):
    """Embedding row cannot be used by the requested metric (e.g. zero norm under cosine)."""


class RangeError(DistflowError):
    """Argument outside its permitted range."""


class ConfigurationError(DistflowError):
    """Invalid or incomplete configuration."""


class NumericError(DistflowError):
    """Non-finite value encountered.

    Attributes:
        diagnostic: Optional details about the offending values.
    """

    def __init__(self, message: str, diagnostic: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class ShapeError(DistflowError):
    """Mismatched lengths or tensor shapes."""


class ContractViolation(DistflowError):
    """Input violates a documented precondition (e.g. unnormalized distribution)."""


class SamplingError(DistflowError):
    """Random draw cannot be made from the requested support."""


def fail(error_type: Type[DistflowError], message: str, **kwargs: Any) -> DistflowError:
    """Log an error message and build the matching exception.

    Usage is `raise fail(DomainError, "...")` so that the raise stays visible at the call site.

    Args:
        error_type: Exception class to instantiate.
        message: Error message.
        **kwargs: Extra keyword arguments for the exception constructor.

    Returns:
        Exception instance ready to be raised.
    """
    logger.opt(depth=1).error(message)
    return error_type(message, **kwargs)
