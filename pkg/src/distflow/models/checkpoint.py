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

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import torch

from distflow.common.decorators import timer, trace
from distflow.common.errors import ConfigurationError, ShapeError, fail
from distflow.common.helpers import canonical_json
from distflow.models.model_configuration import ModelConfiguration
from distflow.models.transformer import Transformer

FORMAT = "distflow-checkpoint/1"


@trace()
@timer()
def save_checkpoint(
    model: Transformer,
    path: Union[str, Path],
    step: int,
    seed: int,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write the model parameters as a JSON manifest plus a flat binary of little-endian float64.

    Arrays follow `named_parameters` order; the manifest records name, shape and offset of each.

    Args:
        model: Transformer to save.
        path: Manifest path; the binary goes next to it with suffix `.bin`.
        step: Number of updates applied.
        seed: Run seed.
        extra: Additional JSON-serializable metadata.

    Returns:
        Path of the manifest.
    """
    manifest_path = Path(path).with_suffix(".json")
    binary_path = manifest_path.with_suffix(".bin")
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    arrays = []
    chunks = []
    offset = 0
    for name, parameter in model.named_parameters():
        values = np.ascontiguousarray(parameter.detach().cpu().numpy(), dtype="<f8")
        arrays.append({"name": name, "shape": list(values.shape), "offset": offset})
        offset += values.size
        chunks.append(values.tobytes())
    payload = b"".join(chunks)
    binary_path.write_bytes(payload)
    manifest = {
        "format": FORMAT,
        "config": model.config.to_dict(),
        "step": step,
        "seed": seed,
        "binary": binary_path.name,
        "sha256": hashlib.sha256(payload).hexdigest(),
        "arrays": arrays,
        "extra": extra or {},
    }
    manifest_path.write_text(canonical_json(manifest), encoding="utf-8")
    return manifest_path


@trace()
@timer()
def load_checkpoint(path: Union[str, Path]) -> Tuple[Transformer, Dict[str, Any]]:
    """Load a checkpoint written by `save_checkpoint`; parameters round-trip bit-exactly.

    Args:
        path: Manifest path.

    Returns:
        The transformer and its manifest.
    """
    manifest_path = Path(path)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format", None) != FORMAT:
        raise fail(ConfigurationError, "Unknown checkpoint format in [{}].".format(manifest_path))
    payload = (manifest_path.parent / manifest["binary"]).read_bytes()
    if hashlib.sha256(payload).hexdigest() != manifest["sha256"]:
        raise fail(ShapeError, "Checkpoint binary does not match its manifest hash.")
    values = np.frombuffer(payload, dtype="<f8")
    model = Transformer(ModelConfiguration.build(manifest["config"]))
    parameters = dict(model.named_parameters())
    if [entry["name"] for entry in manifest["arrays"]] != list(parameters.keys()):
        raise fail(ShapeError, "Checkpoint arrays do not match the model parameters.")
    with torch.no_grad():
        for entry in manifest["arrays"]:
            parameter = parameters[entry["name"]]
            if list(parameter.shape) != entry["shape"]:
                raise fail(ShapeError, "Shape mismatch for parameter [{}].".format(entry["name"]))
            start = entry["offset"]
            chunk = values[start : start + parameter.numel()].reshape(parameter.shape)
            parameter.copy_(torch.from_numpy(chunk.astype(np.float64)))
    return model, manifest
