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

"""Decoder-only transformer over token ids, in double precision.

Token and learned position embeddings feed a stack of pre-norm blocks (causal self-attention
followed by a GELU feed-forward layer) and a final projection onto the vocabulary.
"""
from __future__ import annotations

from collections import OrderedDict
import math
from typing import Dict, Sequence, Union

from loguru import logger
import torch
from torch import nn
from torch.nn import functional

from distflow.common.decorators import trace
from distflow.common.errors import NumericError, ShapeError, fail
from distflow.models.model_configuration import ModelConfiguration

DTYPE = torch.float64
INIT_STD = 0.02

ModelGrads = Dict[str, torch.Tensor]
TokenInput = Union[torch.Tensor, Sequence[int], Sequence[Sequence[int]]]


class CausalSelfAttention(nn.Module):
    def __init__(self, config: ModelConfiguration) -> None:
        super().__init__()
        self.n_heads = config.n_heads
        self.head_dim = config.head_dim
        self.c_attn = nn.Linear(config.d_model, 3 * config.d_model)
        self.c_proj = nn.Linear(config.d_model, config.d_model)
        causal = torch.tril(torch.ones(config.max_seq_len, config.max_seq_len, dtype=torch.bool))
        self.register_buffer("causal", causal, persistent=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, length, width = x.shape
        q, k, v = self.c_attn(x).split(width, dim=2)
        q = q.view(batch, length, self.n_heads, self.head_dim).transpose(1, 2)
        k = k.view(batch, length, self.n_heads, self.head_dim).transpose(1, 2)
        v = v.view(batch, length, self.n_heads, self.head_dim).transpose(1, 2)
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        # Masked scores become exactly zero weights, so later tokens cannot leak into earlier rows.
        scores = scores.masked_fill(~self.causal[:length, :length], float("-inf"))
        y = torch.softmax(scores, dim=-1) @ v
        y = y.transpose(1, 2).contiguous().view(batch, length, width)
        return self.c_proj(y)


class FeedForward(nn.Module):
    def __init__(self, config: ModelConfiguration) -> None:
        super().__init__()
        self.c_fc = nn.Linear(config.d_model, 4 * config.d_model)
        self.c_proj = nn.Linear(4 * config.d_model, config.d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.c_proj(functional.gelu(self.c_fc(x)))


class Block(nn.Module):
    def __init__(self, config: ModelConfiguration) -> None:
        super().__init__()
        self.ln_1 = nn.LayerNorm(config.d_model)
        self.attn = CausalSelfAttention(config)
        self.ln_2 = nn.LayerNorm(config.d_model)
        self.mlp = FeedForward(config)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln_1(x))
        return x + self.mlp(self.ln_2(x))


class Transformer(nn.Module):
    """Transformer class.

    Decoder-only language model producing one logit row over the vocabulary per input position.

    Linear and embedding weights are drawn from N(0, 0.02^2) with the residual output
    projections scaled by 1/sqrt(2 * n_layers); biases start at zero and layer norms at identity.
    Initialization uses a private generator seeded from the configuration, so it never touches
    the global torch random state.

    Attributes:
        config: Model configuration.

    """

    @trace()
    def __init__(self, config: ModelConfiguration) -> None:
        super().__init__()
        logger.info("Constructing transformer [{}]...", config.to_dict())
        self.config = config
        self.wte = nn.Embedding(config.vocab_size, config.d_model)
        self.wpe = nn.Embedding(config.max_seq_len, config.d_model)
        self.blocks = nn.ModuleList([Block(config) for _ in range(config.n_layers)])
        self.ln_f = nn.LayerNorm(config.d_model)
        self.lm_head = nn.Linear(config.d_model, config.vocab_size, bias=False)
        if config.tie_embeddings:
            self.lm_head.weight = self.wte.weight
        self.to(DTYPE)
        self._initialize()

    @torch.no_grad()
    def _initialize(self) -> None:
        generator = torch.Generator().manual_seed(self.config.seed)
        residual_std = INIT_STD / math.sqrt(2 * self.config.n_layers)
        for name, parameter in self.named_parameters():
            if name.endswith("c_proj.weight"):
                nn.init.normal_(parameter, mean=0.0, std=residual_std, generator=generator)
            elif name.endswith("weight") and parameter.dim() >= 2:
                nn.init.normal_(parameter, mean=0.0, std=INIT_STD, generator=generator)
            elif name.endswith("weight"):
                # Layer norm gains.
                nn.init.ones_(parameter)
            else:
                nn.init.zeros_(parameter)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:  # type: ignore
        length = tokens.shape[1]
        positions = torch.arange(length, dtype=torch.long)
        x = self.wte(tokens) + self.wpe(positions)
        for block in self.blocks:
            x = block(x)
        return self.lm_head(self.ln_f(x))

    def parameter_count(self) -> int:
        return sum(parameter.numel() for parameter in self.parameters())


def as_token_tensor(model: Transformer, tokens: TokenInput) -> torch.Tensor:
    """Validate token ids against the model and return them as a (B, T) long tensor."""
    tensor = torch.as_tensor(tokens, dtype=torch.long)
    if tensor.dim() == 1:
        tensor = tensor.unsqueeze(0)
    if tensor.dim() != 2 or tensor.shape[1] < 1:
        raise fail(ShapeError, "Tokens must be a non-empty sequence or a batch of sequences.")
    if tensor.shape[1] > model.config.max_seq_len:
        raise fail(
            ShapeError,
            "Sequence length [{}] exceeds max_seq_len [{}].".format(tensor.shape[1], model.config.max_seq_len),
        )
    if (tensor < 0).any() or (tensor >= model.config.vocab_size).any():
        raise fail(ShapeError, "Token ids must lie in [0, {}).".format(model.config.vocab_size))
    return tensor


def forward(model: Transformer, tokens: TokenInput) -> torch.Tensor:
    """Per-position logit rows over the vocabulary.

    Row t depends only on tokens[0..t].

    Args:
        model: Transformer holding the parameters.
        tokens: One sequence (T,) or a batch (B, T) of token ids.

    Returns:
        Logits (T, V) for a single sequence, (B, T, V) for a batch.
    """
    single = torch.as_tensor(tokens, dtype=torch.long).dim() == 1
    logits = model(as_token_tensor(model, tokens))
    return logits[0] if single else logits


def log_softmax(logits: torch.Tensor) -> torch.Tensor:
    """Log-probabilities over the last axis, computed after subtracting the row maximum.

    Args:
        logits: Finite logits (..., V).

    Returns:
        Log-probabilities of the same shape.
    """
    if not torch.isfinite(logits.detach()).all():
        raise fail(NumericError, "Logits contain non-finite values.")
    shifted = logits - logits.detach().max(dim=-1, keepdim=True).values
    return shifted - torch.log(torch.exp(shifted).sum(dim=-1, keepdim=True))


def backward(model: Transformer, tokens: TokenInput, upstream: torch.Tensor) -> ModelGrads:
    """Reverse-mode gradients of a scalar loss given its gradients with respect to the logits.

    Args:
        model: Transformer holding the parameters.
        tokens: Tokens the logits were computed from.
        upstream: dLoss/dlogits with the shape `forward(model, tokens)` returns.

    Returns:
        Gradients keyed by parameter name, in `named_parameters` order.
    """
    logits = forward(model, tokens)
    upstream = torch.as_tensor(upstream, dtype=DTYPE)
    if upstream.shape != logits.shape:
        message = "Upstream gradient shape {} differs from logits {}.".format(
            tuple(upstream.shape), tuple(logits.shape)
        )
        raise fail(ShapeError, message)
    names, parameters = zip(*model.named_parameters())
    grads = torch.autograd.grad(logits, parameters, grad_outputs=upstream, allow_unused=True)
    return OrderedDict(
        (name, torch.zeros_like(parameter) if grad is None else grad)
        for name, parameter, grad in zip(names, parameters, grads)
    )
