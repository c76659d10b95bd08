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

"""Synthetic codebook sequences with locality structure in embedding space."""
from __future__ import annotations

from dataclasses import dataclass, field
import hashlib
import math
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple, Union

from loguru import logger
import numpy as np
import torch

from distflow.common.decorators import timer, trace
from distflow.common.errors import RangeError, ShapeError, fail
from distflow.losses.batch import SequenceExample
from distflow.losses.position_mask import PositionMask
from distflow.metrics.codebook import save_codebook
from distflow.metrics.embedding_table import EmbeddingTable
from distflow.metrics.metric_spec import MetricKind, MetricSpec
from distflow.metrics.vocab_subset import VocabSubset
from distflow.models.transformer import Transformer, forward
from distflow.targets.target_distribution import softmin

MAX_CODEBOOK = 4096
MAX_DIM = 64

# Maps a token sequence (T,) to probability rows (T, V) for the next token at every position.
Predictor = Callable[[Sequence[int]], np.ndarray]


@dataclass(frozen=True)
class CodebookTask:
    """Codebook task class.

    Immutable dataclass of a Gaussian codebook and the first-order locality process over it:
    the next token is drawn with probability proportional to exp(-mse(v_prev, v_next) / tau_gen).
    Codebook tokens take ids 0..m-1 and the sequence start marker takes id m.

    Attributes:
    table: Codebook embeddings.
    tau_gen: Generator temperature.
    length: Number of codebook tokens per sequence.

    """

    table: EmbeddingTable
    tau_gen: float
    length: int
    metric: MetricSpec = field(init=False, repr=False, compare=False)
    transitions: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.tau_gen > 0 or not math.isfinite(self.tau_gen):
            raise fail(RangeError, "Generator temperature must be positive, got [{}].".format(self.tau_gen))
        if self.length < 1:
            raise fail(RangeError, "Sequence length must be positive, got [{}].".format(self.length))
        subset = VocabSubset(token_ids=tuple(range(self.table.rows)), vocab_size=self.table.rows + 1)
        metric = MetricSpec(kind=MetricKind.MSE_EMBEDDING, subset=subset, embeddings=self.table)
        object.__setattr__(self, "metric", metric)
        transitions = softmin(metric.distance_matrix(), self.tau_gen)
        transitions.setflags(write=False)
        object.__setattr__(self, "transitions", transitions)

    @property
    def m(self) -> int:
        return self.table.rows

    @property
    def bos(self) -> int:
        return self.table.rows

    @property
    def vocab_size(self) -> int:
        return self.table.rows + 1

    @property
    def sequence_length(self) -> int:
        """Tokens per sequence including the start marker."""
        return self.length + 1

    def codebook_hash(self) -> str:
        """sha256 of the float32 codebook bytes, the form the binary codebook file stores."""
        return hashlib.sha256(np.ascontiguousarray(self.table.vectors, dtype="<f4").tobytes()).hexdigest()

    def sample(self, rng: np.random.Generator, count: int) -> List[Tuple[int, ...]]:
        """Draw sequences: a uniform first token, then `length - 1` transitions."""
        cumulative = np.cumsum(self.transitions, axis=1)
        sequences = []
        for _ in range(count):
            token = int(rng.integers(self.m))
            sequence = [self.bos, token]
            for _ in range(self.length - 1):
                row = cumulative[token]
                token = min(int(np.searchsorted(row, rng.random() * row[-1], side="right")), self.m - 1)
                sequence.append(token)
            sequences.append(tuple(sequence))
        return sequences

    def example(self, sequence: Sequence[int]) -> SequenceExample:
        """Every codebook token after the start marker is supervised and carries a distance target."""
        flags = tuple(i > 0 for i in range(len(sequence)))
        return SequenceExample(tokens=tuple(sequence), supervise=flags, mask=PositionMask(flags))

    def save(self, directory: Union[str, Path], stem: str = "codebook") -> Path:
        return save_codebook(self.table, MetricKind.MSE_EMBEDDING, directory, stem)


@trace()
def gen_codebook_task(
    seed: Union[int, Sequence[int]], m: int, d: int, length: int, tau_gen: float, count: int
) -> Tuple[CodebookTask, List[Tuple[int, ...]]]:
    """Generate a codebook task and training sequences.

    Codebook rows are standard normal draws stored at float32 precision, so the task survives
    the binary codebook file unchanged.

    Args:
        seed: Seed of the codebook and the sequences.
        m: Codebook size, 2..4096.
        d: Embedding dimension, 1..64.
        length: Codebook tokens per sequence.
        tau_gen: Generator temperature.
        count: Number of sequences.

    Returns:
        The task and `count` sequences.
    """
    if not 2 <= m <= MAX_CODEBOOK or not 1 <= d <= MAX_DIM:
        raise fail(RangeError, "Codebook shape {}x{} outside 2..{} x 1..{}.".format(m, d, MAX_CODEBOOK, MAX_DIM))
    codebook_rng, sequence_rng = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)]
    vectors = codebook_rng.standard_normal((m, d)).astype(np.float32).astype(np.float64)
    task = CodebookTask(table=EmbeddingTable(vectors), tau_gen=tau_gen, length=length)
    logger.debug("Generated codebook [{}] of {} rows, dim {}.", task.codebook_hash()[:12], m, d)
    return task, task.sample(sequence_rng, count)


def model_predictor(model: Transformer) -> Predictor:
    """Next-token probability rows of a transformer."""

    @torch.no_grad()
    def predict(sequence: Sequence[int]) -> np.ndarray:
        model.eval()
        return torch.softmax(forward(model, list(sequence)), dim=-1).numpy()

    return predict


@trace()
@timer(level="DEBUG")
def eval_codebook(
    model: Union[Transformer, Predictor], task: CodebookTask, sequences: Sequence[Sequence[int]]
) -> Tuple[float, float]:
    """Top-1 accuracy and expected embedding distance of next-token predictions.

    The expected distance at a position is sum_v q(v) * mse(v, truth), where q is the model's
    distribution renormalized over the codebook tokens.

    Args:
        model: Transformer or a function mapping a sequence to probability rows.
        task: Codebook task.
        sequences: Held-out sequences.

    Returns:
        (top1, expected distance), both averaged over all predicted positions.
    """
    if not sequences:
        raise fail(RangeError, "Cannot evaluate on an empty sequence list.")
    predictor = model_predictor(model) if isinstance(model, Transformer) else model
    distances = task.metric.distance_matrix()
    hits = []
    expected = []
    for sequence in sequences:
        probs = np.asarray(predictor(sequence[:-1]), dtype=np.float64)
        truths = np.asarray(sequence[1:])
        if probs.shape[0] != truths.size:
            raise fail(ShapeError, "Predictor returned {} rows for {} positions.".format(probs.shape[0], truths.size))
        hits.append(np.argmax(probs, axis=1) == truths)
        codebook = probs[:, : task.m]
        codebook = codebook / codebook.sum(axis=1, keepdims=True)
        expected.append(np.einsum("tv,tv->t", codebook, distances[:, truths].T))
    return float(np.concatenate(hits).mean()), float(np.concatenate(expected).mean())


def uniform_expected_distance(task: CodebookTask, sequences: Sequence[Sequence[int]] = ()) -> float:
    """Expected distance of the uniform model: mean distance row value at each truth, or over all pairs."""
    row_means = task.metric.distance_matrix().mean(axis=1)
    if not sequences:
        return float(row_means.mean())
    truths = np.concatenate([np.asarray(sequence[1:]) for sequence in sequences])
    return float(row_means[truths].mean())


@trace()
def replacement_study(task: CodebookTask, k: int, rng: np.random.Generator) -> Dict[str, float]:
    """Mean embedding distance when each codebook token is replaced by its nearest, random or farthest peers.

    Args:
        task: Codebook task.
        k: Number of replacements per token, 1..m-1.
        rng: Generator of the random replacements.

    Returns:
        Mean distance for `nearest`, `random` and `farthest` replacements.
    """
    metric = task.metric
    totals = {"nearest": 0.0, "random": 0.0, "farthest": 0.0}
    for token in range(task.m):
        row = metric.distance_row(token)
        others = np.array([other for other in range(task.m) if other != token])
        totals["nearest"] += float(row[metric.nearest_tokens(token, k)].mean())
        totals["random"] += float(row[rng.choice(others, size=k, replace=False)].mean())
        totals["farthest"] += float(row[metric.farthest_tokens(token, k)].mean())
    return {name: total / task.m for name, total in totals.items()}
