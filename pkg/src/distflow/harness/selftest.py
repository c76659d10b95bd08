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

"""Randomized property suites for targets, losses and model gradients.

Each suite draws its instances from a seeded generator and reports the number of failing
instances together with the worst statistic it observed. Instance counts are parameters so that
tests can run the same code at a fraction of the full size.
"""
from __future__ import annotations

from dataclasses import dataclass
import math
import time
from typing import Any, Callable, Dict, List, Optional, Tuple

from loguru import logger
import numpy as np
import torch

from distflow.common.decorators import timer, trace
from distflow.losses.batch import NumericSpan, SequenceExample, TrainingBatch
from distflow.losses.objective import Objective, ObjectiveConfiguration
from distflow.losses.objectives import dist_loss
from distflow.losses.position_mask import PositionMask
from distflow.losses.variants import KLRestriction, LossVariant
from distflow.metrics.embedding_table import EmbeddingTable
from distflow.metrics.metric_spec import MetricKind, MetricSpec
from distflow.metrics.vocab_subset import VocabSubset
from distflow.models.model_configuration import ModelConfiguration
from distflow.models.transformer import backward, forward, log_softmax, Transformer
from distflow.targets.target_configuration import TargetConfiguration
from distflow.targets.target_distribution import build_target, softmin

NORMALIZATION_TOLERANCE = 1e-12
SHIFT_TOLERANCE = 1e-12
ONE_HOT_TAU = 1e-6
ONE_HOT_TOLERANCE = 1e-9
UNIFORM_TAU = 1e9
UNIFORM_DISTANCE_BOUND = 100.0
UNIFORM_TOLERANCE = 1e-6
ORACLE_TOLERANCE = 1e-12
BRIDGE_TOLERANCE = 1e-6
KL_TOLERANCE = 1e-12
GRADIENT_TOLERANCE = 1e-5
FINITE_DIFFERENCE_STEP = 1e-5
TARGET_TAUS = (1e-3, 1.0, 1e3)
EMBEDDING_DIM = 8

TINY_VOCAB = 12
TINY_MARKER = 10
TINY_EOS = 11


@dataclass(frozen=True)
class SuiteResult:
    """Outcome of one property suite.

    Attributes:
    name: Property name.
    instances: Number of instances checked.
    failures: Number of instances violating the property.
    worst: Worst observed statistic (error, deviation or violation margin).
    tolerance: Threshold the statistic is held to.
    elapsed: Wall-clock seconds.

    """

    name: str
    instances: int
    failures: int
    worst: float
    tolerance: float
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "instances": self.instances,
            "failures": self.failures,
            "worst": self.worst,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


class _Tally:
    def __init__(self, name: str, tolerance: float) -> None:
        self.name = name
        self.tolerance = tolerance
        self.instances = 0
        self.failures = 0
        self.worst = 0.0

    def record(self, statistic: float, ok: Optional[bool] = None) -> None:
        self.instances += 1
        self.worst = max(self.worst, statistic)
        if not (statistic <= self.tolerance if ok is None else ok):
            self.failures += 1

    def result(self, elapsed: float) -> SuiteResult:
        return SuiteResult(self.name, self.instances, self.failures, self.worst, self.tolerance, elapsed)


def random_metric(rng: np.random.Generator, kind: MetricKind, size: int) -> MetricSpec:
    if kind.is_scalar:
        # Integer values keep every distance integer, which the one-hot limit relies on.
        values = rng.choice(2 * size + 8, size=size, replace=False)
        subset = VocabSubset(
            token_ids=tuple(range(size)), vocab_size=size, value_map={i: float(v) for i, v in enumerate(values)}
        )
        return MetricSpec(kind=kind, subset=subset)
    subset = VocabSubset(token_ids=tuple(range(size)), vocab_size=size)
    embeddings = EmbeddingTable(rng.normal(size=(size, EMBEDDING_DIM)))
    return MetricSpec(kind=kind, subset=subset, embeddings=embeddings)


def _is_monotone(distances: np.ndarray, probs: np.ndarray, tau: float) -> bool:
    order = np.argsort(distances, kind="stable")
    d, p = distances[order], probs[order]
    drops = np.diff(p)
    if np.any(drops > 0.0):
        return False
    # Strictness is only observable while the gap survives rounding and neither entry underflows.
    strict = (np.diff(d) / tau > 1e-9) & (p[1:] > 0.0)
    return not bool(np.any(strict & (drops >= 0.0)))


@timer(level="DEBUG")
def target_suite(instances: int = 10_000, max_size: int = 4096, seed: int = 0) -> List[SuiteResult]:
    """Normalization, monotonicity, shift invariance and both temperature limits of the targets.

    Every instance draws one of the four metric kinds and a temperature from `TARGET_TAUS`. The
    one-hot limit is checked on the integer-valued scalar metrics only; the uniform limit on the
    distance row scaled down to at most `UNIFORM_DISTANCE_BOUND`.
    """
    rng = np.random.default_rng([seed, 11])
    start = time.perf_counter()
    normalization = _Tally("target.normalization", NORMALIZATION_TOLERANCE)
    monotonicity = _Tally("target.monotonicity", 0.0)
    shift = _Tally("target.shift_invariance", SHIFT_TOLERANCE)
    one_hot = _Tally("target.one_hot_limit", ONE_HOT_TOLERANCE)
    uniform = _Tally("target.uniform_limit", UNIFORM_TOLERANCE)
    kinds = tuple(MetricKind)
    for _ in range(instances):
        size = int(rng.integers(2, max_size + 1))
        metric = random_metric(rng, kinds[int(rng.integers(len(kinds)))], size)
        target = int(rng.integers(size))
        tau = TARGET_TAUS[int(rng.integers(len(TARGET_TAUS)))]
        row = metric.distance_row(target)
        probs = build_target(TargetConfiguration(tau=tau, metric=metric), target).probs
        error = abs(float(probs.sum()) - 1.0)
        normalization.record(error, error <= NORMALIZATION_TOLERANCE and bool(np.all(probs >= 0.0)))
        monotonicity.record(0.0, _is_monotone(row, probs, tau))
        shifted = softmin(row + float(rng.uniform(0.0, 10.0)), tau)
        shift.record(float(np.max(np.abs(shifted - probs))))
        if metric.kind.is_scalar:
            point = np.zeros(size)
            point[target] = 1.0
            one_hot.record(0.5 * float(np.abs(softmin(row, ONE_HOT_TAU) - point).sum()))
        largest = float(row.max())
        bounded = row * (UNIFORM_DISTANCE_BOUND / largest) if largest > UNIFORM_DISTANCE_BOUND else row
        uniform.record(0.5 * float(np.abs(softmin(bounded, UNIFORM_TAU) - 1.0 / size).sum()))
    elapsed = time.perf_counter() - start
    return [tally.result(elapsed) for tally in (normalization, monotonicity, shift, one_hot, uniform)]


def regularized_value(policy: np.ndarray, distances: np.ndarray, tau: float) -> np.ndarray:
    """Expected reward -d plus tau times entropy, for each policy row."""
    entropy = -np.sum(np.where(policy > 0.0, policy * np.log(np.where(policy > 0.0, policy, 1.0)), 0.0), axis=-1)
    return -(policy * distances).sum(axis=-1) + tau * entropy


@timer(level="DEBUG")
def optimality_suite(instances: int = 100, policies: int = 1000, max_size: int = 32, seed: int = 0) -> SuiteResult:
    """The target maximizes expected reward plus tau-scaled entropy against random policies."""
    rng = np.random.default_rng([seed, 12])
    start = time.perf_counter()
    tally = _Tally("target.regularized_optimality", 0.0)
    for _ in range(instances):
        size = int(rng.integers(2, max_size + 1))
        distances = rng.uniform(0.0, 5.0, size)
        distances[int(rng.integers(size))] = 0.0
        tau = float(math.exp(rng.uniform(math.log(0.05), math.log(5.0))))
        best = float(regularized_value(softmin(distances, tau), distances, tau))
        concentration = np.exp(rng.uniform(math.log(0.05), math.log(20.0), size=(policies, 1)))
        candidates = rng.gamma(np.broadcast_to(concentration, (policies, size)))
        candidates = candidates / candidates.sum(axis=1, keepdims=True)
        values = regularized_value(candidates, distances, tau)
        margin = float(np.max(values)) - best
        tally.record(max(margin, 0.0), margin <= 1e-12 * max(1.0, abs(best)))
    return tally.result(time.perf_counter() - start)


def _brute_force_dist(
    logits: List[List[float]], rows: List[List[float]], positions: List[int], subset: List[int], renormalize: bool
) -> float:
    total = []
    for row, position in zip(rows, positions):
        values = logits[position]
        top = max(values)
        log_norm = top + math.log(math.fsum(math.exp(v - top) for v in values))
        model = [values[token] - log_norm for token in subset]
        if renormalize:
            inner = max(model)
            sub_norm = inner + math.log(math.fsum(math.exp(m - inner) for m in model))
            model = [m - sub_norm for m in model]
        total.append(math.fsum(p * (math.log(p) - m) for p, m in zip(row, model) if p > 0.0))
    return math.fsum(total) / len(total)


def _oracle_instance(
    rng: np.random.Generator, max_vocab: int, max_size: int, tau: Optional[float] = None
) -> Tuple[torch.Tensor, np.ndarray, torch.Tensor, List[int], List[int], np.ndarray]:
    vocab = int(rng.integers(2, max_vocab + 1))
    size = int(rng.integers(2, min(max_size, vocab) + 1))
    subset = [int(token) for token in rng.choice(vocab, size=size, replace=False)]
    rows_count = int(rng.integers(1, 7))
    logits = torch.from_numpy(rng.normal(0.0, 2.0, size=(rows_count, vocab)))
    mask = rng.random(rows_count) < 0.6
    mask[int(rng.integers(rows_count))] = True
    positions = [int(p) for p in np.nonzero(mask)[0]]
    truths = [int(rng.integers(size)) for _ in positions]
    distances = np.abs(np.arange(size)[None, :] - np.array(truths)[:, None]).astype(np.float64)
    temperature = tau if tau is not None else float(math.exp(rng.uniform(math.log(0.1), math.log(10.0))))
    rows = softmin(distances, temperature)
    return torch.log_softmax(logits, dim=1), rows, torch.from_numpy(mask), subset, positions, np.array(truths)


@timer(level="DEBUG")
def loss_oracle_suite(
    instances: int = 100, kl_instances: int = 10_000, max_vocab: int = 16, max_size: int = 8, seed: int = 0
) -> List[SuiteResult]:
    """Distance loss against a scalar brute-force evaluation, its near-zero temperature limit and KL >= 0."""
    rng = np.random.default_rng([seed, 13])
    start = time.perf_counter()
    oracle = _Tally("loss.brute_force_oracle", ORACLE_TOLERANCE)
    bridge = _Tally("loss.cross_entropy_bridge", BRIDGE_TOLERANCE)
    nonnegative = _Tally("loss.kl_nonnegative", KL_TOLERANCE)
    for _ in range(instances):
        log_probs, rows, mask, subset, positions, _ = _oracle_instance(rng, max_vocab, max_size)
        for restriction in (KLRestriction.LITERAL, KLRestriction.RENORMALIZED):
            value = float(dist_loss(log_probs, rows, mask, subset, restriction).value)
            expected = _brute_force_dist(
                log_probs.tolist(), rows.tolist(), positions, subset, restriction == KLRestriction.RENORMALIZED
            )
            oracle.record(abs(value - expected))
        log_probs, rows, mask, subset, positions, truths = _oracle_instance(rng, max_vocab, max_size, ONE_HOT_TAU)
        value = float(dist_loss(log_probs, rows, mask, subset).value)
        restricted_ce = -float(np.mean([float(log_probs[p, subset[t]]) for p, t in zip(positions, truths)]))
        bridge.record(abs(value - restricted_ce))
    for _ in range(kl_instances):
        log_probs, rows, mask, subset, _, _ = _oracle_instance(rng, max_vocab, max_size)
        per_position = dist_loss(log_probs, rows, mask, subset).per_position
        nonnegative.record(max(-float(per_position.min()), 0.0))
    elapsed = time.perf_counter() - start
    return [tally.result(elapsed) for tally in (oracle, bridge, nonnegative)]


def tiny_model(seed: int = 0) -> Transformer:
    return Transformer(
        ModelConfiguration(vocab_size=TINY_VOCAB, d_model=8, n_layers=1, n_heads=2, max_seq_len=8, seed=seed)
    )


def tiny_batch(rng: np.random.Generator, size: int = 2) -> TrainingBatch:
    """Sequences `= a = d d d <eos>` whose three-digit answer is supervised and masked."""
    examples = []
    for _ in range(size):
        digits = [int(d) for d in rng.integers(10, size=3)]
        tokens = (TINY_MARKER, int(rng.integers(10)), TINY_MARKER, *digits, TINY_EOS)
        supervise = (False, False, False, True, True, True, True)
        mask = PositionMask(flags=(False, False, False, True, True, True, False))
        span = NumericSpan(positions=(3, 4, 5), value=digits[0] * 100 + digits[1] * 10 + digits[2])
        examples.append(SequenceExample(tokens=tokens, supervise=supervise, mask=mask, spans=(span,)))
    return TrainingBatch.from_examples(examples)


def tiny_objective(variant: LossVariant, alpha: float = 0.5, tau: float = 1.0) -> Objective:
    metric = MetricSpec(kind=MetricKind.SQUARED_EUCLIDEAN_SCALAR, subset=VocabSubset.digits(TINY_VOCAB))
    target = TargetConfiguration(tau=tau, metric=metric)
    return Objective(ObjectiveConfiguration(variant=variant, target=target, alpha=alpha))


def gradient_error(
    model: Transformer, loss_of_logits: Callable[[torch.Tensor], torch.Tensor], inputs: torch.Tensor
) -> float:
    """Max-norm relative error between `backward` gradients and central finite differences.

    Args:
        model: Model whose parameters are perturbed in place and restored.
        loss_of_logits: Scalar loss of the (B, T, V) logits.
        inputs: Input tokens.

    Returns:
        max |analytic - numeric| / max |analytic| over every parameter entry.
    """
    logits = forward(model, inputs)
    upstream = torch.autograd.grad(loss_of_logits(logits), logits)[0]
    analytic = backward(model, inputs, upstream)
    worst_difference = 0.0
    scale = 0.0
    with torch.no_grad():
        for name, parameter in model.named_parameters():
            flat = parameter.view(-1)
            grad = analytic[name].reshape(-1)
            for i in range(flat.numel()):
                original = float(flat[i])
                flat[i] = original + FINITE_DIFFERENCE_STEP
                plus = float(loss_of_logits(forward(model, inputs)))
                flat[i] = original - FINITE_DIFFERENCE_STEP
                minus = float(loss_of_logits(forward(model, inputs)))
                flat[i] = original
                numeric = (plus - minus) / (2.0 * FINITE_DIFFERENCE_STEP)
                worst_difference = max(worst_difference, abs(float(grad[i]) - numeric))
                scale = max(scale, abs(float(grad[i])))
    return worst_difference / max(scale, 1e-300)


@timer(level="DEBUG")
def gradient_suite(seed: int = 0, variants: Tuple[LossVariant, ...] = tuple(LossVariant)) -> SuiteResult:
    """Finite-difference check of the tiny model's gradients under every loss variant."""
    start = time.perf_counter()
    tally = _Tally("model.gradient_fidelity", GRADIENT_TOLERANCE)
    for variant in variants:
        model = tiny_model(seed)
        batch = tiny_batch(np.random.default_rng([seed, 14, variant.value]))
        objective = tiny_objective(variant)

        def loss_of_logits(logits: torch.Tensor) -> torch.Tensor:
            # Same negatives on every evaluation.
            total, _ = objective(log_softmax(logits), batch, rng=np.random.default_rng([seed, 15]))
            return total

        error = gradient_error(model, loss_of_logits, batch.inputs)
        logger.debug("Gradient check [{}]: relative error {:.3g}.", variant.label, error)
        tally.record(error)
    return tally.result(time.perf_counter() - start)


@trace()
@timer(level="INFO")
def selftest(scale: float = 1.0, seed: int = 0) -> List[SuiteResult]:
    """Run every suite; `scale` multiplies the randomized instance counts.

    Returns:
        One result per checked property.
    """

    def count(full: int) -> int:
        return max(1, int(round(full * scale)))

    results: List[SuiteResult] = []
    results.extend(target_suite(instances=count(10_000), seed=seed))
    results.append(optimality_suite(instances=count(100), policies=count(1000), seed=seed))
    results.extend(loss_oracle_suite(instances=count(100), kl_instances=count(10_000), seed=seed))
    results.append(gradient_suite(seed=seed))
    for result in results:
        log = logger.info if result.passed else logger.error
        log(
            "{}: {} instances, {} failures, worst {:.3g} (tolerance {:.3g}).",
            result.name,
            result.instances,
            result.failures,
            result.worst,
            result.tolerance,
        )
    return results
