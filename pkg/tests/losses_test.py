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

import math

import numpy as np
import pytest
import torch

from distflow.common.errors import ConfigurationError, ContractViolation, DomainError, NumericError, ShapeError
from distflow.harness.selftest import tiny_batch, tiny_objective
from distflow.losses.batch import NumericSpan, SequenceExample, TrainingBatch
from distflow.losses.objective import Objective, ObjectiveConfiguration
from distflow.losses.objectives import (
    combined_loss,
    cross_entropy,
    dist_loss,
    extended_dist_loss,
    label_smoothing_target,
    place_weighted_dist_loss,
    vocab_loss,
)
from distflow.losses.position_mask import PositionMask
from distflow.losses.variants import KLRestriction, LossVariant, Reduction
from distflow.metrics.metric_spec import MetricKind, MetricSpec
from distflow.metrics.vocab_subset import VocabSubset
from distflow.targets.target_configuration import TargetConfiguration
from distflow.targets.target_distribution import build_target

SUBSET = VocabSubset(token_ids=(1, 2, 4, 5), vocab_size=6, value_map={1: 0.0, 2: 1.0, 4: 2.0, 5: 3.0})
CONFIG = TargetConfiguration(tau=0.8, metric=MetricSpec(kind=MetricKind.SQUARED_EUCLIDEAN_SCALAR, subset=SUBSET))


def random_log_probs(rows: int, vocab: int = 6, seed: int = 0) -> torch.Tensor:
    generator = torch.Generator().manual_seed(seed)
    return torch.log_softmax(torch.randn(rows, vocab, generator=generator, dtype=torch.float64), dim=1)


def brute_force_kl(target: np.ndarray, log_row: torch.Tensor, renormalize: bool) -> float:
    probs = [math.exp(float(log_row[token])) for token in SUBSET.token_ids]
    if renormalize:
        total = math.fsum(probs)
        probs = [p / total for p in probs]
    return math.fsum(p * (math.log(p) - math.log(q)) for p, q in zip(target, probs) if p > 0.0)


def test_dist_loss_matches_brute_force() -> None:
    log_probs = random_log_probs(3)
    mask = PositionMask(flags=(True, False, True))
    targets = [build_target(CONFIG, 2), build_target(CONFIG, 5)]
    for restriction in KLRestriction:
        term = dist_loss(log_probs, targets, mask, SUBSET, restriction, Reduction.SUM)
        renormalize = restriction == KLRestriction.RENORMALIZED
        expected = [brute_force_kl(targets[0].probs, log_probs[0], renormalize)]
        expected.append(brute_force_kl(targets[1].probs, log_probs[2], renormalize))
        assert term.count == 2
        assert term.per_position.tolist() == pytest.approx(expected, abs=1e-12)
        assert term.item() == pytest.approx(math.fsum(expected), abs=1e-12)


def test_renormalized_kl_is_zero_at_the_target() -> None:
    target = build_target(CONFIG, 4)
    logits = torch.zeros(1, 6, dtype=torch.float64)
    logits[0, list(SUBSET.token_ids)] = torch.from_numpy(np.log(target.probs))
    log_probs = torch.log_softmax(logits, dim=1)
    renormalized = dist_loss(log_probs, [target], [True], SUBSET, KLRestriction.RENORMALIZED)
    literal = dist_loss(log_probs, [target], [True], SUBSET, KLRestriction.LITERAL)
    assert renormalized.item() == pytest.approx(0.0, abs=1e-12)
    assert literal.item() > 0.0


def test_dist_loss_is_non_negative() -> None:
    for seed in range(20):
        log_probs = random_log_probs(4, seed=seed)
        targets = [build_target(CONFIG, token) for token in (1, 2, 4, 5)]
        term = dist_loss(log_probs, targets, [True] * 4, SUBSET, KLRestriction.RENORMALIZED)
        assert torch.all(term.per_position >= -1e-12)


def test_dist_loss_gradient() -> None:
    rows = np.stack([build_target(CONFIG, token).probs for token in (2, 5)])

    def loss(logits: torch.Tensor) -> torch.Tensor:
        return dist_loss(torch.log_softmax(logits, dim=1), rows, [True, True], SUBSET).value

    logits = torch.randn(2, 6, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(loss, (logits,))


def test_cross_entropy_gradient_is_softmax_minus_one_hot() -> None:
    logits = torch.randn(3, 6, dtype=torch.float64, requires_grad=True)
    targets = torch.tensor([0, 4, 2])
    term = cross_entropy(torch.log_softmax(logits, dim=1), targets)
    term.value.backward()
    expected = (torch.softmax(logits.detach(), dim=1) - torch.eye(6, dtype=torch.float64)[targets]) / 3
    assert torch.allclose(logits.grad, expected, atol=1e-12)  # type: ignore


def test_cross_entropy_bridge() -> None:
    log_probs = random_log_probs(2)
    targets = torch.tensor([2, 5])
    sharp = TargetConfiguration(tau=1e-6, metric=CONFIG.metric)
    dist = dist_loss(log_probs, [build_target(sharp, 2), build_target(sharp, 5)], [True, True], SUBSET)
    ce = cross_entropy(log_probs, targets)
    assert dist.item() == pytest.approx(ce.item(), abs=1e-6)


def test_empty_mask_gives_a_zero_term() -> None:
    log_probs = random_log_probs(2)
    term = dist_loss(log_probs, [], [False, False], SUBSET)
    assert term.empty
    assert term.item() == 0.0
    assert cross_entropy(log_probs, torch.tensor([0, 1]), [False, False]).empty


def test_loss_input_validation() -> None:
    log_probs = random_log_probs(2)
    target = build_target(CONFIG, 2)
    with pytest.raises(ShapeError):
        dist_loss(log_probs, [target], [True, True], SUBSET)
    with pytest.raises(ShapeError):
        dist_loss(log_probs, [target], [True], SUBSET)
    with pytest.raises(ShapeError):
        dist_loss(log_probs[0], [target], [True], SUBSET)
    with pytest.raises(ContractViolation):
        dist_loss(log_probs + 1.0, [target], [True, False], SUBSET)
    with pytest.raises(ContractViolation):
        dist_loss(log_probs, np.array([[0.5, 0.5, 0.5, 0.5]]), [True, False], SUBSET)
    with pytest.raises(NumericError):
        dist_loss(torch.full((1, 6), math.nan, dtype=torch.float64), [target], [True], SUBSET)
    with pytest.raises(DomainError):
        cross_entropy(log_probs, torch.tensor([0, 6]))


def test_extended_dist_loss() -> None:
    log_probs = random_log_probs(1)
    targets = np.array([[0.1, 0.2, 0.3, 0.1, 0.3]])
    renormalized = extended_dist_loss(
        log_probs, targets, torch.tensor([4]), [True], SUBSET, KLRestriction.RENORMALIZED
    )
    logits = torch.cat([log_probs[0, list(SUBSET.token_ids)], log_probs[0, 4:5]])
    model = torch.log_softmax(logits, dim=0)
    expected = math.fsum(p * (math.log(p) - float(q)) for p, q in zip(targets[0], model))
    assert renormalized.item() == pytest.approx(expected, abs=1e-12)
    literal = extended_dist_loss(log_probs, targets, torch.tensor([4]), [True], SUBSET, KLRestriction.LITERAL)
    expected = math.fsum(p * (math.log(p) - float(q)) for p, q in zip(targets[0], logits))
    assert literal.item() == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ShapeError):
        extended_dist_loss(log_probs, np.full((1, 4), 0.25), torch.tensor([4]), [True], SUBSET)


def test_combined_loss() -> None:
    assert combined_loss(1.0, 2.0, 0.5) == 2.0
    assert combined_loss(1.0, 2.0, 0.0) == 1.0
    with pytest.raises(ConfigurationError):
        combined_loss(1.0, 2.0, -0.1)


def test_vocab_loss() -> None:
    log_probs = random_log_probs(2)
    targets = torch.tensor([0, 4])
    total, full, restricted = vocab_loss(log_probs, targets, [False, True], SUBSET, alpha=0.5)
    subset_rows = torch.log_softmax(log_probs[1, list(SUBSET.token_ids)], dim=0)
    assert restricted.item() == pytest.approx(-float(subset_rows[2]), abs=1e-12)
    assert float(total) == pytest.approx(full.item() + 0.5 * restricted.item(), abs=1e-12)
    with pytest.raises(DomainError):
        vocab_loss(log_probs, targets, [True, True], SUBSET, alpha=0.5)


def test_place_weighted_dist_loss() -> None:
    values = torch.tensor([1.0, 2.0, 4.0], dtype=torch.float64)
    weights = (3.0, 2.0, 1.0)
    assert float(place_weighted_dist_loss(values, weights, Reduction.SUM)) == 11.0
    assert float(place_weighted_dist_loss(values, weights)) == pytest.approx(11.0 / 6.0)
    with pytest.raises(ShapeError):
        place_weighted_dist_loss(values, (1.0, 1.0))


def test_label_smoothing_target() -> None:
    target = label_smoothing_target(4, SUBSET, 0.3)
    assert target.probs.tolist() == pytest.approx([0.1, 0.1, 0.7, 0.1])
    with pytest.raises(ConfigurationError):
        label_smoothing_target(4, SUBSET, 1.0)


def test_position_mask() -> None:
    mask = PositionMask.of([0, 1, 3, 5], SUBSET)
    assert mask.flags == (False, True, False, True)
    assert mask.positions == [1, 3]
    assert mask.count == 2
    mask.validate([0, 1, 3, 5], SUBSET)
    with pytest.raises(ContractViolation):
        PositionMask(flags=(True, False)).validate([0, 1], SUBSET)
    with pytest.raises(ShapeError):
        mask.validate([0, 1], SUBSET)


def test_batch_shifts_examples() -> None:
    example = SequenceExample(
        tokens=(10, 1, 2, 11),
        supervise=(False, True, True, True),
        mask=PositionMask(flags=(False, True, True, False)),
        spans=(NumericSpan(positions=(1, 2), value=12),),
    )
    batch = TrainingBatch.from_examples([example])
    assert batch.inputs.tolist() == [[10, 1, 2]]
    assert batch.targets.tolist() == [[1, 2, 11]]
    assert batch.mask.tolist() == [[True, True, False]]
    assert batch.spans[0][0].positions == (0, 1)
    with pytest.raises(ShapeError):
        TrainingBatch.from_examples([])


def test_variant_components() -> None:
    assert LossVariant.from_string("dist_no_place") == LossVariant.DIST_NO_PLACE
    assert not LossVariant.SFT.uses_distance_loss
    assert not LossVariant.VOCAB.uses_distance_loss
    assert LossVariant.DIST.uses_place_weights and LossVariant.DIST.uses_contrastive
    assert not LossVariant.DIST_NO_PLACE.uses_place_weights
    assert not LossVariant.DIST_NO_CONTRASTIVE.uses_contrastive


def test_objective_without_distance_weight_matches_cross_entropy() -> None:
    batch = tiny_batch(np.random.default_rng(0))
    logits = torch.randn(batch.size, batch.length, 12, dtype=torch.float64)
    gradients = []
    for variant in (LossVariant.SFT, LossVariant.DIST):
        leaf = logits.clone().requires_grad_(True)
        total, _ = tiny_objective(variant, alpha=0.0)(
            torch.log_softmax(leaf, dim=-1), batch, np.random.default_rng(1)
        )
        total.backward()
        gradients.append(leaf.grad)
    assert torch.allclose(gradients[0], gradients[1], atol=1e-15)  # type: ignore


def test_objective_reports_every_variant() -> None:
    batch = tiny_batch(np.random.default_rng(0))
    log_probs = torch.log_softmax(torch.randn(batch.size, batch.length, 12, dtype=torch.float64), dim=-1)
    for variant in LossVariant:
        total, report = tiny_objective(variant)(log_probs, batch, np.random.default_rng(2), detailed=True)
        assert math.isfinite(float(total))
        assert report.combined == pytest.approx(report.ce + report.alpha * report.dist, abs=1e-12)
        assert report.per_position is not None and len(report.per_position) == 8
        assert report.dist_empty == (variant == LossVariant.SFT)


def test_contrastive_objective_needs_a_generator() -> None:
    batch = tiny_batch(np.random.default_rng(0))
    log_probs = torch.log_softmax(torch.zeros(batch.size, batch.length, 12, dtype=torch.float64), dim=-1)
    with pytest.raises(ConfigurationError):
        tiny_objective(LossVariant.DIST)(log_probs, batch)


def test_objective_diagnoses_non_finite_loss() -> None:
    batch = tiny_batch(np.random.default_rng(0))
    log_probs = torch.log_softmax(torch.zeros(batch.size, batch.length, 12, dtype=torch.float64), dim=-1)
    eos = int(batch.targets[0, -1])
    log_probs[0, -1] = -math.inf
    log_probs[0, -1, (eos + 1) % 12] = 0.0
    with pytest.raises(NumericError) as error:
        tiny_objective(LossVariant.SFT)(log_probs, batch)
    assert error.value.diagnostic == {"term": "ce", "batch_index": 0, "position": 5, "value": "inf"}


def test_objective_configuration_validation() -> None:
    with pytest.raises(ConfigurationError):
        ObjectiveConfiguration(variant=LossVariant.DIST, target=CONFIG, alpha=-1.0)
    with pytest.raises(ConfigurationError):
        ObjectiveConfiguration(variant=LossVariant.DIST, target=CONFIG, contrastive_radius=0)
    config = ObjectiveConfiguration(variant=LossVariant.DIST, target=CONFIG)
    assert config.copy(alpha=0.3).alpha == 0.3


def test_contrastive_objective_honours_the_restriction() -> None:
    batch = tiny_batch(np.random.default_rng(0))
    generator = torch.Generator().manual_seed(3)
    log_probs = torch.log_softmax(
        torch.randn(batch.size, batch.length, 12, generator=generator, dtype=torch.float64), dim=-1
    )
    objective = tiny_objective(LossVariant.DIST)
    reports = {}
    for restriction in KLRestriction:
        configured = Objective(objective.config.copy(restriction=restriction))
        _, reports[restriction] = configured(log_probs, batch, np.random.default_rng(2))
    literal = reports[KLRestriction.LITERAL]
    renormalized = reports[KLRestriction.RENORMALIZED]
    assert literal.ce == renormalized.ce
    assert literal.dist != pytest.approx(renormalized.dist, abs=1e-6)
