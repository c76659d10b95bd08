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
import math
from typing import Any, Dict, List, Optional, Tuple

from loguru import logger
import numpy as np
import torch

from distflow.common.decorators import trace
from distflow.common.errors import ConfigurationError, ContractViolation, DomainError, NumericError, fail
from distflow.losses.batch import TrainingBatch
from distflow.losses.loss_report import LossReport, LossTerm
from distflow.losses.objectives import (
    combined_loss,
    cross_entropy,
    dist_loss,
    extended_dist_loss,
    label_smoothing_target,
    place_weighted_dist_loss,
    vocab_loss,
)
from distflow.losses.variants import KLRestriction, LossVariant, Reduction
from distflow.targets.contrastive import extend_label_smoothed, extend_with_contrastive, sample_contrastive
from distflow.targets.place_weights import place_weights_for
from distflow.targets.target_configuration import TargetConfiguration
from distflow.targets.target_distribution import TargetDistribution, target_table

DEFAULT_ALPHA = 0.1
DEFAULT_LABEL_SMOOTHING = 0.1
DEFAULT_CONTRASTIVE_RADIUS = 2


@dataclass(frozen=True)
class ObjectiveConfiguration:
    """Objective configuration class.

    Immutable dataclass selecting and parameterizing a training objective.

    Attributes:
    variant: Loss variant.
    target: Target configuration (metric and tau).
    alpha: Weight of the auxiliary term.
    restriction: Likelihood restriction inside the distance loss.
    reduction: Reduction over positions.
    contrastive_radius: Neighbourhood radius for contrastive negatives.
    label_smoothing: Smoothing value of the label-smoothing variant.

    """

    variant: LossVariant
    target: TargetConfiguration
    alpha: float = DEFAULT_ALPHA
    restriction: KLRestriction = KLRestriction.LITERAL
    reduction: Reduction = Reduction.MEAN
    contrastive_radius: int = DEFAULT_CONTRASTIVE_RADIUS
    label_smoothing: float = DEFAULT_LABEL_SMOOTHING

    def __post_init__(self) -> None:
        if not isinstance(self.variant, LossVariant):
            message = "Invalid type for attribute [variant: LossVariant] in ObjectiveConfiguration."
            raise fail(ConfigurationError, message)
        if not isinstance(self.target, TargetConfiguration):
            message = "Invalid type for attribute [target: TargetConfiguration] in ObjectiveConfiguration."
            raise fail(ConfigurationError, message)
        if not isinstance(self.alpha, (int, float)) or not math.isfinite(self.alpha) or self.alpha < 0:
            raise fail(ConfigurationError, "Invalid attribute [alpha: float] in ObjectiveConfiguration. Must be >= 0.")
        if not isinstance(self.contrastive_radius, int) or self.contrastive_radius < 1:
            raise fail(ConfigurationError, "Invalid attribute [contrastive_radius: int] in ObjectiveConfiguration.")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise fail(ConfigurationError, "Invalid attribute [label_smoothing: float] in ObjectiveConfiguration.")

    def copy(self, **attributes: Any) -> ObjectiveConfiguration:
        """Copy ObjectiveConfiguration state while replacing attributes with new values.

        Args:
            **attributes: New attributes.

        Returns:
            An instance of `distflow.losses.objective.ObjectiveConfiguration`.
        """
        values: Dict[str, Any] = {
            "variant": self.variant,
            "target": self.target,
            "alpha": self.alpha,
            "restriction": self.restriction,
            "reduction": self.reduction,
            "contrastive_radius": self.contrastive_radius,
            "label_smoothing": self.label_smoothing,
        }
        values.update(attributes)
        return ObjectiveConfiguration(**values)


class Objective:
    """Objective class.

    Evaluates the selected training objective on a batch of log-likelihood rows.

    Attributes:
        config: Objective configuration.

    """

    @trace()
    def __init__(self, config: ObjectiveConfiguration) -> None:
        logger.info("Constructing [{}] objective...", config.variant.label)
        self.config = config
        subset = config.target.metric.subset
        self.subset = subset
        self.subset_ids = torch.tensor(subset.token_ids, dtype=torch.long)
        self._lookup = torch.full((subset.vocab_size,), -1, dtype=torch.long)
        self._lookup[self.subset_ids] = torch.arange(subset.size)
        self._rows: Optional[np.ndarray] = None
        if config.variant == LossVariant.LABEL_SMOOTH:
            self._rows = np.stack(
                [label_smoothing_target(t, subset, config.label_smoothing).probs for t in subset.token_ids]
            )
        elif config.variant.uses_distance_loss:
            self._rows = target_table(config.target)

    def __call__(
        self,
        log_probs: torch.Tensor,
        batch: TrainingBatch,
        rng: Optional[np.random.Generator] = None,
        detailed: bool = False,
    ) -> Tuple[torch.Tensor, LossReport]:
        """Evaluate the objective.

        Args:
            log_probs: Log-softmax rows (B, T, V) for the batch inputs.
            batch: Teacher-forced batch.
            rng: Generator for contrastive negatives, required by contrastive variants.
            detailed: Include per-position values in the report.

        Returns:
            Scalar loss tensor and its report.
        """
        config = self.config
        rows, length, vocab = log_probs.shape
        flat = log_probs.reshape(rows * length, vocab)
        targets = batch.targets.reshape(-1)
        supervise = batch.supervise.reshape(-1)
        mask = batch.mask.reshape(-1)
        ce = cross_entropy(flat, targets, supervise, config.reduction)
        aux: Optional[LossTerm] = None
        if config.variant == LossVariant.SFT:
            total = ce.value
            aux_value = 0.0
        elif config.variant == LossVariant.VOCAB:
            total, _, aux = vocab_loss(
                flat, targets, mask, self.subset_ids, config.alpha, supervise, config.reduction
            )
            aux_value = aux.item()
        else:
            weighted, aux = self._distance_term(flat, batch, rng)
            total = combined_loss(ce.value, weighted, config.alpha)  # type: ignore
            aux_value = float(weighted.detach())
        if not torch.isfinite(total.detach()):
            diagnostic = self._diagnose(ce, aux, supervise, mask, length)
            raise fail(NumericError, "Non-finite loss: {}".format(diagnostic), diagnostic=diagnostic)
        per_position = self._per_position(ce, aux, supervise, mask) if detailed else None
        report = LossReport(
            ce=ce.item(),
            dist=aux_value,
            combined=float(total.detach()),
            alpha=config.alpha,
            dist_empty=aux is None or aux.empty,
            per_position=per_position,
        )
        return total, report

    def _distance_term(
        self, flat: torch.Tensor, batch: TrainingBatch, rng: Optional[np.random.Generator]
    ) -> Tuple[torch.Tensor, LossTerm]:
        config = self.config
        length = batch.length
        targets = batch.targets.reshape(-1)
        mask = batch.mask.reshape(-1)
        positions = torch.nonzero(mask).reshape(-1)
        indices = self._lookup[targets[positions]]
        if (indices < 0).any():
            raise fail(DomainError, "Masked targets must belong to the vocabulary subset.")
        assert self._rows is not None
        rows = self._rows[indices.numpy()]
        count = int(positions.numel())
        rank = {int(p): k for k, p in enumerate(positions.tolist())}
        weights = np.ones(count, dtype=np.float64)
        if config.variant.uses_place_weights:
            for b, spans in enumerate(batch.spans):
                for span in spans:
                    place = place_weights_for(len(span.positions), span.fraction_digits)
                    for position, weight in zip(span.positions, place.weights):
                        weights[self._rank(rank, b * length + position)] = weight
        if config.variant.uses_contrastive and any(batch.spans):
            if rng is None:
                raise fail(ConfigurationError, "Contrastive variants need a random generator.")
            extended = np.concatenate([rows, np.zeros((count, 1))], axis=1)
            negatives = targets[positions].clone()
            for b, spans in enumerate(batch.spans):
                for span in spans:
                    plan = sample_contrastive(
                        config.target, span.value, config.contrastive_radius, rng, width=len(span.positions)
                    )
                    for i, position in enumerate(span.positions):
                        k = self._rank(rank, b * length + position)
                        negatives[k] = plan.negative_sequence[i]
                        if config.variant == LossVariant.LABEL_SMOOTH:
                            extended[k] = extend_label_smoothed(
                                rows[k], plan.per_position_distance[i], config.label_smoothing
                            )
                        else:
                            base = TargetDistribution(probs=rows[k], target_token=int(targets[b * length + position]))
                            extended[k] = extend_with_contrastive(base, plan, i, config.target).probs
            term = extended_dist_loss(
                flat, extended, negatives, mask, self.subset_ids, config.restriction, Reduction.MEAN
            )
        else:
            term = dist_loss(flat, rows, mask, self.subset_ids, config.restriction, Reduction.MEAN)
        if term.empty:
            return term.value, term
        weighted = place_weighted_dist_loss(term.per_position, torch.from_numpy(weights), config.reduction)
        return weighted, term

    @staticmethod
    def _rank(rank: Dict[int, int], flat_position: int) -> int:
        k = rank.get(flat_position, None)
        if k is None:
            # Spans cover complete numbers only; truncated ones are left unmasked.
            raise fail(ContractViolation, "Numeric span position [{}] is not masked.".format(flat_position))
        return k

    @staticmethod
    def _diagnose(
        ce: LossTerm, aux: Optional[LossTerm], supervise: torch.Tensor, mask: torch.Tensor, length: int
    ) -> Dict[str, Any]:
        for name, term, selected in (("ce", ce, supervise), ("dist", aux, mask)):
            if term is None or term.empty:
                continue
            bad = torch.nonzero(~torch.isfinite(term.per_position.detach())).reshape(-1)
            if bad.numel():
                flat_position = int(torch.nonzero(selected).reshape(-1)[bad[0]])
                return {
                    "term": name,
                    "batch_index": flat_position // length,
                    "position": flat_position % length,
                    "value": repr(float(term.per_position[bad[0]].detach())),
                }
        return {"term": "combined"}

    @staticmethod
    def _per_position(
        ce: LossTerm, aux: Optional[LossTerm], supervise: torch.Tensor, mask: torch.Tensor
    ) -> Tuple[Tuple[int, float, float], ...]:
        dist_by_position: Dict[int, float] = {}
        if aux is not None and not aux.empty:
            for position, value in zip(torch.nonzero(mask).reshape(-1).tolist(), aux.per_position.detach().tolist()):
                dist_by_position[position] = value
        result: List[Tuple[int, float, float]] = []
        if not ce.empty:
            positions = torch.nonzero(supervise).reshape(-1).tolist()
            for position, value in zip(positions, ce.per_position.detach().tolist()):
                result.append((position, value, dist_by_position.get(position, math.nan)))
        return tuple(result)
