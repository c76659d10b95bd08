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

"""Training objectives over per-position log-likelihood rows.

Every function takes `log_probs` of shape (N, V): one log-softmax row over the full vocabulary
per position, in position order. Masks select positions; unselected positions contribute
exactly nothing to values and gradients. Gradients come from autograd.
"""
from __future__ import annotations

from typing import Optional, Sequence, Tuple, Union

from loguru import logger
import numpy as np
import torch

from distflow.common.errors import ConfigurationError, ContractViolation, DomainError, NumericError, ShapeError, fail
from distflow.losses.loss_report import LossTerm
from distflow.losses.position_mask import PositionMask
from distflow.losses.variants import KLRestriction, Reduction
from distflow.metrics.vocab_subset import VocabSubset
from distflow.targets.place_weights import PlaceWeights
from distflow.targets.target_distribution import TargetDistribution

LOG_SOFTMAX_TOLERANCE = 1e-9
TARGET_TOLERANCE = 1e-9

MaskLike = Union[PositionMask, torch.Tensor, Sequence[bool]]


def _mask_tensor(mask: Optional[MaskLike], count: int) -> torch.Tensor:
    if mask is None:
        return torch.ones(count, dtype=torch.bool)
    if isinstance(mask, PositionMask):
        tensor = mask.to_tensor()
    else:
        tensor = torch.as_tensor(mask, dtype=torch.bool)
    tensor = tensor.reshape(-1)
    if tensor.numel() != count:
        raise fail(ShapeError, "Mask of length [{}] does not match [{}] positions.".format(tensor.numel(), count))
    return tensor


def _check_log_probs(log_probs: torch.Tensor) -> None:
    if log_probs.dim() != 2:
        raise fail(ShapeError, "Log-likelihood rows must be 2D (positions, vocabulary).")
    values = log_probs.detach()
    if torch.isnan(values).any() or torch.isposinf(values).any():
        raise fail(NumericError, "Log-likelihood rows contain non-finite values.")
    if values.shape[0] > 0:
        deviation = torch.logsumexp(values, dim=1).abs().max()
        if deviation > LOG_SOFTMAX_TOLERANCE:
            message = "Rows are not log-softmax outputs (logsumexp off by {:.3g}).".format(deviation)
            raise fail(ContractViolation, message)


def _reduce(values: torch.Tensor, reduction: Reduction) -> torch.Tensor:
    return values.sum() if reduction == Reduction.SUM else values.mean()


def _empty_term(log_probs: torch.Tensor, what: str) -> LossTerm:
    logger.warning("No positions selected for [{}]; the term is 0.", what)
    zero = log_probs.new_zeros(())
    return LossTerm(value=zero, per_position=log_probs.new_zeros((0,)), count=0, empty=True)


def _subset_index(subset_ids: torch.Tensor, vocab_size: int) -> torch.Tensor:
    lookup = torch.full((vocab_size,), -1, dtype=torch.long)
    lookup[subset_ids] = torch.arange(subset_ids.numel())
    return lookup


def subset_ids_of(subset: Union[VocabSubset, Sequence[int], torch.Tensor]) -> torch.Tensor:
    if isinstance(subset, VocabSubset):
        return torch.tensor(subset.token_ids, dtype=torch.long)
    return torch.as_tensor(subset, dtype=torch.long).reshape(-1)


def _target_rows(
    targets: Union[torch.Tensor, np.ndarray, Sequence[TargetDistribution]], like: torch.Tensor
) -> torch.Tensor:
    if isinstance(targets, torch.Tensor):
        rows = targets.to(dtype=like.dtype)
    elif isinstance(targets, np.ndarray):
        rows = torch.from_numpy(np.ascontiguousarray(targets, dtype=np.float64)).to(dtype=like.dtype)
    else:
        targets = list(targets)
        if not targets:
            return like.new_zeros((0, 0))
        rows = torch.from_numpy(np.stack([target.probs for target in targets])).to(dtype=like.dtype)
    if rows.dim() != 2:
        raise fail(ShapeError, "Targets must form a 2D array of rows.")
    if rows.shape[0] > 0:
        if (rows < 0).any() or (rows.sum(dim=1) - 1.0).abs().max() > TARGET_TOLERANCE:
            raise fail(ContractViolation, "Target rows must be non-negative and sum to 1.")
    return rows


def _kl_rows(target_rows: torch.Tensor, model_log_rows: torch.Tensor) -> torch.Tensor:
    # sum_v p (log p - log q); entries with p = 0 contribute 0 even where log q = -inf.
    cross = torch.where(target_rows > 0, target_rows * model_log_rows, torch.zeros_like(model_log_rows))
    return (torch.special.xlogy(target_rows, target_rows) - cross).sum(dim=1)


def cross_entropy(
    log_probs: torch.Tensor,
    targets: torch.Tensor,
    supervise: Optional[MaskLike] = None,
    reduction: Reduction = Reduction.MEAN,
) -> LossTerm:
    """Cross-entropy of the ground truth under the full-vocabulary likelihood.

    The gradient with respect to the logits of a supervised position is
    (softmax - one_hot) / count under mean reduction.

    Args:
        log_probs: Log-softmax rows (N, V).
        targets: Ground-truth token ids (N,).
        supervise: Positions to supervise; all when omitted.
        reduction: Mean or sum over supervised positions.

    Returns:
        An instance of `distflow.losses.loss_report.LossTerm`.
    """
    _check_log_probs(log_probs)
    targets = torch.as_tensor(targets, dtype=torch.long).reshape(-1)
    if targets.numel() != log_probs.shape[0]:
        raise fail(ShapeError, "Got [{}] targets for [{}] rows.".format(targets.numel(), log_probs.shape[0]))
    if targets.numel() and ((targets < 0).any() or (targets >= log_probs.shape[1]).any()):
        raise fail(DomainError, "Target token ids outside the vocabulary.")
    selected = _mask_tensor(supervise, log_probs.shape[0])
    if not selected.any():
        return _empty_term(log_probs, "cross_entropy")
    picked = -log_probs[selected].gather(1, targets[selected].unsqueeze(1)).squeeze(1)
    return LossTerm(value=_reduce(picked, reduction), per_position=picked, count=int(selected.sum()))


def dist_loss(
    log_probs: torch.Tensor,
    targets: Union[torch.Tensor, np.ndarray, Sequence[TargetDistribution]],
    mask: MaskLike,
    subset: Union[VocabSubset, Sequence[int], torch.Tensor],
    restriction: KLRestriction = KLRestriction.LITERAL,
    reduction: Reduction = Reduction.MEAN,
) -> LossTerm:
    """KL divergence from the distance-aware targets to the model likelihood on the subset.

    Under `LITERAL` restriction the model probability of a subset token is its full-vocabulary
    softmax probability, not renormalized over the subset, so mass outside the subset is
    penalized too. `RENORMALIZED` renormalizes the likelihood over the subset first.

    Args:
        log_probs: Log-softmax rows (N, V).
        targets: One target row over the subset per masked position, in position order.
        mask: Positions carrying targets.
        subset: Vocabulary subset (or its token ids) the targets are aligned with.
        restriction: Literal or renormalized restriction.
        reduction: Mean or sum over masked positions.

    Returns:
        An instance of `distflow.losses.loss_report.LossTerm`.
    """
    _check_log_probs(log_probs)
    selected = _mask_tensor(mask, log_probs.shape[0])
    rows = _target_rows(targets, log_probs)
    count = int(selected.sum())
    if rows.shape[0] != count:
        raise fail(ShapeError, "Got [{}] target rows for [{}] masked positions.".format(rows.shape[0], count))
    if count == 0:
        return _empty_term(log_probs, "dist_loss")
    subset_ids = subset_ids_of(subset)
    if rows.shape[1] != subset_ids.numel():
        message = "Target rows have [{}] entries for a subset of [{}].".format(rows.shape[1], subset_ids.numel())
        raise fail(ShapeError, message)
    model_rows = log_probs[selected][:, subset_ids]
    if restriction == KLRestriction.RENORMALIZED:
        model_rows = torch.log_softmax(model_rows, dim=1)
    per_position = _kl_rows(rows, model_rows)
    return LossTerm(value=_reduce(per_position, reduction), per_position=per_position, count=count)


def extended_log_likelihood(subset_logits: torch.Tensor, negative_logit: torch.Tensor) -> torch.Tensor:
    """Log of the softmax over the subset logits concatenated with the negative token's logit.

    Args:
        subset_logits: Logits (..., M) of the subset tokens.
        negative_logit: Logit (...) of the negative token at the same position.

    Returns:
        Log-likelihood (..., M + 1).
    """
    return torch.log_softmax(torch.cat([subset_logits, negative_logit.unsqueeze(-1)], dim=-1), dim=-1)


def extended_dist_loss(
    log_probs: torch.Tensor,
    targets: Union[torch.Tensor, np.ndarray],
    negative_tokens: torch.Tensor,
    mask: MaskLike,
    subset: Union[VocabSubset, Sequence[int], torch.Tensor],
    restriction: KLRestriction = KLRestriction.LITERAL,
    reduction: Reduction = Reduction.MEAN,
) -> LossTerm:
    """Distance loss over targets extended with a contrastive negative slot.

    `RENORMALIZED` compares against the softmax over the subset logits concatenated with the
    negative token's logit; log-softmax rows differ from logits by a per-row constant, so they
    stand in for logits there. `LITERAL` scores every slot, the negative one included, with its
    full-vocabulary probability. The negative is itself a subset token, so those slots may hold
    more than unit mass and the literal term is not bounded below by 0.

    Args:
        log_probs: Log-softmax rows (N, V).
        targets: Extended target rows (K, M + 1), one per masked position.
        negative_tokens: Negative token id per masked position (K,).
        mask: Positions carrying targets.
        subset: Vocabulary subset the first M target entries are aligned with.
        restriction: Literal or renormalized extended likelihood.
        reduction: Mean or sum over masked positions.

    Returns:
        An instance of `distflow.losses.loss_report.LossTerm`.
    """
    _check_log_probs(log_probs)
    selected = _mask_tensor(mask, log_probs.shape[0])
    rows = _target_rows(targets, log_probs)
    count = int(selected.sum())
    negative_tokens = torch.as_tensor(negative_tokens, dtype=torch.long).reshape(-1)
    if rows.shape[0] != count or negative_tokens.numel() != count:
        raise fail(ShapeError, "Extended targets and negatives must have one entry per masked position.")
    if count == 0:
        return _empty_term(log_probs, "extended_dist_loss")
    subset_ids = subset_ids_of(subset)
    if rows.shape[1] != subset_ids.numel() + 1:
        raise fail(ShapeError, "Extended target rows need M + 1 entries.")
    masked = log_probs[selected]
    negative_log_probs = masked.gather(1, negative_tokens.unsqueeze(1)).squeeze(1)
    if restriction == KLRestriction.RENORMALIZED:
        model_rows = extended_log_likelihood(masked[:, subset_ids], negative_log_probs)
    else:
        model_rows = torch.cat([masked[:, subset_ids], negative_log_probs.unsqueeze(1)], dim=1)
    per_position = _kl_rows(rows, model_rows)
    return LossTerm(value=_reduce(per_position, reduction), per_position=per_position, count=count)


def combined_loss(
    ce: Union[float, torch.Tensor], dist: Union[float, torch.Tensor], alpha: float
) -> Union[float, torch.Tensor]:
    """ce + alpha * dist.

    Args:
        ce: Cross-entropy term.
        dist: Distance term.
        alpha: Non-negative weight.

    Returns:
        Combined objective.
    """
    if alpha < 0:
        raise fail(ConfigurationError, "alpha must be non-negative, got [{}].".format(alpha))
    return ce + alpha * dist


def vocab_loss(
    log_probs: torch.Tensor,
    targets: torch.Tensor,
    mask: MaskLike,
    subset: Union[VocabSubset, Sequence[int], torch.Tensor],
    alpha: float,
    supervise: Optional[MaskLike] = None,
    reduction: Reduction = Reduction.MEAN,
) -> Tuple[torch.Tensor, LossTerm, LossTerm]:
    """Cross-entropy over the vocabulary plus alpha times cross-entropy renormalized over the subset.

    Args:
        log_probs: Log-softmax rows (N, V).
        targets: Ground-truth token ids (N,).
        mask: Positions whose targets belong to the subset.
        subset: Vocabulary subset.
        alpha: Weight of the restricted term.
        supervise: Positions supervised by the full cross-entropy; all when omitted.
        reduction: Mean or sum.

    Returns:
        Total loss, the full cross-entropy term and the restricted cross-entropy term.
    """
    full = cross_entropy(log_probs, targets, supervise, reduction)
    selected = _mask_tensor(mask, log_probs.shape[0])
    targets = torch.as_tensor(targets, dtype=torch.long).reshape(-1)
    if not selected.any():
        restricted = _empty_term(log_probs, "vocab_loss")
        return full.value, full, restricted
    subset_ids = subset_ids_of(subset)
    indices = _subset_index(subset_ids, log_probs.shape[1])[targets[selected]]
    if (indices < 0).any():
        raise fail(DomainError, "Masked targets must belong to the vocabulary subset.")
    model_rows = torch.log_softmax(log_probs[selected][:, subset_ids], dim=1)
    picked = -model_rows.gather(1, indices.unsqueeze(1)).squeeze(1)
    restricted = LossTerm(value=_reduce(picked, reduction), per_position=picked, count=int(selected.sum()))
    return combined_loss(full.value, restricted.value, alpha), full, restricted  # type: ignore


def place_weighted_dist_loss(
    per_position_dist: Union[torch.Tensor, Sequence[float]],
    weights: Union[PlaceWeights, torch.Tensor, Sequence[float]],
    reduction: Reduction = Reduction.MEAN,
) -> torch.Tensor:
    """Place-weighted distance loss: sum_i w_i * dist_i, divided by sum_i w_i under mean reduction.

    Args:
        per_position_dist: Distance loss per digit position.
        weights: Place weights aligned with the positions.
        reduction: Weighted mean or weighted sum.

    Returns:
        Scalar tensor.
    """
    values = per_position_dist
    if not isinstance(values, torch.Tensor):
        values = torch.as_tensor(values, dtype=torch.float64)
    if isinstance(weights, PlaceWeights):
        weights = weights.weights
    weight_tensor = torch.as_tensor(weights, dtype=values.dtype).reshape(-1)
    if weight_tensor.numel() != values.numel():
        raise fail(ShapeError, "Got [{}] weights for [{}] positions.".format(weight_tensor.numel(), values.numel()))
    if values.numel() == 0:
        return values.new_zeros(())
    total = (weight_tensor * values).sum()
    return total if reduction == Reduction.SUM else total / weight_tensor.sum()


def label_smoothing_target(target: int, subset: VocabSubset, epsilon: float) -> TargetDistribution:
    """Label-smoothed target over the subset: 1 - epsilon on the target, epsilon / (M - 1) elsewhere.

    Args:
        target: Ground-truth token id.
        subset: Vocabulary subset.
        epsilon: Smoothing value in [0, 1).

    Returns:
        An instance of `distflow.targets.target_distribution.TargetDistribution`.
    """
    if not 0.0 <= epsilon < 1.0:
        raise fail(ConfigurationError, "Label smoothing must lie in [0, 1), got [{}].".format(epsilon))
    probs = np.full(subset.size, epsilon / (subset.size - 1), dtype=np.float64)
    probs[subset.index_of(target)] = 1.0 - epsilon
    return TargetDistribution(probs=probs, target_token=target)
