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

from distflow.common.errors import ConfigurationError, ContractViolation, NumericError, RangeError
from distflow.metrics.metric_spec import MetricKind, MetricSpec
from distflow.metrics.vocab_subset import VocabSubset
from distflow.targets.contrastive import (
    digits_of,
    extend_label_smoothed,
    extend_with_contrastive,
    sample_contrastive,
)
from distflow.targets.place_weights import place_weights_for
from distflow.targets.target_configuration import (
    calibrate_tau,
    mean_target_entropy,
    parse_tau_setting,
    TargetConfiguration,
)
from distflow.targets.target_distribution import build_target, softmin, target_table, TargetDistribution


def digit_config(tau: float = 1.0) -> TargetConfiguration:
    metric = MetricSpec(kind=MetricKind.SQUARED_EUCLIDEAN_SCALAR, subset=VocabSubset.digits(20))
    return TargetConfiguration(tau=tau, metric=metric)


def test_target_is_normalized_and_peaks_at_the_target() -> None:
    target = build_target(digit_config(), 4)
    assert target.size == 10
    assert abs(math.fsum(target.probs) - 1.0) <= 1e-12
    assert int(np.argmax(target.probs)) == 4
    assert target.probs[3] == pytest.approx(target.probs[5], abs=1e-15)


def test_target_decreases_with_distance() -> None:
    probs = build_target(digit_config(2.0), 0).probs
    assert np.all(np.diff(probs) < 0.0)


def test_target_limits() -> None:
    sharp = build_target(digit_config(1e-6), 7).probs
    assert sharp[7] == pytest.approx(1.0, abs=1e-9)
    flat = build_target(digit_config(1e12), 7).probs
    assert np.allclose(flat, 0.1, atol=1e-6)


def test_softmin_shift_invariance_and_infinite_entries() -> None:
    distances = np.array([0.5, 2.0, 3.0])
    assert np.allclose(softmin(distances, 0.7), softmin(distances + 100.0, 0.7), atol=1e-12)
    probs = softmin(np.array([1.0, math.inf, 2.0]), 1.0)
    assert probs[1] == 0.0
    with pytest.raises(NumericError):
        softmin(np.array([math.inf, math.inf]), 1.0)
    with pytest.raises(NumericError):
        softmin(np.array([math.nan, 1.0]), 1.0)


def test_target_distribution_validation() -> None:
    with pytest.raises(ContractViolation):
        TargetDistribution(probs=np.array([0.5, 0.6]), target_token=0)
    with pytest.raises(ContractViolation):
        TargetDistribution(probs=np.array([1.0]), target_token=0)


def test_target_table_rows() -> None:
    config = digit_config()
    table = target_table(config)
    assert table.shape == (10, 10)
    assert np.array_equal(table[3], build_target(config, 3).probs)


def test_configuration_rejects_bad_tau() -> None:
    metric = digit_config().metric
    with pytest.raises(ConfigurationError):
        TargetConfiguration(tau=0.0, metric=metric)
    with pytest.raises(ConfigurationError):
        TargetConfiguration(tau=math.inf, metric=metric)
    with pytest.raises(ConfigurationError):
        TargetConfiguration.build({"metric": metric})
    with pytest.raises(TypeError):
        TargetConfiguration.build([])  # type: ignore


def test_parse_tau_setting() -> None:
    assert parse_tau_setting(2) == 2.0
    assert parse_tau_setting("0.5") == 0.5
    assert parse_tau_setting("Entropy:1.5") == "entropy:1.5"
    for setting in ("entropy:0", "entropy:x", "-1", "hot", True):
        with pytest.raises(ConfigurationError):
            parse_tau_setting(setting)  # type: ignore


def test_calibrated_tau_hits_the_entropy() -> None:
    metric = digit_config().metric
    tau = calibrate_tau(metric, 1.0)
    distances = metric.distance_matrix()
    assert mean_target_entropy(distances, tau) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ConfigurationError):
        calibrate_tau(metric, math.log(10.0))


def test_build_resolves_entropy_setting() -> None:
    config = TargetConfiguration.build({"metric": digit_config().metric, "tau": "entropy:1.0"})
    assert config.tau == pytest.approx(calibrate_tau(config.metric, 1.0))


def test_place_weights() -> None:
    assert place_weights_for(3).weights == (3.0, 2.0, 1.0)
    assert place_weights_for(4, fraction_digits=3).weights == (1.0, 1.0, 1.0, 1.0)
    assert place_weights_for(5, fraction_digits=2).weights == (3.0, 2.0, 1.0, 1.0, 1.0)
    with pytest.raises(RangeError):
        place_weights_for(0)
    with pytest.raises(RangeError):
        place_weights_for(2, fraction_digits=3)


def test_digits_of() -> None:
    assert digits_of(42, 3) == [0, 4, 2]
    with pytest.raises(RangeError):
        digits_of(1000, 3)


def test_contrastive_near_negative_lands_on_last_position() -> None:
    config = digit_config()
    rng = np.random.default_rng(0)
    plan = sample_contrastive(config, 100, radius=2, rng=rng, width=3, negative_value=99)
    assert plan.target_sequence == (1, 0, 0)
    assert plan.negative_sequence == (0, 9, 9)
    assert plan.per_position_distance == (0.0, 0.0, 1.0)


def test_contrastive_far_negative_uses_digit_distances() -> None:
    plan = sample_contrastive(digit_config(), 123, radius=50, rng=np.random.default_rng(0), negative_value=150)
    assert plan.negative_sequence == (1, 5, 0)
    assert plan.per_position_distance == (0.0, 3.0, 3.0)


def test_contrastive_neighbour_below_a_round_number() -> None:
    plan = sample_contrastive(digit_config(), 40, radius=1, rng=np.random.default_rng(0), negative_value=39)
    assert plan.negative_sequence == (3, 9)
    assert plan.per_position_distance == (0.0, 1.0)


def test_contrastive_negatives_are_uniform() -> None:
    config = digit_config()
    rng = np.random.default_rng(7)
    draws = 10_000
    counts = {99: 0, 101: 0}
    for _ in range(draws):
        counts[sample_contrastive(config, 100, radius=1, rng=rng).negative_value] += 1
    expected = draws / 2
    chi_square = sum((count - expected) ** 2 / expected for count in counts.values())
    # Critical value of one degree of freedom at p = 0.01.
    assert chi_square < 6.635


def test_contrastive_sampling_stays_in_range() -> None:
    config = digit_config()
    rng = np.random.default_rng(3)
    for _ in range(50):
        plan = sample_contrastive(config, 0, radius=3, rng=rng, width=2)
        assert 1 <= plan.negative_value <= 3
    with pytest.raises(RangeError):
        sample_contrastive(config, 5, radius=0, rng=rng)
    with pytest.raises(RangeError):
        sample_contrastive(config, 100, radius=1, rng=rng, width=2)
    with pytest.raises(RangeError):
        sample_contrastive(config, 5, radius=1, rng=rng, negative_value=5)


def test_extend_with_contrastive() -> None:
    config = digit_config()
    plan = sample_contrastive(config, 100, radius=2, rng=np.random.default_rng(0), width=3, negative_value=99)
    extended = extend_with_contrastive(build_target(config, 0), plan, 2, config)
    assert extended.probs.size == 11
    assert extended.negative_token == 9
    assert abs(extended.probs.sum() - 1.0) <= 1e-12
    assert extended.probs[10] == pytest.approx(extended.probs[1], abs=1e-15)
    with pytest.raises(ContractViolation):
        extend_with_contrastive(build_target(config, 5), plan, 2, config)
    with pytest.raises(RangeError):
        extend_with_contrastive(build_target(config, 0), plan, 3, config)


def test_extend_label_smoothed() -> None:
    smoothed = np.full(10, 0.01)
    smoothed[4] = 0.91
    row = extend_label_smoothed(smoothed, 0.0, 0.09)
    assert row.size == 11
    assert row[10] == pytest.approx(row[4], abs=1e-15)
    assert abs(row.sum() - 1.0) <= 1e-12
