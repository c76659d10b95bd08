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

import numpy as np
import pytest

from distflow.harness.selftest import (
    gradient_suite,
    loss_oracle_suite,
    optimality_suite,
    random_metric,
    regularized_value,
    SuiteResult,
    target_suite,
)
from distflow.losses.variants import LossVariant
from distflow.metrics.metric_spec import MetricKind


def test_target_suite() -> None:
    results = target_suite(instances=20, max_size=64)
    assert [result.name for result in results] == [
        "target.normalization",
        "target.monotonicity",
        "target.shift_invariance",
        "target.one_hot_limit",
        "target.uniform_limit",
    ]
    assert all(result.passed for result in results)
    counts = {result.name: result.instances for result in results}
    assert 0 < counts.pop("target.one_hot_limit") < 20
    assert set(counts.values()) == {20}


def test_random_metric_covers_every_kind() -> None:
    rng = np.random.default_rng(4)
    for kind in MetricKind:
        metric = random_metric(rng, kind, 6)
        assert metric.kind == kind
        assert metric.size == 6
        row = metric.distance_row(2)
        assert row[2] == 0.0
        if kind.is_scalar:
            assert np.array_equal(row, np.round(row))
            assert sorted(row)[1] >= 1.0


def test_optimality_suite() -> None:
    result = optimality_suite(instances=5, policies=50, max_size=16)
    assert result.passed
    assert result.instances == 5


def test_target_maximizes_the_regularized_objective() -> None:
    distances = np.array([0.0, 1.0, 4.0])
    tau = 0.7
    target = np.exp(-distances / tau)
    target /= target.sum()
    policies = np.stack([target, np.array([1.0, 0.0, 0.0]), np.full(3, 1.0 / 3.0)])
    values = regularized_value(policies, distances, tau)
    assert values[0] >= values[1]
    assert values[0] >= values[2]


def test_loss_oracle_suite() -> None:
    results = loss_oracle_suite(instances=10, kl_instances=50)
    assert all(result.passed for result in results)
    assert {result.name for result in results} >= {"loss.cross_entropy_bridge", "loss.kl_nonnegative"}


def test_gradient_suite() -> None:
    result = gradient_suite(variants=(LossVariant.SFT, LossVariant.DIST))
    assert result.passed
    assert result.worst < 1e-5


def test_suite_result() -> None:
    result = SuiteResult(name="x", instances=3, failures=1, worst=0.5, tolerance=0.1)
    assert not result.passed
    assert result.to_dict()["passed"] is False
    assert result.to_dict()["worst"] == pytest.approx(0.5)
