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

from distflow.common.errors import DegenerateEmbeddingError, DomainError, RangeError
from distflow.metrics.codebook import load_codebook_metric, save_codebook
from distflow.metrics.embedding_table import EmbeddingTable, load_embedding_table, save_embedding_table
from distflow.metrics.metric_spec import MetricKind, MetricSpec
from distflow.metrics.vocab_subset import VocabSubset


def digit_metric(kind: MetricKind = MetricKind.SQUARED_EUCLIDEAN_SCALAR) -> MetricSpec:
    return MetricSpec(kind=kind, subset=VocabSubset.digits(20))


def test_digit_subset() -> None:
    subset = VocabSubset.digits(20)
    assert subset.size == 10
    assert subset.index_of(7) == 7
    assert subset.token_for_value(3.0) == 3
    assert 12 not in subset
    with pytest.raises(DomainError):
        subset.index_of(12)


def test_subset_rejects_out_of_vocabulary_ids() -> None:
    with pytest.raises(DomainError):
        VocabSubset(token_ids=(0, 5), vocab_size=4)


def test_scalar_distances() -> None:
    squared = digit_metric()
    absolute = digit_metric(MetricKind.ABSOLUTE_SCALAR)
    assert squared.distance(3, 7) == 16.0
    assert absolute.distance(3, 7) == 4.0
    assert squared.distance(7, 3) == squared.distance(3, 7)
    assert squared.distance(5, 5) == 0.0


def test_distance_row_matches_pairwise_distances() -> None:
    metric = digit_metric()
    row = metric.distance_row(4)
    assert row.shape == (10,)
    for token in range(10):
        assert row[token] == metric.distance(token, 4)


def test_distance_matrix_is_symmetric_with_zero_diagonal() -> None:
    matrix = digit_metric().distance_matrix()
    assert np.array_equal(matrix, matrix.T)
    assert np.all(np.diag(matrix) == 0.0)


def test_nearest_and_farthest_tokens() -> None:
    metric = digit_metric()
    assert metric.nearest_tokens(5, 2) == [4, 6]
    assert metric.nearest_tokens(0, 3) == [1, 2, 3]
    assert metric.farthest_tokens(0, 1) == [9]
    assert metric.farthest_tokens(5, 2) == [0, 9]
    with pytest.raises(RangeError):
        metric.nearest_tokens(5, 10)
    with pytest.raises(RangeError):
        metric.farthest_tokens(5, 0)


def test_cosine_distance() -> None:
    table = EmbeddingTable(np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]]))
    metric = MetricSpec(
        kind=MetricKind.COSINE_EMBEDDING, subset=VocabSubset(token_ids=(0, 1, 2), vocab_size=4), embeddings=table
    )
    assert metric.distance(0, 1) == pytest.approx(1.0, abs=1e-15)
    assert metric.distance(0, 2) == pytest.approx(1.0 - 1.0 / math.sqrt(2.0), abs=1e-15)
    assert metric.distance(2, 2) == 0.0


def test_cosine_rejects_zero_norm_rows() -> None:
    table = EmbeddingTable(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(DegenerateEmbeddingError):
        MetricSpec(
            kind=MetricKind.COSINE_EMBEDDING, subset=VocabSubset(token_ids=(0, 1), vocab_size=2), embeddings=table
        )


def test_mse_distance() -> None:
    table = EmbeddingTable(np.array([[0.0, 0.0], [1.0, 3.0]]))
    metric = MetricSpec(
        kind=MetricKind.MSE_EMBEDDING, subset=VocabSubset(token_ids=(0, 1), vocab_size=3), embeddings=table
    )
    assert metric.distance(0, 1) == 5.0


def test_metric_build_from_dictionary() -> None:
    metric = digit_metric()
    rebuilt = MetricSpec.build(metric.to_dict())
    assert rebuilt.kind == MetricKind.SQUARED_EUCLIDEAN_SCALAR
    assert rebuilt.subset.token_ids == metric.subset.token_ids
    assert np.array_equal(rebuilt.distance_matrix(), metric.distance_matrix())


def test_embedding_table_binary_format(tmp_path) -> None:  # type: ignore
    table = EmbeddingTable(np.array([[0.5, -1.25, 2.0], [3.0, 0.0, -0.125]]))
    path = tmp_path / "table.bin"
    save_embedding_table(table, path)
    assert path.stat().st_size == 8 + 6 * 4
    assert load_embedding_table(path) == table


def test_codebook_manifest(tmp_path) -> None:  # type: ignore
    table = EmbeddingTable(np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]))
    manifest = save_codebook(table, MetricKind.MSE_EMBEDDING, tmp_path, "codebook")
    metric = load_codebook_metric(manifest, vocab_size=4)
    assert metric.kind == MetricKind.MSE_EMBEDDING
    assert metric.subset.token_ids == (0, 1, 2)
    assert metric.distance(0, 1) == 1.0
