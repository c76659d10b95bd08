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
import torch

from distflow.common.errors import ConfigurationError, DomainError, NumericError, RangeError, ShapeError
from distflow.harness.selftest import gradient_error, tiny_batch, tiny_model, tiny_objective
from distflow.losses.variants import LossVariant
from distflow.models.checkpoint import load_checkpoint, save_checkpoint
from distflow.models.decoding import greedy_decode
from distflow.models.model_configuration import ModelConfiguration
from distflow.models.trainer import OptimizerConfiguration, Trainer
from distflow.models.transformer import backward, forward, log_softmax, Transformer


def test_configuration_validation() -> None:
    config = ModelConfiguration(vocab_size=12, d_model=8, n_heads=2, n_layers=1, max_seq_len=8)
    assert config.head_dim == 4
    assert ModelConfiguration.build(config.to_dict()) == config
    assert config.copy(seed=3).seed == 3
    with pytest.raises(ConfigurationError):
        ModelConfiguration(vocab_size=12, d_model=10, n_heads=4)
    with pytest.raises(ConfigurationError):
        ModelConfiguration(vocab_size=0)
    with pytest.raises(ConfigurationError):
        ModelConfiguration(vocab_size=12, max_seq_len=1)


def test_forward_shapes() -> None:
    model = tiny_model()
    assert forward(model, [10, 1, 2]).shape == (3, 12)
    assert forward(model, [[10, 1], [10, 2]]).shape == (2, 2, 12)
    assert forward(model, [10]).dtype == torch.float64
    with pytest.raises(ShapeError):
        forward(model, [])
    with pytest.raises(ShapeError):
        forward(model, [12])
    with pytest.raises(ShapeError):
        forward(model, list(range(9)))


def test_forward_is_causal() -> None:
    model = tiny_model()
    with torch.no_grad():
        first = forward(model, [10, 1, 2, 3, 4])
        second = forward(model, [10, 1, 2, 9, 0])
    assert torch.equal(first[:3], second[:3])
    assert not torch.equal(first[3], second[3])


def test_initialization_depends_only_on_the_seed() -> None:
    first = dict(tiny_model(seed=4).named_parameters())
    second = dict(tiny_model(seed=4).named_parameters())
    other = dict(tiny_model(seed=5).named_parameters())
    assert all(torch.equal(first[name], second[name]) for name in first)
    assert not all(torch.equal(first[name], other[name]) for name in first)
    assert tiny_model().parameter_count() == sum(p.numel() for p in tiny_model().parameters())


def test_log_softmax() -> None:
    rows = log_softmax(torch.tensor([[1000.0, 0.0], [0.0, 0.0]], dtype=torch.float64))
    assert torch.allclose(torch.logsumexp(rows, dim=1), torch.zeros(2, dtype=torch.float64), atol=1e-15)
    assert rows[0, 0] == 0.0
    with pytest.raises(NumericError):
        log_softmax(torch.tensor([[float("nan"), 0.0]]))


def test_backward_matches_finite_differences() -> None:
    model = tiny_model(seed=1)
    batch = tiny_batch(np.random.default_rng(1), size=1)
    objective = tiny_objective(LossVariant.DIST_NO_CONTRASTIVE)

    def loss(logits: torch.Tensor) -> torch.Tensor:
        return objective(log_softmax(logits), batch)[0]

    assert gradient_error(model, loss, batch.inputs) < 1e-5


def test_backward_rejects_mismatched_upstream() -> None:
    model = tiny_model()
    with pytest.raises(ShapeError):
        backward(model, [10, 1], torch.zeros(3, 12, dtype=torch.float64))
    grads = backward(model, [10, 1], torch.ones(2, 12, dtype=torch.float64))
    assert list(grads.keys()) == [name for name, _ in model.named_parameters()]


def test_greedy_decode() -> None:
    model = tiny_model()
    generated = greedy_decode(model, [10, 3, 10], 3)
    assert len(generated) == 3
    assert greedy_decode(model, [10, 3, 10], 3) == generated
    constrained = greedy_decode(model, [10, 3, 10], 2, allowed=[4, 7])
    assert set(constrained) <= {4, 7}
    per_step = greedy_decode(model, [10, 3, 10], 2, allowed=[[5], None])
    assert per_step[0] == 5
    with pytest.raises(RangeError):
        greedy_decode(model, [10, 3, 10], 6)
    with pytest.raises(RangeError):
        greedy_decode(model, [], 1)
    with pytest.raises(RangeError):
        greedy_decode(model, [10], 2, allowed=[[5], None, None])
    with pytest.raises(DomainError):
        greedy_decode(model, [10], 1, allowed=[12])


def test_decode_forced_by_a_single_allowed_token() -> None:
    assert greedy_decode(tiny_model(), [10], 4, allowed=[11]) == [11, 11, 11, 11]


def test_zero_learning_rate_leaves_parameters_unchanged() -> None:
    model = tiny_model()
    before = {name: parameter.detach().clone() for name, parameter in model.named_parameters()}
    trainer = Trainer(
        model, tiny_objective(LossVariant.DIST), OptimizerConfiguration(learning_rate=0.0, weight_decay=0.0)
    )
    trainer.train_step(tiny_batch(np.random.default_rng(0)), np.random.default_rng(1))
    assert trainer.step == 1
    assert all(torch.equal(before[name], parameter) for name, parameter in model.named_parameters())


def test_training_reduces_the_loss() -> None:
    model = tiny_model()
    config = OptimizerConfiguration(learning_rate=1e-2, total_steps=30)
    trainer = Trainer(model, tiny_objective(LossVariant.SFT), config)
    batch = tiny_batch(np.random.default_rng(0))
    first = trainer.evaluate(batch).combined
    for _ in range(30):
        trainer.train_step(batch)
    assert trainer.evaluate(batch).combined < first


def test_training_is_deterministic() -> None:
    def train() -> list:
        config = OptimizerConfiguration(learning_rate=1e-3, total_steps=3)
        trainer = Trainer(tiny_model(seed=2), tiny_objective(LossVariant.DIST), config)
        batch = tiny_batch(np.random.default_rng(0))
        rng = np.random.default_rng(9)
        return [trainer.train_step(batch, rng).combined for _ in range(3)]

    assert train() == train()


def test_warmup_schedule() -> None:
    config = OptimizerConfiguration(learning_rate=1.0, total_steps=40, warmup_fraction=0.1)
    assert config.warmup_steps == 4
    assert [config.factor(step) for step in range(5)] == [0.25, 0.5, 0.75, 1.0, 1.0]
    with pytest.raises(ConfigurationError):
        OptimizerConfiguration(learning_rate=-1.0)


def test_checkpoint_round_trip(tmp_path) -> None:  # type: ignore
    model = tiny_model(seed=7)
    path = save_checkpoint(model, tmp_path / "model", step=12, seed=7, extra={"variant": "dist"})
    loaded, manifest = load_checkpoint(path)
    assert manifest["step"] == 12
    assert manifest["extra"] == {"variant": "dist"}
    assert loaded.config == model.config
    original = dict(model.named_parameters())
    assert all(torch.equal(original[name], parameter) for name, parameter in loaded.named_parameters())


def test_checkpoint_detects_corruption(tmp_path) -> None:  # type: ignore
    path = save_checkpoint(tiny_model(), tmp_path / "model", step=0, seed=0)
    binary = path.with_suffix(".bin")
    payload = bytearray(binary.read_bytes())
    payload[0] ^= 0xFF
    binary.write_bytes(bytes(payload))
    with pytest.raises(ShapeError):
        load_checkpoint(path)
