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

"""Training runs: one model per seed, trained with the configured objective and evaluated on a shared set."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import time
from typing import Any, Dict, List, Sequence, Tuple, Union

from loguru import logger
import numpy as np
from rx.subject import Subject
import torch

from distflow.common.decorators import timer, trace
from distflow.common.errors import NumericError
from distflow.common.helpers import canonical_json, content_hash, spawn_generators
from distflow.harness.events import (
    EvaluationCompleted,
    SeedCompleted,
    StepCompleted,
    TrainingFailed,
    TrainingStarted,
)
from distflow.harness.recorder import SUMMARY_FILE, MetricsRecorder
from distflow.harness.run_configuration import RunConfiguration, TaskKind
from distflow.losses.batch import SequenceExample, TrainingBatch
from distflow.losses.objective import Objective, ObjectiveConfiguration
from distflow.metrics.metric_spec import MetricKind, MetricSpec
from distflow.models.checkpoint import save_checkpoint
from distflow.models.trainer import OptimizerConfiguration, Trainer
from distflow.models.transformer import Transformer
from distflow.targets.target_configuration import TargetConfiguration
from distflow.tasks.codebook_task import CodebookTask, eval_codebook, gen_codebook_task
from distflow.tasks.regression import (
    RegressionProblem,
    eval_regression,
    gen_problems,
    problems_hash,
    render_prompt,
    save_problems,
)
from distflow.tasks.tokenizer import NumericTokenization

TRAIN_STREAM = 0
EVAL_STREAM = 1
# Temperature handed to objectives that never build distance targets.
UNUSED_TAU = 1.0


@dataclass(frozen=True)
class EvaluationSet:
    """Evaluation data shared by every seed of a run and by every run compared with it.

    Attributes:
    eval_hash: Content hash of the evaluation data.
    problems: Regression problems (regression task).
    task: Codebook task (codebook task).
    sequences: Held-out codebook sequences (codebook task).

    """

    eval_hash: str
    problems: Tuple[RegressionProblem, ...] = ()
    task: Union[CodebookTask, None] = None
    sequences: Tuple[Tuple[int, ...], ...] = ()


@trace()
def evaluation_set(config: RunConfiguration) -> EvaluationSet:
    """Build the evaluation set a configuration is scored on."""
    if config.task == TaskKind.REGRESSION:
        problems = tuple(gen_problems([config.eval_seed, EVAL_STREAM], config.test_problems))
        return EvaluationSet(eval_hash=problems_hash(problems), problems=problems)
    settings = config.codebook
    task, held_out = gen_codebook_task(
        [config.eval_seed, EVAL_STREAM], settings.m, settings.d, settings.length, settings.tau_gen, settings.held_out
    )
    digest = content_hash({"codebook": task.codebook_hash(), "sequences": [list(s) for s in held_out]})
    return EvaluationSet(eval_hash=digest, task=task, sequences=tuple(held_out))


def _metric(config: RunConfiguration, data: EvaluationSet) -> MetricSpec:
    if config.task == TaskKind.REGRESSION:
        return MetricSpec(kind=MetricKind.SQUARED_EUCLIDEAN_SCALAR, subset=NumericTokenization().digit_subset())
    return data.task.metric  # type: ignore


def _objective(config: RunConfiguration, data: EvaluationSet) -> Objective:
    metric = _metric(config, data)
    if config.loss_variant.uses_distance_loss:
        target = TargetConfiguration.build({"tau": config.tau, "metric": metric, "seed": config.eval_seed})
    else:
        target = TargetConfiguration(tau=UNUSED_TAU, metric=metric)
    return Objective(
        ObjectiveConfiguration(
            variant=config.loss_variant,
            target=target,
            alpha=config.alpha,
            restriction=config.kl_restriction,
            reduction=config.reduction,
            contrastive_radius=config.contrastive_radius,
            label_smoothing=config.label_smoothing,
        )
    )


def training_examples(config: RunConfiguration, data: EvaluationSet, seed: int) -> List[SequenceExample]:
    """Training sequences of one seed; training problem counts are nested, the first n are shared."""
    if config.task == TaskKind.REGRESSION:
        tok = NumericTokenization()
        problems = gen_problems([seed, TRAIN_STREAM], config.train_problems)
        return [render_prompt(problem, tok, config.place_value_mode) for problem in problems]
    task: CodebookTask = data.task  # type: ignore
    rng = np.random.default_rng([seed, TRAIN_STREAM])
    return [task.example(sequence) for sequence in task.sample(rng, config.codebook.sequences)]


def evaluate(config: RunConfiguration, model: Transformer, data: EvaluationSet) -> Dict[str, float]:
    if config.task == TaskKind.REGRESSION:
        mae, rmse = eval_regression(model, data.problems, NumericTokenization())
        return {"mae": mae, "rmse": rmse}
    top1, expected = eval_codebook(model, data.task, data.sequences)  # type: ignore
    return {"top1": top1, "expected_distance": expected}


def _configure_torch(threads: int) -> None:
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(True)


@timer(level="DEBUG")
def train_seed(
    config: RunConfiguration, seed: int, data: EvaluationSet, events: Subject, out: Path
) -> Dict[str, float]:
    """Train and evaluate one seed, emitting training events.

    Args:
        config: Run configuration.
        seed: Seed of the model initialization, the training data and the batch order.
        data: Evaluation set.
        events: Subject receiving training events.
        out: Output directory (checkpoints and diagnostics).

    Returns:
        Final evaluation metrics.
    """
    run_id = config.run_id
    _configure_torch(config.threads)
    start = time.perf_counter()
    model = Transformer(config.model.copy(seed=seed))  # type: ignore
    trainer = Trainer(
        model,
        _objective(config, data),
        OptimizerConfiguration(
            learning_rate=config.learning_rate,
            total_steps=config.steps,
            warmup_fraction=config.warmup_fraction,
            weight_decay=config.weight_decay,
        ),
    )
    examples = training_examples(config, data, seed)
    batch_rng, contrastive_rng = spawn_generators(seed, 2)
    events.on_next(
        TrainingStarted(
            run_id=run_id,
            seed=seed,
            variant=config.loss_variant.label,
            train_problems=config.train_problems,
            config_hash=config.config_hash(),
            eval_hash=data.eval_hash,
            parameters=model.parameter_count(),
        )
    )

    def emit_evaluation(step: int) -> Dict[str, float]:
        metrics = evaluate(config, model, data)
        events.on_next(
            EvaluationCompleted(
                run_id=run_id,
                seed=seed,
                step=step,
                metrics=metrics,
                eval_hash=data.eval_hash,
                elapsed=time.perf_counter() - start,
            )
        )
        return metrics

    emit_evaluation(0)
    for step in range(config.steps):
        batch = TrainingBatch.from_examples(
            [examples[int(i)] for i in batch_rng.integers(len(examples), size=config.batch_size)]
        )
        learning_rate = trainer.learning_rate
        try:
            report = trainer.train_step(batch, contrastive_rng)
        except NumericError as error:
            _dump_diagnostic(out, model, seed, step, error)
            events.on_next(
                TrainingFailed(run_id=run_id, seed=seed, step=step, message=str(error), diagnostic=error.diagnostic)
            )
            raise
        done = step + 1
        if done % config.log_every == 0 or done == 1 or done == config.steps:
            events.on_next(
                StepCompleted(
                    run_id=run_id,
                    seed=seed,
                    step=done,
                    report=report,
                    learning_rate=learning_rate,
                    elapsed=time.perf_counter() - start,
                )
            )
        if config.eval_every and done % config.eval_every == 0 and done != config.steps:
            emit_evaluation(done)
    metrics = emit_evaluation(config.steps)
    save_checkpoint(
        model, out / "checkpoints" / "seed-{}".format(seed), config.steps, seed, extra={"run_id": run_id}
    )
    events.on_next(
        SeedCompleted(
            run_id=run_id, seed=seed, steps=config.steps, metrics=metrics, elapsed=time.perf_counter() - start
        )
    )
    return metrics


def _dump_diagnostic(out: Path, model: Transformer, seed: int, step: int, error: NumericError) -> None:
    logger.error("Non-finite loss in seed {} at step {}; writing diagnostic checkpoint.", seed, step)
    diagnostic = {"seed": seed, "step": step, "message": str(error), "diagnostic": error.diagnostic}
    (out / "diagnostic.json").write_text(canonical_json(_jsonable(diagnostic)), encoding="utf-8")
    save_checkpoint(model, out / "checkpoints" / "seed-{}-diagnostic".format(seed), step, seed)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, float) and not np.isfinite(value):
        return repr(value)
    return value


@trace()
@timer(level="INFO")
def run(config: RunConfiguration, out: Union[str, Path], seeds: Sequence[int] = ()) -> Dict[str, Any]:
    """Train and evaluate a configuration for each of its seeds.

    Writes `config.json`, `metrics.jsonl`, `timing.jsonl`, `summary.json` and per-seed checkpoints
    under `out`; regression runs also write their evaluation problems.

    Args:
        config: Run configuration.
        out: Output directory.
        seeds: Seeds overriding the configured ones.

    Returns:
        The summary: per-seed final metrics, their mean and std, and provenance hashes.
    """
    if seeds:
        config = config.copy(seeds=tuple(seeds))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    logger.info("Running [{}] with seeds {} into [{}]...", config.run_id, list(config.seeds), out)
    (out / "config.json").write_text(config.canonical(), encoding="utf-8")
    data = evaluation_set(config)
    if data.problems:
        save_problems(data.problems, out / "eval_problems.json")
    events = Subject()
    recorder = MetricsRecorder(out)
    subscription = events.subscribe(recorder)
    try:
        for seed in config.seeds:
            train_seed(config, seed, data, events, out)
    except Exception as error:
        events.on_error(error)
        raise
    finally:
        subscription.dispose()
        recorder.close()
    summary = dict(
        recorder.summary(),
        run_id=config.run_id,
        config=config.to_dict(),
        config_hash=config.config_hash(),
        eval_hash=data.eval_hash,
    )
    (out / SUMMARY_FILE).write_text(canonical_json(summary), encoding="utf-8")
    return summary
