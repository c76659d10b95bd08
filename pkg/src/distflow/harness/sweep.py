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

"""Seed-replicated sweeps over run configurations sharing one evaluation set."""
from __future__ import annotations

from concurrent.futures import as_completed, ProcessPoolExecutor
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from loguru import logger

from distflow.common.decorators import timer, trace
from distflow.common.errors import ConfigurationError, fail
from distflow.common.helpers import canonical_json
from distflow.harness.recorder import METRICS_FILE
from distflow.harness.report import aggregate, FinalResult, metric_names, read_results, ResultRow, write_artifacts
from distflow.harness.run_configuration import RunConfiguration
from distflow.harness.runner import run

MAX_WORKERS_VARIABLE = "DISTFLOW_MAX_WORKERS"
SWEEP_FILE = "sweep.json"


def max_workers() -> Optional[int]:
    """Worker cap from the environment; `None` means serial execution."""
    value = os.environ.get(MAX_WORKERS_VARIABLE, "").strip()
    if not value:
        return None
    try:
        workers = int(value)
    except ValueError:
        message = "Invalid [{}] value [{}]: expected an integer.".format(MAX_WORKERS_VARIABLE, value)
        raise fail(ConfigurationError, message)
    if workers < 1:
        message = "Invalid [{}] value [{}]: must be at least 1.".format(MAX_WORKERS_VARIABLE, value)
        raise fail(ConfigurationError, message)
    return workers


def run_directory(out: Path, config: RunConfiguration) -> Path:
    return out / "runs" / "{}-{}".format(config.run_id, config.config_hash()[:8])


def check_shared_evaluation(configs: Sequence[RunConfiguration]) -> None:
    """Refuse configurations that would be scored on different evaluation sets or collide on a table key."""
    if not configs:
        raise fail(ConfigurationError, "Sweep needs at least one configuration.")
    reference = configs[0].eval_key()
    keys: Dict[Tuple[int, int], RunConfiguration] = {}
    for config in configs:
        if config.eval_key() != reference:
            raise fail(
                ConfigurationError,
                "Configuration [{}] evaluates on {} but [{}] evaluates on {}.".format(
                    config.run_id, config.eval_key(), configs[0].run_id, reference
                ),
            )
        key = (config.loss_variant.value, config.train_problems)
        if key in keys:
            raise fail(ConfigurationError, "Configurations share the table key [{}].".format(config.run_id))
        keys[key] = config


def _run_one(config: RunConfiguration, out: Path) -> Dict[str, Any]:
    return run(config, out)


def execute(jobs: List[Tuple[RunConfiguration, Path]], workers: Optional[int]) -> None:
    """Run each (configuration, directory) job, serially or on a process pool of `workers`."""
    if workers is None or workers == 1 or len(jobs) == 1:
        for config, out in jobs:
            _run_one(config, out)
        return
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(_run_one, config, out): config for config, out in jobs}
        for future in as_completed(futures):
            config = futures[future]
            future.result()
            logger.info("Finished run [{}].", config.run_id)


def run_all(configs: Sequence[RunConfiguration], out: Path) -> Tuple[List[FinalResult], str]:
    """Run configurations sharing one evaluation set and collect their final per-seed results.

    Returns:
        Final results and the evaluation set hash every run recorded.
    """
    check_shared_evaluation(configs)
    jobs = [(config, run_directory(out, config)) for config in configs]
    workers = max_workers()
    logger.info("Running {} configurations with {} workers into [{}]...", len(jobs), workers or 1, out)
    execute(jobs, workers)
    results = read_results([directory / METRICS_FILE for _, directory in jobs])
    hashes = sorted({result.eval_hash for result in results})
    if len(hashes) != 1:
        raise fail(ConfigurationError, "Runs recorded different evaluation sets {}.".format(hashes))
    return results, hashes[0]


@trace()
@timer(level="INFO")
def sweep(
    configs: Sequence[RunConfiguration], out: Union[str, Path], seeds: Sequence[int] = (), invert: bool = True
) -> List[ResultRow]:
    """Run every configuration and aggregate the results by (variant, train_problems).

    Each configuration runs into `out/runs/<run_id>-<hash>`; the table, CSV, plot and `sweep.json`
    are written to `out`. Row order does not depend on the order of `configs`.

    Args:
        configs: Run configurations sharing one evaluation set.
        out: Output directory.
        seeds: Seeds overriding the configured ones.
        invert: Invert the y axis of the plot.

    Returns:
        Aggregated rows.
    """
    if seeds:
        configs = [config.copy(seeds=tuple(seeds)) for config in configs]
    out = Path(out)
    results, eval_hash = run_all(configs, out)
    rows = aggregate(results)
    metrics = metric_names(results)
    write_artifacts(rows, metrics, out, invert)
    (out / SWEEP_FILE).write_text(
        canonical_json({"eval_hash": eval_hash, "metrics": list(metrics), "rows": [row.to_dict() for row in rows]}),
        encoding="utf-8",
    )
    return rows
