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

from pathlib import Path
from typing import List, Sequence, Union

from loguru import logger

from distflow.common.decorators import timer, trace
from distflow.common.errors import ConfigurationError, fail
from distflow.common.helpers import canonical_json
from distflow.harness.report import (
    aggregate,
    CSV_FILE,
    REGRESSION_METRICS,
    render_csv,
    render_table,
    ResultRow,
    TABLE_FILE,
)
from distflow.harness.run_configuration import RunConfiguration, TaskKind
from distflow.harness.sweep import run_all
from distflow.losses.variants import LossVariant

ABLATION_VARIANTS = (
    LossVariant.DIST,
    LossVariant.DIST_NO_PLACE,
    LossVariant.DIST_NO_CONTRASTIVE,
    LossVariant.LABEL_SMOOTH,
    LossVariant.SFT,
)
ABLATION_SEEDS = tuple(range(1, 11))
ABLATION_FILE = "ablation.json"


def ablation_configurations(base: RunConfiguration, seeds: Sequence[int] = ABLATION_SEEDS) -> List[RunConfiguration]:
    """One configuration per ablation row, identical to `base` except for the loss variant."""
    if base.task != TaskKind.REGRESSION:
        raise fail(ConfigurationError, "Ablation needs the regression task, got [{}].".format(base.task.label))
    if base.tau is None:
        raise fail(ConfigurationError, "Ablation base configuration needs [tau] for its distance variants.")
    return [base.copy(loss_variant=variant, seeds=tuple(seeds)) for variant in ABLATION_VARIANTS]


@trace()
@timer(level="INFO")
def ablate(base: RunConfiguration, out: Union[str, Path], seeds: Sequence[int] = ()) -> List[ResultRow]:
    """Run the component ablation and write its table.

    Rows come in ablation order: full objective, each component removed, then plain cross-entropy.
    All rows are scored on the same evaluation problems.

    Args:
        base: Regression configuration; its loss variant is replaced per row.
        out: Output directory.
        seeds: Seeds of every row, 1..10 when empty.

    Returns:
        Five rows with MAE and RMSE mean and std.
    """
    configs = ablation_configurations(base, tuple(seeds) or ABLATION_SEEDS)
    out = Path(out)
    results, eval_hash = run_all(configs, out)
    order = {variant: index for index, variant in enumerate(ABLATION_VARIANTS)}
    rows = sorted(aggregate(results), key=lambda row: order[row.variant])
    (out / TABLE_FILE).write_text(render_table(rows, REGRESSION_METRICS), encoding="utf-8")
    (out / CSV_FILE).write_text(render_csv(rows, REGRESSION_METRICS), encoding="utf-8")
    (out / ABLATION_FILE).write_text(
        canonical_json({"eval_hash": eval_hash, "rows": [row.to_dict() for row in rows]}), encoding="utf-8"
    )
    logger.info("Ablation table written to [{}].", out / TABLE_FILE)
    return rows
