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

"""Comparison tables and plots built from per-seed final metrics."""
from __future__ import annotations

import csv
from dataclasses import dataclass
import io
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

from loguru import logger
import matplotlib

matplotlib.use("Agg")
from matplotlib import pyplot  # noqa: E402

from distflow.common.decorators import timer, trace  # noqa: E402
from distflow.common.errors import ConfigurationError, fail  # noqa: E402
from distflow.common.helpers import mean_std  # noqa: E402
from distflow.harness.recorder import METRICS_FILE  # noqa: E402
from distflow.losses.variants import LossVariant  # noqa: E402

REGRESSION_METRICS = ("mae", "rmse")
CODEBOOK_METRICS = ("top1", "expected_distance")
TABLE_FILE = "table.md"
CSV_FILE = "table.csv"


@dataclass(frozen=True)
class FinalResult:
    """Final metrics of one seed of one run.

    Attributes:
    variant: Loss variant.
    train_problems: Number of training problems.
    seed: Seed.
    metrics: Final task metrics.
    eval_hash: Content hash of the evaluation set.

    """

    variant: LossVariant
    train_problems: int
    seed: int
    metrics: Dict[str, float]
    eval_hash: str = ""


@dataclass(frozen=True)
class ResultRow:
    """Aggregated results of one (variant, train_problems) key.

    Attributes:
    variant: Loss variant.
    train_problems: Number of training problems.
    seeds: Seeds aggregated.
    mean: Mean of each metric over seeds.
    std: Sample standard deviation of each metric over seeds.

    """

    variant: LossVariant
    train_problems: int
    seeds: Tuple[int, ...]
    mean: Dict[str, float]
    std: Dict[str, float]

    @property
    def key(self) -> Tuple[int, int]:
        return self.variant.value, self.train_problems

    def to_dict(self) -> Dict[str, Any]:
        return {
            "variant": self.variant.label,
            "train_problems": self.train_problems,
            "seeds": list(self.seeds),
            "mean": self.mean,
            "std": self.std,
        }


def metric_names(results: Iterable[FinalResult]) -> Tuple[str, ...]:
    names = {name for result in results for name in result.metrics}
    if names.issuperset(REGRESSION_METRICS):
        return REGRESSION_METRICS
    if names.issuperset(CODEBOOK_METRICS):
        return CODEBOOK_METRICS
    return tuple(sorted(names))


def aggregate(results: Sequence[FinalResult]) -> List[ResultRow]:
    """Group results by (variant, train_problems) in canonical order: variant enum order, then count.

    Args:
        results: Per-seed results; each seed may appear once per key.

    Returns:
        List of rows.
    """
    groups: Dict[Tuple[LossVariant, int], Dict[int, Dict[str, float]]] = {}
    for result in results:
        group = groups.setdefault((result.variant, result.train_problems), {})
        if result.seed in group:
            raise fail(
                ConfigurationError,
                "Seed [{}] appears twice for [{}, {}].".format(
                    result.seed, result.variant.label, result.train_problems
                ),
            )
        group[result.seed] = result.metrics
    rows = []
    for (variant, train_problems), by_seed in sorted(groups.items(), key=lambda item: (item[0][0].value, item[0][1])):
        seeds = tuple(sorted(by_seed.keys()))
        names = sorted({name for metrics in by_seed.values() for name in metrics})
        mean: Dict[str, float] = {}
        std: Dict[str, float] = {}
        for name in names:
            mean[name], std[name] = mean_std(by_seed[seed][name] for seed in seeds if name in by_seed[seed])
        rows.append(ResultRow(variant=variant, train_problems=train_problems, seeds=seeds, mean=mean, std=std))
    return rows


def render_table(rows: Sequence[ResultRow], metrics: Sequence[str]) -> str:
    """Markdown table with mean and std columns per metric."""
    header = ["variant", "train_problems", "seeds"]
    for name in metrics:
        header.extend(["{} mean".format(name), "{} std".format(name)])
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join(["---"] + ["---:"] * (len(header) - 1)) + "|",
    ]
    for row in rows:
        cells = [row.variant.label, str(row.train_problems), str(len(row.seeds))]
        for name in metrics:
            cells.extend(["{:.4f}".format(row.mean[name]), "{:.4f}".format(row.std[name])])
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def render_csv(rows: Sequence[ResultRow], metrics: Sequence[str]) -> str:
    """Plot-ready CSV: one line per row, full precision."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    header = ["variant", "train_problems", "seeds"]
    for name in metrics:
        header.extend(["{}_mean".format(name), "{}_std".format(name)])
    writer.writerow(header)
    for row in rows:
        line: List[Any] = [row.variant.label, row.train_problems, len(row.seeds)]
        for name in metrics:
            line.extend([repr(row.mean[name]), repr(row.std[name])])
        writer.writerow(line)
    return buffer.getvalue()


def render_svg(rows: Sequence[ResultRow], metric: str = "mae", invert: bool = True) -> str:
    """Line plot of a metric against the number of training problems, one line per variant.

    Output is byte-stable: the SVG id salt is fixed and no date is embedded.
    """
    with matplotlib.rc_context({"svg.hashsalt": "distflow", "svg.fonttype": "none"}):
        figure, axes = pyplot.subplots(figsize=(6.4, 4.0))
        variants = sorted({row.variant for row in rows}, key=lambda variant: variant.value)
        for variant in variants:
            points = sorted((row.train_problems, row.mean[metric]) for row in rows if row.variant == variant)
            axes.plot([x for x, _ in points], [y for _, y in points], marker="o", label=variant.label)
        axes.set_xlabel("training problems")
        axes.set_ylabel(metric.upper())
        if invert:
            axes.invert_yaxis()
        axes.legend()
        axes.grid(True, alpha=0.3)
        buffer = io.StringIO()
        figure.savefig(buffer, format="svg", metadata={"Date": None})
        pyplot.close(figure)
    return buffer.getvalue()


def write_artifacts(rows: Sequence[ResultRow], metrics: Sequence[str], out: Path, invert: bool = True) -> None:
    """Write the markdown table, the CSV and the SVG plot of the first metric."""
    out.mkdir(parents=True, exist_ok=True)
    (out / TABLE_FILE).write_text(render_table(rows, metrics), encoding="utf-8")
    (out / CSV_FILE).write_text(render_csv(rows, metrics), encoding="utf-8")
    (out / "{}.svg".format(metrics[0])).write_text(render_svg(rows, metrics[0], invert), encoding="utf-8")


def _metrics_path(path: Path) -> Path:
    return path / METRICS_FILE if path.is_dir() else path


@trace()
def read_results(paths: Sequence[Union[str, Path]]) -> List[FinalResult]:
    """Read final per-seed results from metrics files (or directories holding `metrics.jsonl`).

    Args:
        paths: Metrics files or run directories.

    Returns:
        Results in file order.
    """
    results: List[FinalResult] = []
    for entry in paths:
        path = _metrics_path(Path(entry))
        starts: Dict[Tuple[str, int], Dict[str, Any]] = {}
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as error:
            raise fail(ConfigurationError, "Cannot read metrics file [{}]: {}".format(path, error))
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                key = (record["run_id"], int(record["seed"]))
                if record["event"] == "start":
                    starts[key] = record
                elif record["event"] == "final":
                    start = starts[key]
                    metrics = {
                        name: float(value)
                        for name, value in record.items()
                        if name not in ("run_id", "seed", "event", "step") and isinstance(value, (int, float))
                    }
                    results.append(
                        FinalResult(
                            variant=LossVariant.from_string(start["variant"]),  # type: ignore
                            train_problems=int(start["train_problems"]),
                            seed=key[1],
                            metrics=metrics,
                            eval_hash=str(start.get("eval_hash", "")),
                        )
                    )
            except (ValueError, KeyError, TypeError) as error:
                raise fail(ConfigurationError, "Cannot parse [{}] line {}: {}".format(path, number, error))
    return results


@trace()
@timer(level="DEBUG")
def report(paths: Sequence[Union[str, Path]], out: Union[str, Path], invert: bool = True) -> List[ResultRow]:
    """Write `table.md`, `table.csv` and an SVG plot of the first metric from metrics files.

    Args:
        paths: Metrics files or run directories.
        out: Output directory.
        invert: Invert the y axis of the plot.

    Returns:
        Aggregated rows.
    """
    results = read_results(paths)
    if not results:
        message = "No final results found in {}; nothing to report.".format([str(path) for path in paths])
        raise fail(ConfigurationError, message)
    rows = aggregate(results)
    write_artifacts(rows, metric_names(results), Path(out), invert)
    logger.info("Reported {} rows into [{}].", len(rows), out)
    return rows
