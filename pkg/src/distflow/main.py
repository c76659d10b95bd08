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

"""Command-line entry point: `distflow run|sweep|ablate|report|selftest`."""
import argparse
import json
from pathlib import Path
import sys
from typing import Any, Dict, List, Optional, Sequence

from loguru import logger

from distflow.common.errors import ConfigurationError, DistflowError, NumericError
from distflow.common.helpers import canonical_json, parse_int_list
from distflow.harness.ablation import ablate
from distflow.harness.report import report
from distflow.harness.run_configuration import (
    FULL_TEST_PROBLEMS,
    load_configurations,
    load_run_configuration,
    RunConfiguration,
)
from distflow.harness.runner import run
from distflow.harness.selftest import selftest
from distflow.harness.sweep import sweep
from distflow.losses.variants import LossVariant

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2
EXIT_NUMERIC = 3
LOG_FILE = "run.log"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distflow", description="Distance-aware training of autoregressive models.")
    parser.add_argument("--log-level", default="INFO", help="Level of the stderr log sink (default INFO).")
    verbs = parser.add_subparsers(dest="verb", required=True)

    def experiment(name: str, help_text: str) -> argparse.ArgumentParser:
        verb = verbs.add_parser(name, help=help_text)
        verb.add_argument("--config", required=True, type=Path, help="JSON configuration file.")
        verb.add_argument("--out", required=True, type=Path, help="Output directory.")
        verb.add_argument("--seeds", type=parse_int_list, default=None, help="Seeds, e.g. `1,2,3` or `1-5`.")
        verb.add_argument("--full-eval", action="store_true", help="Evaluate on 1000 test problems.")
        return verb

    run_verb = experiment("run", "Train and evaluate one configuration.")
    run_verb.add_argument("--variant", default=None, help="Loss variant overriding the configured one.")
    sweep_verb = experiment("sweep", "Run a list or grid of configurations and aggregate them.")
    sweep_verb.add_argument("--variant", default=None, help="Only run configurations of this loss variant.")
    sweep_verb.add_argument("--no-invert", action="store_true", help="Do not invert the y axis of the plot.")
    experiment("ablate", "Run the component ablation of a regression configuration.")
    report_verb = verbs.add_parser("report", help="Render a table and a plot from metrics files.")
    report_verb.add_argument("metrics", nargs="+", type=Path, help="Metrics files or run directories.")
    report_verb.add_argument("--out", required=True, type=Path, help="Output directory.")
    report_verb.add_argument("--no-invert", action="store_true", help="Do not invert the y axis of the plot.")
    selftest_verb = verbs.add_parser("selftest", help="Run the randomized property suites.")
    selftest_verb.add_argument("--scale", type=float, default=1.0, help="Multiplier of the instance counts.")
    selftest_verb.add_argument("--seed", type=int, default=0, help="Seed of the suites.")
    selftest_verb.add_argument("--out", type=Path, default=None, help="Optional output directory.")
    return parser


def configure_logging(level: str, out: Optional[Path]) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level.upper())
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        logger.add(out / LOG_FILE, level="DEBUG", mode="w", enqueue=True)


def _variant(name: str) -> LossVariant:
    try:
        return LossVariant.from_string(name)  # type: ignore
    except ValueError as error:
        raise ConfigurationError(str(error))


def _prepare(config: RunConfiguration, args: argparse.Namespace) -> RunConfiguration:
    if args.full_eval:
        config = config.copy(test_problems=FULL_TEST_PROBLEMS)
    if getattr(args, "variant", None) and args.verb == "run":
        config = config.copy(loss_variant=_variant(args.variant))
    return config


def error_report(error: Exception) -> Dict[str, Any]:
    """Machine-readable description of a failure."""
    data: Dict[str, Any] = {"error": type(error).__name__, "message": str(error)}
    if isinstance(error, NumericError):
        data["diagnostic"] = error.diagnostic
    return data


def _emit(data: Any) -> None:
    sys.stdout.write(canonical_json(data))


def dispatch(args: argparse.Namespace) -> int:
    seeds: Sequence[int] = getattr(args, "seeds", None) or ()
    if args.verb == "run":
        config = _prepare(load_run_configuration(args.config), args)
        summary = run(config, args.out, seeds)
        _emit({"mean": summary["mean"], "std": summary["std"], "run_id": summary["run_id"]})
    elif args.verb == "sweep":
        configs = [_prepare(config, args) for config in load_configurations(args.config)]
        if args.variant:
            variant = _variant(args.variant)
            configs = [config for config in configs if config.loss_variant == variant]
            if not configs:
                raise ConfigurationError("No configuration uses variant [{}].".format(variant.label))
        rows = sweep(configs, args.out, seeds, invert=not args.no_invert)
        _emit([row.to_dict() for row in rows])
    elif args.verb == "ablate":
        rows = ablate(_prepare(load_run_configuration(args.config), args), args.out, seeds)
        _emit([row.to_dict() for row in rows])
    elif args.verb == "report":
        rows = report(args.metrics, args.out, invert=not args.no_invert)
        _emit([row.to_dict() for row in rows])
    else:
        results = selftest(scale=args.scale, seed=args.seed)
        data: List[Dict[str, Any]] = [result.to_dict() for result in results]
        if args.out is not None:
            (args.out / "selftest.json").write_text(canonical_json(data), encoding="utf-8")
        _emit(data)
        if not all(result.passed for result in results):
            return EXIT_FAILED
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, getattr(args, "out", None))
    try:
        return dispatch(args)
    except NumericError as error:
        sys.stderr.write(json.dumps(error_report(error), sort_keys=True, default=repr) + "\n")
        return EXIT_NUMERIC
    except (DistflowError, ValueError, TypeError) as error:
        sys.stderr.write(json.dumps(error_report(error), sort_keys=True, default=repr) + "\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
