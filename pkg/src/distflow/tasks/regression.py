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

"""Meta linear regression: infer a line from three support points and predict y at the query x."""
from __future__ import annotations

from dataclasses import dataclass
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

from loguru import logger
import numpy as np

from distflow.common.decorators import timer, trace
from distflow.common.errors import ConfigurationError, ContractViolation, RangeError, fail
from distflow.common.helpers import FromStringEnum, canonical_json, content_hash
from distflow.losses.batch import NumericSpan, SequenceExample
from distflow.losses.position_mask import PositionMask
from distflow.models.decoding import greedy_decode
from distflow.models.transformer import Transformer
from distflow.tasks.tokenizer import BOS, EOS, NumericTokenization

SLOPE_RANGE = (0.1, 1.0)
INTERCEPT_RANGE = (0.0, 0.5)
QUERY_X = 0.5
SUPPORT_POINTS = 3
GRID = 1000
_LINEARITY_TOLERANCE = 1e-12

Seed = Union[int, Sequence[int]]


class PlaceValueMode(FromStringEnum):
    """How place weights read the rendered answer `d.ddd`.

    `DECIMAL` treats the three fractional digits as such (weights 1, 1, 1, 1);
    `SCALED_INTEGER` reads it as an integer count of thousandths (weights 4, 3, 2, 1).
    """

    DECIMAL = 0
    SCALED_INTEGER = 1


@dataclass(frozen=True)
class RegressionProblem:
    """Regression problem class.

    Immutable dataclass of one linear function, its support points and the query.

    Attributes:
    slope: Slope in [0.1, 1.0].
    intercept: Intercept in [0.0, 0.5].
    support_points: Three (x, y) pairs with distinct x and y = slope * x + intercept.
    query_x: Query abscissa.
    truth_y: slope * query_x + intercept, before rounding.

    """

    slope: float
    intercept: float
    support_points: Tuple[Tuple[float, float], ...]
    query_x: float
    truth_y: float

    def __post_init__(self) -> None:
        if not SLOPE_RANGE[0] <= self.slope <= SLOPE_RANGE[1]:
            raise fail(ContractViolation, "Slope [{}] outside {}.".format(self.slope, SLOPE_RANGE))
        if not INTERCEPT_RANGE[0] <= self.intercept <= INTERCEPT_RANGE[1]:
            raise fail(ContractViolation, "Intercept [{}] outside {}.".format(self.intercept, INTERCEPT_RANGE))
        points = tuple((float(x), float(y)) for x, y in self.support_points)
        object.__setattr__(self, "support_points", points)
        if len(points) != SUPPORT_POINTS or len({x for x, _ in points}) != SUPPORT_POINTS:
            raise fail(ContractViolation, "A problem needs {} support points with distinct x.".format(SUPPORT_POINTS))
        for x, y in points:
            if abs(y - (self.slope * x + self.intercept)) > _LINEARITY_TOLERANCE:
                raise fail(ContractViolation, "Support point ({}, {}) is off the line.".format(x, y))
        if abs(self.truth_y - (self.slope * self.query_x + self.intercept)) > _LINEARITY_TOLERANCE:
            raise fail(ContractViolation, "truth_y [{}] is off the line.".format(self.truth_y))

    @staticmethod
    def of(slope: float, intercept: float, xs: Sequence[float], query_x: float = QUERY_X) -> RegressionProblem:
        """Problem with the given line and support abscissae."""
        return RegressionProblem(
            slope=slope,
            intercept=intercept,
            support_points=tuple((x, slope * x + intercept) for x in xs),
            query_x=query_x,
            truth_y=slope * query_x + intercept,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "support_points": [list(point) for point in self.support_points],
            "query_x": self.query_x,
            "truth_y": self.truth_y,
        }

    @staticmethod
    def build(config: Dict) -> RegressionProblem:
        """Build RegressionProblem from dictionary of problem data.

        Args:
            config: Dictionary as written by `to_dict`.

        Returns:
            An instance of `distflow.tasks.regression.RegressionProblem`.
        """
        if not isinstance(config, Dict):
            message = "Invalid argument type: [config: Dict] must be Dict in [RegressionProblem.build] method call."
            logger.error(message)
            raise TypeError(message)
        missing = [key for key in ("slope", "intercept", "support_points", "query_x", "truth_y") if key not in config]
        if missing:
            raise fail(ConfigurationError, "Missing required attributes {} in RegressionProblem.".format(missing))
        return RegressionProblem(
            slope=config["slope"],
            intercept=config["intercept"],
            support_points=tuple(tuple(point) for point in config["support_points"]),  # type: ignore
            query_x=config["query_x"],
            truth_y=config["truth_y"],
        )


@trace()
def gen_problems(
    seed: Seed, n: int, x_range: Tuple[float, float] = (0.0, 1.0), query_x: float = QUERY_X
) -> List[RegressionProblem]:
    """Generate regression problems.

    Slopes and intercepts are uniform over their ranges. Support abscissae are three distinct
    values of the three-decimal grid inside `x_range`, excluding `query_x`.

    Args:
        seed: Seed (or seed sequence entropy) of the generator.
        n: Number of problems, >= 1.
        x_range: Half-open interval [low, high) of support abscissae within [0, 1].
        query_x: Query abscissa.

    Returns:
        List of problems, identical for identical arguments.
    """
    if n < 1:
        raise fail(RangeError, "Number of problems must be positive, got [{}].".format(n))
    low, high = x_range
    if not 0.0 <= low < high <= 1.0:
        raise fail(RangeError, "Invalid x range {}.".format(x_range))
    query_k = int(round(query_x * GRID))
    grid = np.array([k for k in range(int(math.ceil(low * GRID)), int(math.ceil(high * GRID))) if k != query_k])
    if grid.size < SUPPORT_POINTS:
        raise fail(RangeError, "x range {} holds fewer than {} grid values.".format(x_range, SUPPORT_POINTS))
    rng = np.random.default_rng(seed)
    problems = []
    for _ in range(n):
        slope = float(rng.uniform(*SLOPE_RANGE))
        intercept = float(rng.uniform(*INTERCEPT_RANGE))
        xs = [int(k) / GRID for k in rng.choice(grid, size=SUPPORT_POINTS, replace=False)]
        problems.append(RegressionProblem.of(slope, intercept, xs, query_x))
    return problems


def prompt_text(problem: RegressionProblem, tok: NumericTokenization) -> str:
    """Prompt up to and including the `y=` of the query, e.g. `<bos>x=0.123 y=0.456 ; ... ; x=0.500 y=`."""
    pairs = ["x={} y={}".format(tok.render(x), tok.render(y)) for x, y in problem.support_points]
    pairs.append("x={} y=".format(tok.render(problem.query_x)))
    return BOS + " ; ".join(pairs)


def render_prompt(
    problem: RegressionProblem,
    tok: NumericTokenization,
    place_value_mode: PlaceValueMode = PlaceValueMode.DECIMAL,
) -> SequenceExample:
    """Render a problem with its answer as a supervised sequence.

    The answer tokens and the closing `<eos>` are supervised; the mask covers exactly the digit
    positions of the answer, never the decimal point.

    Args:
        problem: Regression problem.
        tok: Numeric tokenization.
        place_value_mode: Place weighting of the answer digits.

    Returns:
        An instance of `distflow.losses.batch.SequenceExample`.
    """
    prompt = tok.encode(prompt_text(problem, tok))
    answer = tok.render(problem.truth_y)
    tokens = prompt + tok.encode(answer) + [tok.eos]
    start = len(prompt)
    digit_positions = tuple(start + i for i, char in enumerate(answer) if char != ".")
    flags = [False] * len(tokens)
    for position in digit_positions:
        flags[position] = True
    supervise = tuple(i >= start for i in range(len(tokens)))
    span = NumericSpan(
        positions=digit_positions,
        value=tok.scaled_integer(answer),
        fraction_digits=0 if place_value_mode == PlaceValueMode.SCALED_INTEGER else tok.decimals,
    )
    return SequenceExample(tokens=tuple(tokens), supervise=supervise, mask=PositionMask(tuple(flags)), spans=(span,))


def answer_constraints(tok: NumericTokenization) -> List[Tuple[int, ...]]:
    """Allowed tokens per answer position: digits, then the decimal point, then digits."""
    digits = tok.digit_subset().token_ids
    point = (tok.token_id("."),)
    return [digits] * tok.integer_digits + [point] + [digits] * tok.decimals


def predict_regression(model: Transformer, problem: RegressionProblem, tok: NumericTokenization) -> float:
    """Constrained greedy readout of the model's answer to one problem."""
    prompt = tok.encode(prompt_text(problem, tok))
    constraints = answer_constraints(tok)
    generated = greedy_decode(model, prompt, len(constraints), allowed=constraints)
    return tok.parse(tok.decode(generated))


def regression_errors(predictions: Sequence[float], truths: Sequence[float]) -> Tuple[float, float]:
    """MAE and RMSE of predictions; exactly rounded sums make both independent of order.

    Args:
        predictions: Predicted values.
        truths: True values, aligned with `predictions`.

    Returns:
        (MAE, RMSE).
    """
    if len(predictions) != len(truths) or not predictions:
        raise fail(RangeError, "Need equally many, at least one, predictions and truths.")
    errors = [prediction - truth for prediction, truth in zip(predictions, truths)]
    mae = math.fsum(abs(error) for error in errors) / len(errors)
    rmse = math.sqrt(math.fsum(error * error for error in errors) / len(errors))
    return mae, rmse


@trace()
@timer(level="DEBUG")
def eval_regression(
    model: Transformer, problems: Sequence[RegressionProblem], tok: NumericTokenization
) -> Tuple[float, float]:
    """Evaluate the model on problems by constrained greedy decoding of each answer.

    Args:
        model: Transformer.
        problems: Non-empty list of problems.
        tok: Numeric tokenization.

    Returns:
        (MAE, RMSE) against the unrounded truths.
    """
    if not problems:
        raise fail(RangeError, "Cannot evaluate on an empty problem list.")
    predictions = [predict_regression(model, problem, tok) for problem in problems]
    return regression_errors(predictions, [problem.truth_y for problem in problems])


def problems_hash(problems: Sequence[RegressionProblem]) -> str:
    return content_hash([problem.to_dict() for problem in problems])


@trace()
def save_problems(problems: Sequence[RegressionProblem], path: Union[str, Path]) -> str:
    """Write problems as canonical JSON with their content hash.

    Returns:
        The content hash.
    """
    digest = problems_hash(problems)
    data = {"problems": [problem.to_dict() for problem in problems], "sha256": digest}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(canonical_json(data), encoding="utf-8")
    return digest


@trace()
def load_problems(path: Union[str, Path]) -> List[RegressionProblem]:
    """Read problems written by `save_problems`, verifying the content hash."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    problems = [RegressionProblem.build(entry) for entry in data.get("problems", [])]
    if problems_hash(problems) != data.get("sha256", None):
        raise fail(ContractViolation, "Problem file [{}] does not match its hash.".format(path))
    return problems
