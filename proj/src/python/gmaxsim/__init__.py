# Copyright 2026 The gmaxsim Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================

"""Python front end for the gmaxsim simulator."""

import json

from . import _gmax
from ._gmax import GmaxError, bound_value, oracle_goodput, select_group

__all__ = [
    "GmaxError",
    "analyze",
    "bound_value",
    "compare",
    "generate",
    "optimize_bound",
    "oracle_goodput",
    "run",
    "select_group",
]


def generate(kind="mixed", count=1000, seed=0, rate=1.0, bursty=False):
    """Returns a synthetic trace as a list of request dicts."""
    text = _gmax.generate(kind, count, seed, rate, bursty)
    return [json.loads(line) for line in text.splitlines() if line]


def _to_jsonl(trace):
    if isinstance(trace, str):
        return trace
    return "".join(json.dumps(r) + "\n" for r in trace)


def run(trace, config=None):
    """Simulates `trace` (list of dicts or JSONL text).

    Returns (result, report) as dicts.
    """
    result, report = _gmax.run(_to_jsonl(trace), json.dumps(config or {}))
    return json.loads(result), json.loads(report)


def optimize_bound(p=1.0, grid=200, fixed_delta=None):
    return json.loads(_gmax.optimize_bound(p, grid, fixed_delta))


def analyze(T=10.0, N=9, M=100.0, grid=200, oracle_instances=50, seed=0):
    return json.loads(_gmax.analyze(T, N, M, grid, oracle_instances, seed))


def compare(results):
    """CSV comparison of several result dicts over the same trace."""
    return _gmax.comparison_csv([json.dumps(r) for r in results])
