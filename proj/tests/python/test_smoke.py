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

import math

import pytest

import gmaxsim


def test_generate_is_deterministic():
    a = gmaxsim.generate("mixed", count=50, seed=3)
    b = gmaxsim.generate("mixed", count=50, seed=3)
    assert a == b
    assert len(a) == 50
    assert [r["id"] for r in a] == list(range(50))


def test_run_reports_goodput():
    trace = gmaxsim.generate("poisson", count=40, seed=1, rate=1.0)
    result, report = gmaxsim.run(trace, {"length_source": "oracle"})
    assert len(result["requests"]) == 40
    assert report["token_goodput"] >= 0.0
    assert 0.0 <= report["attainment"] <= 1.0


def test_run_is_repeatable():
    trace = gmaxsim.generate("chatbot", count=30, seed=2)
    first, _ = gmaxsim.run(trace, {"length_source": "oracle", "seed": 5})
    second, _ = gmaxsim.run(trace, {"length_source": "oracle", "seed": 5})
    assert first == second


def test_compare_two_policies():
    trace = gmaxsim.generate("poisson", count=30, seed=4, rate=2.0)
    g, _ = gmaxsim.run(trace, {"length_source": "oracle", "policy": "gmax"})
    f, _ = gmaxsim.run(trace, {"length_source": "oracle", "policy": "fcfs"})
    csv = gmaxsim.compare([g, f])
    assert csv.splitlines()[0] == "policy,metric,value,goodput_ratio"


def test_bound_value_closed_form():
    d, a, b, c = 1.0, 0.4, 0.4, 0.2
    expected = d / (1 + d) * min(a / (1 + d), b / (1 + d), c * (1 + d) ** 3)
    assert math.isclose(gmaxsim.bound_value(d, a, b, c), expected, rel_tol=1e-12)


def test_optimize_bound_near_reference():
    best = gmaxsim.optimize_bound(1.0, grid=60)
    assert abs(best["value"] - 1 / 8.13) / (1 / 8.13) < 0.05


def test_select_group_window():
    ids = gmaxsim.select_group([5.0, 4.0, 3.0, 0.1], [10, 20, 30, 40], [0, 0, 0, 0], 2, 0.5)
    assert sorted(ids) == [0, 1]


def test_oracle_goodput_single_slot():
    # Two conflicting jobs on one slot: only the more valuable fits.
    g = gmaxsim.oracle_goodput(1, [[0.0, 1.0, 1.0, 2.0], [0.0, 1.0, 1.0, 3.0]])
    assert g == pytest.approx(3.0)


def test_errors_are_typed():
    with pytest.raises(gmaxsim.GmaxError):
        gmaxsim.generate("nope", count=1)
    with pytest.raises(gmaxsim.GmaxError):
        gmaxsim.run("not json\n")
