from __future__ import annotations

import json
import math

import numpy as np
from hypothesis import given, strategies as st

from blockband.report import ExperimentReport, config_header, fmt_float, make_rng, map_trials, sub_seed, trial_seed


def _square(x):
    return x * x


def test_trial_seed_is_stable_and_distinct():
    a = make_rng(trial_seed(42, 3)).standard_normal(4)
    assert np.array_equal(a, make_rng(trial_seed(42, 3)).standard_normal(4))
    assert not np.array_equal(a, make_rng(trial_seed(42, 4)).standard_normal(4))
    assert not np.array_equal(a, make_rng(trial_seed(43, 3)).standard_normal(4))


def test_sub_seed_extends_key():
    s = sub_seed(trial_seed(1, 2), 5)
    assert tuple(s.spawn_key) == (2, 5)
    assert tuple(sub_seed(7, 1, 2).spawn_key) == (1, 2)


def test_map_trials_keeps_order():
    assert map_trials(_square, [3, 1, 2], jobs=2) == [9, 1, 4]
    assert map_trials(_square, [3, 1, 2], jobs=1) == [9, 1, 4]


def test_report_json_is_canonical():
    rep = ExperimentReport("x", {"z": 1 + 2j, "n": 3})
    rep.summary = {"a": float("nan"), "b": math.inf, "c": np.float64(0.25)}
    rep.add_check("ok", 1.0, 2.0, True)
    d = json.loads(rep.to_json())
    assert d["config"]["z"] == {"re": 1.0, "im": 2.0}
    assert d["summary"] == {"a": "nan", "b": "inf", "c": 0.25}
    assert rep.passed
    assert rep.to_json() == rep.to_json()


def test_trials_csv_and_header():
    rep = ExperimentReport("x", {})
    rep.trials = [{"trial": 0, "v": 0.1}, {"trial": 1, "v": 2}]
    assert rep.trials_csv(["v"]) == "trial,v\n0,0.1\n1,2\n"
    assert config_header({"b": 1, "a": 2}) == '# config: {"a": 2, "b": 1}\n'


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_float_round_trips(x):
    assert float(fmt_float(x)) == x
