"""Seed derivation, trial fan-out and the serializable experiment report."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np


def trial_seed(master_seed: int, trial: int) -> np.random.SeedSequence:
    """Seed for trial ``trial`` of a run with ``master_seed``.

    The mapping is ``SeedSequence(entropy=master_seed, spawn_key=(trial,))``.
    It depends only on the pair, so adding trials never changes earlier ones
    and distinct trials get non-overlapping PCG64 streams.
    """
    if trial < 0:
        raise ValueError("trial index must be non-negative")
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(trial),))


def sub_seed(seed, *key: int) -> np.random.SeedSequence:
    """Child stream of ``seed`` addressed by an integer key path."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(entropy=seed.entropy,
                                      spawn_key=tuple(seed.spawn_key) + tuple(int(k) for k in key))
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def default_jobs() -> int:
    return os.cpu_count() or 1


def map_trials(fn: Callable, args: Sequence, jobs: int | None = 1) -> list:
    """Apply ``fn`` to every element of ``args``; results come back in input order."""
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    if jobs == 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, args))


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _jsonable(float(obj.real)), "im": _jsonable(float(obj.imag))}
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    note: str = ""


@dataclass
class ExperimentReport:
    """Trial-indexed Monte-Carlo results.

    ``trials`` holds one dict per trial (always in trial order), ``summary``
    the aggregate statistics and ``checks`` the pass/fail comparisons against
    stated tolerances.
    """

    name: str
    config: dict
    trials: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    # bulky per-trial arrays written to their own files, not to JSON
    arrays: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add_check(self, name: str, value: float, tolerance: float, passed: bool, note: str = "") -> Check:
        c = Check(name, float(value), float(tolerance), bool(passed), note)
        self.checks.append(c)
        return c

    def to_dict(self) -> dict:
        return _jsonable({
            "name": self.name,
            "config": self.config,
            "flags": self.flags,
            "summary": self.summary,
            "checks": [c.__dict__ for c in self.checks],
            "trials": self.trials,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def trials_csv(self, columns: Iterable[str]) -> str:
        columns = list(columns)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", *columns])
        for t, row in enumerate(self.trials):
            w.writerow([row.get("trial", t), *(fmt_float(row.get(c)) for c in columns)])
        return buf.getvalue()


def fmt_float(x) -> str:
    """Stable text form of a number (``repr`` round-trips doubles exactly)."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def config_header(config: dict, comment: str = "#") -> str:
    """The run configuration as comment lines, for text outputs."""
    body = json.dumps(_jsonable(config), sort_keys=True)
    return f"{comment} config: {body}\n"
