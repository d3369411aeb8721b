"""Experiment runner: configs, seeded multi-run execution, CSV and SVG output.

Every run regenerates the workload from its run seed and pre-draws the click
uniforms per query, so all algorithms inside a run face the same contexts and
the same click outcome whenever they pull the same arm in the same round.
Queries are interleaved round-robin into one global timeline and the
per-query pseudo-regrets are summed along it.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bandit import EXP3, UCB1, TestableUCB
from .bwc import BWC, BwcParams, make_bwc
from .classifier import ConceptClass, OracleClassifier
from .core import (
    ClickStream,
    EnvironmentSpec,
    ResourceLimitError,
    RunRecord,
    UsageError,
    regret_increments,
    stream_rng,
    validate_spec,
)
from .envgen import WorkloadSpec, gen_thm4, gen_thm5i, gen_thm5ii, gen_workload

ALGORITHMS = ("bwc", "ucb1", "ucbo", "exp3")
_PARAMS = {
    "bwc": {"eps", "L", "L_const", "alpha", "t0", "classifier"},
    "ucb1": set(),
    "ucbo": set(),
    "exp3": {"gamma"},
}
# stream tags under a run seed
_TAG_CLICKS, _TAG_ALGO = 10, 11

FINALS_HEADER = ("algorithm", "run", "seed", "final_regret")
CURVES_HEADER = ("algorithm", "checkpoint_round", "mean_cumulative_regret", "stddev")


# ---------------------------------------------------------------------------
# Agents
# ---------------------------------------------------------------------------


class PolicyAgent:
    """Adapts a ``select``/``update`` policy to the ``step(t, x, click)`` protocol.

    ``resets`` lists rounds at whose start the policy's ``reset()`` is
    called; passing the true event rounds to a UCB1 policy gives UCBO.
    """

    def __init__(self, policy, resets: Sequence[int] = ()):
        self.policy = policy
        self.resets = frozenset(resets)

    def step(self, t: int, x_t, click: Callable[[int], float]) -> int:
        if t in self.resets:
            self.policy.reset()
        arm = self.policy.select()
        self.policy.update(arm, click(arm))
        return arm


def _check_params(name: str, params: dict) -> None:
    if name not in _PARAMS:
        raise UsageError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")
    unknown = set(params) - _PARAMS[name]
    if unknown:
        raise UsageError(f"unknown parameters for {name}: {sorted(unknown)}")


#: BWC defaults in experiments: UCB(1, 0) has the confidence radius of the UCB1 baseline
BWC_EXPERIMENT_DEFAULTS = {"alpha": 1.0, "t0": 0}


def bwc_params(spec: EnvironmentSpec, params: dict) -> BwcParams:
    """BWC parameters; ``eps`` defaults to the spec's minimum shift.

    Unless overridden, the per-phase bandit is UCB(1, 0), whose index
    ``mu + sqrt(8 ln t / (1 + n))`` matches the UCB1 baseline, so that
    comparisons measure the restarts rather than a different radius.
    """
    p = {**BWC_EXPERIMENT_DEFAULTS, **params}
    clf = p.pop("classifier", "safecl")
    if clf == "oracle":
        p["classifier"] = lambda s: OracleClassifier(s.oracle)
    elif clf != "safecl":
        raise UsageError(f"unknown classifier {clf!r}; use 'safecl' or 'oracle'")
    p.setdefault("eps", spec.eps_shift)
    return BwcParams(**p)


def make_agent(name: str, params: dict, spec: EnvironmentSpec,
               rng: Optional[np.random.Generator] = None):
    """Build a fresh agent for one query; ``rng`` feeds randomised policies."""
    _check_params(name, params)
    if name == "ucb1":
        return PolicyAgent(UCB1(spec.n_arms))
    if name == "ucbo":
        return PolicyAgent(UCB1(spec.n_arms), resets=spec.event_rounds)
    if name == "exp3":
        if rng is None:
            raise UsageError("exp3 needs a random generator")
        return PolicyAgent(EXP3(spec.n_arms, spec.horizon, rng, params.get("gamma")))
    return make_bwc(spec, bwc_params(spec, params))


def simulate(agent, spec: EnvironmentSpec, clicks: np.ndarray, seed: int = 0) -> RunRecord:
    """Drive ``agent`` over the whole horizon against a boolean click table."""
    rows = clicks.tolist()
    ctx = spec.contexts
    step = agent.step
    if ctx is None:
        chosen = [step(t, None, rows[t - 1].__getitem__) for t in range(1, spec.horizon + 1)]
    else:
        chosen = [step(t, ctx[t - 1], rows[t - 1].__getitem__) for t in range(1, spec.horizon + 1)]
    chosen = np.array(chosen, dtype=np.int64)
    info = {}
    if isinstance(agent, BWC):
        events = set(spec.event_rounds)
        info = {
            "L": agent.L,
            "phases": len(agent.phases),
            "labels": len(agent.labels),
            "false_positives": sum(1 for t in agent.positives if t not in events),
        }
    return RunRecord(chosen, regret_increments(spec, chosen), seed, info)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class AlgorithmConfig:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        _check_params(self.name, self.params)


_LB_VARIANTS = {"thm4", "thm5i", "thm5ii"}


@dataclass
class ExperimentConfig:
    """What to run.

    Exactly one of ``workload`` (a :class:`WorkloadSpec`) and
    ``lower_bound`` (``{"variant": "thm4", "T": ..., "eps": ..., "instance": i}``
    and the like) is set. ``checkpoint_every`` is a round cadence; ``None``
    means 100 evenly spaced checkpoints.
    """

    workload: Optional[WorkloadSpec] = None
    lower_bound: Optional[dict] = None
    algorithms: list = field(default_factory=lambda: [AlgorithmConfig(a) for a in ALGORITHMS])
    runs: int = 10
    seed: int = 0
    out: Optional[str] = None
    checkpoint_every: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        if (self.workload is None) == (self.lower_bound is None):
            raise UsageError("set exactly one of 'workload' and 'lower_bound'")
        if self.runs < 1:
            raise UsageError("runs must be at least 1")
        if self.workers < 1:
            raise UsageError("workers must be at least 1")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise UsageError("checkpoint_every must be a positive round count")
        if not self.algorithms:
            raise UsageError("no algorithms configured")
        self.algorithms = [
            a if isinstance(a, AlgorithmConfig) else AlgorithmConfig(a) if isinstance(a, str)
            else AlgorithmConfig(a["name"], dict(a.get("params", {})))
            for a in self.algorithms
        ]
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise UsageError("each algorithm may appear once")
        if self.lower_bound is not None:
            if self.lower_bound.get("variant") not in _LB_VARIANTS:
                raise UsageError(f"lower_bound variant must be one of {sorted(_LB_VARIANTS)}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if data.get("workload") is not None:
            data["workload"] = WorkloadSpec.from_dict(data["workload"])
        for a in data.get("algorithms", []):
            if isinstance(a, dict) and set(a) - {"name", "params"}:
                raise UsageError(f"unknown algorithm keys: {sorted(set(a) - {'name', 'params'})}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "workload": None if self.workload is None else self.workload.to_dict(),
            "lower_bound": self.lower_bound,
            "algorithms": [{"name": a.name, "params": a.params} for a in self.algorithms],
            "runs": self.runs,
            "seed": self.seed,
            "out": self.out,
            "checkpoint_every": self.checkpoint_every,
            "workers": self.workers,
        }


def lower_bound_specs(sel: dict, seed: int = 0) -> list[EnvironmentSpec]:
    """Resolve a lower-bound selector to the single instance it names."""
    sel = dict(sel)
    variant = sel.pop("variant")
    idx = int(sel.pop("instance", 0))
    if variant == "thm4":
        fam = gen_thm4(int(sel["T"]), float(sel["eps"]))
    elif variant == "thm5i":
        fam = gen_thm5i(int(sel["T"]), int(sel["k"]), int(sel["n"]), float(sel["eps"]),
                        int(sel.get("seed", seed)))
    else:
        cls = ConceptClass(sel.get("kind", "apr"), int(sel.get("d", 1)), float(sel["delta"]))
        fam = gen_thm5ii(int(sel["T"]), int(sel["d_F"]), cls, sel.get("always_negative"),
                         sel.get("grid_step"))
    if not 0 <= idx < len(fam.instances):
        raise UsageError(f"instance {idx} outside 0..{len(fam.instances) - 1}")
    return [fam.instances[idx]]


def config_specs(config: ExperimentConfig, run_seed: int) -> list[EnvironmentSpec]:
    if config.workload is not None:
        ws = WorkloadSpec.from_dict({**config.workload.to_dict(), "seed": run_seed})
        return gen_workload(ws)
    return lower_bound_specs(config.lower_bound, run_seed)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def interleave_order(horizons: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Round-robin global timeline: ``(query, local_round)`` for every global round.

    Global rounds visit the queries cyclically; a query leaves the cycle once
    its horizon is used up.
    """
    q = np.concatenate([np.full(T, i) for i, T in enumerate(horizons)]) if horizons else np.empty(0, int)
    r = np.concatenate([np.arange(1, T + 1) for T in horizons]) if horizons else np.empty(0, int)
    order = np.lexsort((q, r))
    return q[order], r[order]


def checkpoint_rounds(total: int, every: Optional[int] = None, count: int = 100) -> np.ndarray:
    """Increasing checkpoint rounds ending at ``total``."""
    if total < 1:
        return np.empty(0, dtype=np.int64)
    if every is None:
        pts = np.ceil(np.arange(1, count + 1) * total / count).astype(np.int64)
    else:
        pts = np.arange(every, total + 1, every, dtype=np.int64)
        if pts.size == 0 or pts[-1] != total:
            pts = np.append(pts, total)
    return np.unique(pts)


def global_regret(records: Sequence[RunRecord], horizons: Sequence[int]) -> np.ndarray:
    """Cumulative regret along the interleaved timeline."""
    q, r = interleave_order(horizons)
    offs = np.concatenate([[0], np.cumsum(horizons)[:-1]]).astype(np.int64)
    inc = np.concatenate([rec.regret_increment for rec in records])
    return np.cumsum(inc[offs[q] + r - 1])


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FinalRow:
    algorithm: str
    run: int
    seed: int
    final_regret: float


@dataclass(frozen=True)
class CurveRow:
    algorithm: str
    checkpoint_round: int
    mean_cumulative_regret: float
    stddev: float


def _std(values: np.ndarray) -> float:
    values = values[~np.isnan(values)]
    if values.size < 2:
        return 0.0 if values.size else math.nan
    return float(np.std(values, ddof=1))


def _mean(values: np.ndarray) -> float:
    values = values[~np.isnan(values)]
    return float(values.mean()) if values.size else math.nan


@dataclass
class ResultTable:
    """Per-run final regrets, per-checkpoint mean curves and recorded failures.

    Standard deviations are sample deviations (``ddof=1``) over the runs
    that finished; a single finished run reports 0. A failed run keeps its
    row with a NaN final regret.
    """

    finals: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    errors: list = field(default_factory=list)  # (algorithm, run, message)

    @property
    def algorithms(self) -> list[str]:
        seen = []
        for row in self.finals + self.curves:
            if row.algorithm not in seen:
                seen.append(row.algorithm)
        return seen

    def finals_of(self, algorithm: str) -> np.ndarray:
        return np.array([r.final_regret for r in self.finals if r.algorithm == algorithm])

    def summary(self) -> dict:
        """``{algorithm: (mean, stddev)}`` of the final regret."""
        return {a: (_mean(self.finals_of(a)), _std(self.finals_of(a))) for a in self.algorithms}

    def curve(self, algorithm: str) -> tuple[np.ndarray, np.ndarray]:
        rows = [r for r in self.curves if r.algorithm == algorithm]
        return (np.array([r.checkpoint_round for r in rows], dtype=np.int64),
                np.array([r.mean_cumulative_regret for r in rows]))

    # -- CSV ---------------------------------------------------------------

    def finals_csv(self) -> str:
        return _csv_text(FINALS_HEADER, [
            (r.algorithm, str(r.run), str(r.seed), _fmt(r.final_regret)) for r in self.finals
        ])

    def curves_csv(self) -> str:
        return _csv_text(CURVES_HEADER, [
            (r.algorithm, str(r.checkpoint_round), _fmt(r.mean_cumulative_regret), _fmt(r.stddev))
            for r in self.curves
        ])

    @classmethod
    def from_csv(cls, finals_path: Optional[str] = None,
                 curves_path: Optional[str] = None) -> "ResultTable":
        table = cls()
        if finals_path is not None:
            for row in _read_csv(finals_path, FINALS_HEADER):
                table.finals.append(FinalRow(row[0], int(row[1]), int(row[2]), float(row[3])))
        if curves_path is not None:
            for row in _read_csv(curves_path, CURVES_HEADER):
                table.curves.append(CurveRow(row[0], int(row[1]), float(row[2]), float(row[3])))
        return table


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_csv(path: str, header) -> list:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    if not rows or tuple(rows[0]) != tuple(header):
        raise UsageError(f"{path}: expected header {','.join(header)}")
    return rows[1:]


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_csv(table: ResultTable, path: str) -> tuple[str, str]:
    """Write ``finals.csv`` and ``curves.csv`` into directory ``path``."""
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    fp, cp = os.path.join(path, "finals.csv"), os.path.join(path, "curves.csv")
    _write_text(fp, table.finals_csv())
    _write_text(cp, table.curves_csv())
    return fp, cp


def emit_plot(table: ResultTable, path: str) -> list[tuple[str, np.ndarray, np.ndarray]]:
    """Render mean cumulative-regret curves to an SVG file.

    Returns the plotted ``(algorithm, x, y)`` polylines. The SVG carries no
    date and uses a fixed id salt, so equal tables give equal bytes.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "eventful", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        drawn = []
        for alg in table.algorithms:
            x, y = table.curve(alg)
            if x.size == 0:
                continue
            (line,) = ax.plot(x, y, label=alg)
            xy = line.get_xydata()
            drawn.append((alg, np.asarray(xy[:, 0]), np.asarray(xy[:, 1])))
        ax.set_xlabel("round")
        ax.set_ylabel("mean cumulative regret")
        if drawn:
            ax.legend(loc="upper left")
        try:
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        finally:
            plt.close(fig)
    return drawn


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def _algo_key(name: str) -> int:
    return ALGORITHMS.index(name)


def run_once(config: ExperimentConfig, run: int) -> dict:
    """Execute every algorithm for one run; failures are captured, not raised.

    Returns ``{"seed", "horizons", "curves": {alg: cumulative array or None},
    "errors": {alg: message}}``.
    """
    run_seed = config.seed + run
    specs = config_specs(config, run_seed)
    for q, spec in enumerate(specs):
        rep = validate_spec(spec)
        if not rep.ok:
            v = rep.first
            raise UsageError(f"query {q}: {v.invariant} at round {v.round}: {v.message}")
    horizons = [s.horizon for s in specs]
    clicks = [ClickStream(s, stream_rng(run_seed, _TAG_CLICKS, q)).thresholds()
              for q, s in enumerate(specs)]
    out = {"seed": run_seed, "horizons": horizons, "curves": {}, "errors": {}}
    for alg in config.algorithms:
        try:
            recs = []
            for q, spec in enumerate(specs):
                rng = stream_rng(run_seed, _TAG_ALGO, _algo_key(alg.name), q)
                agent = make_agent(alg.name, alg.params, spec, rng)
                recs.append(simulate(agent, spec, clicks[q], run_seed))
            out["curves"][alg.name] = global_regret(recs, horizons)
        except Exception as exc:  # recorded as a gap in the table
            out["curves"][alg.name] = None
            out["errors"][alg.name] = f"{type(exc).__name__}: {exc}"
    return out


def _run_task(args):
    config, run = args
    return run_once(config, run)


def run_experiment(config: ExperimentConfig) -> ResultTable:
    """Run ``config.runs`` paired runs of every configured algorithm.

    Runs may execute on ``config.workers`` processes; results are reduced
    in run order so the table does not depend on scheduling.
    """
    tasks = [(config, r) for r in range(config.runs)]
    if config.workers > 1 and config.runs > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]

    table = ResultTable()
    total = sum(results[0]["horizons"])
    cps = checkpoint_rounds(total, config.checkpoint_every)
    for alg in config.algorithms:
        name = alg.name
        per_run = np.full((config.runs, cps.size), np.nan)
        for r, res in enumerate(results):
            cum = res["curves"].get(name)
            if cum is None:
                table.errors.append((name, r, res["errors"].get(name, "missing")))
                table.finals.append(FinalRow(name, r, res["seed"], math.nan))
                continue
            per_run[r] = cum[cps - 1]
            table.finals.append(FinalRow(name, r, res["seed"], float(cum[-1])))
        for j, c in enumerate(cps):
            col = per_run[:, j]
            table.curves.append(CurveRow(name, int(c), _mean(col), _std(col)))
    return table


# ---------------------------------------------------------------------------
# Oracles and family evaluations
# ---------------------------------------------------------------------------


def _fresh_agent(algorithm, params: dict, spec: EnvironmentSpec, rng=None):
    if callable(algorithm):
        return algorithm()
    if algorithm == "testable_ucb":
        return PolicyAgent(TestableUCB(spec.n_arms, spec.horizon, **params))
    return make_agent(algorithm, params, spec, rng)


def bruteforce_expected_regret(spec: EnvironmentSpec, algorithm="ucb1", params: Optional[dict] = None,
                               max_branches: int = 1_000_000) -> float:
    """Exact expected pseudo-regret by enumerating every click-outcome sequence.

    ``algorithm`` is a name (``ucb1``, ``ucbo``, ``bwc``, ``testable_ucb``)
    or a zero-argument factory returning a fresh ``step``-protocol agent.
    Each round branches on the click of the arm the agent picks, so the agent
    must be deterministic given its history. Branches with zero probability
    are pruned; more than ``max_branches`` explored nodes raises
    :class:`ResourceLimitError`.
    """
    params = dict(params or {})
    if algorithm == "exp3":
        raise UsageError("exp3 is randomised; enumeration covers deterministic policies only")
    agent = _fresh_agent(algorithm, params, spec)
    probs = [spec.probs_at(t).tolist() for t in range(1, spec.horizon + 1)]
    best = [max(p) for p in probs]
    ctx = spec.contexts
    nodes = 0

    def expand(agent, t: int) -> float:
        nonlocal nodes
        if t > spec.horizon:
            return 0.0
        p = probs[t - 1]
        x = None if ctx is None else ctx[t - 1]
        total = 0.0
        for outcome in (1, 0):
            nodes += 1
            if nodes > max_branches:
                raise ResourceLimitError(f"enumeration exceeds {max_branches} branches")
            child = copy.deepcopy(agent)
            arm = child.step(t, x, lambda a, o=outcome: o)
            w = p[arm] if outcome else 1.0 - p[arm]
            if w == 0.0:
                continue
            total += w * (best[t - 1] - p[arm] + expand(child, t + 1))
        return total

    return expand(agent, 1)


def monte_carlo_regret(spec: EnvironmentSpec, algorithm="ucb1", runs: int = 10_000, seed: int = 0,
                       params: Optional[dict] = None, block: int = 50_000) -> tuple[float, float]:
    """Mean final pseudo-regret and its standard error over ``runs`` seeded runs.

    Click uniforms come from one stream in blocks of ``block`` runs, so the
    estimate is reproducible for a given ``(seed, runs)``. ``algorithm``
    takes the same values as in :func:`bruteforce_expected_regret`.
    """
    params = dict(params or {})
    T, n = spec.horizon, spec.n_arms
    clicks_rng = stream_rng(seed, _TAG_CLICKS)
    algo_rng = stream_rng(seed, _TAG_ALGO)
    bounds = [(a - 1, b) for a, b in spec.segment_bounds]
    probs = spec.segment_probs
    finals = np.empty(runs)
    done = 0
    while done < runs:
        m = min(block, runs - done)
        U = clicks_rng.random((m, T, n))
        C = np.empty(U.shape, dtype=bool)
        for (a, b), p in zip(bounds, probs):
            C[:, a:b] = U[:, a:b] < p
        for r in range(m):
            agent = _fresh_agent(algorithm, params, spec, algo_rng)
            finals[done + r] = simulate(agent, spec, C[r]).final_regret
        done += m
    se = float(finals.std(ddof=1) / math.sqrt(runs)) if runs > 1 else math.nan
    return float(finals.mean()), se


def family_regret(instances: Sequence[EnvironmentSpec], algorithm: str, seeds: Sequence[int],
                  params: Optional[dict] = None) -> np.ndarray:
    """Mean final regret per instance over ``seeds`` (shape ``(len(instances),)``)."""
    params = dict(params or {})
    out = np.empty(len(instances))
    for i, spec in enumerate(instances):
        vals = []
        for s in seeds:
            clicks = ClickStream(spec, stream_rng(s, _TAG_CLICKS, i)).thresholds()
            agent = make_agent(algorithm, params, spec, stream_rng(s, _TAG_ALGO, i))
            vals.append(simulate(agent, spec, clicks).final_regret)
        out[i] = float(np.mean(vals))
    return out
