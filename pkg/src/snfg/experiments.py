"""Encounter ensembles, parameter sweeps, horizontal-advisory search and reports.

Every encounter draws from its own stream derived from (root seed, grid
point, encounter index), so aggregates do not depend on how work is split
across processes.
"""
from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import config as config_mod
from .sim import EncounterSim, OutcomeRecord, encounter_rng, generate_encounter, write_trajectory_csv

WORKERS_ENV = "SNFG_WORKERS"
OUTCOME_COLUMNS = ("seed", "d_min", "nmac", "F", "discarded", "ra1", "ra2", "action1", "action2", "t_ra1", "t_ra2",
                   "failed")


class BatchError(RuntimeError):
    """Too many encounters failed to produce a usable outcome."""


def resolve_workers(workers=None) -> int:
    if workers is None:
        workers = os.environ.get(WORKERS_ENV, 1)
    try:
        workers = int(workers)
    except ValueError:
        raise ValueError(f"worker count must be an integer, got {workers!r}") from None
    if workers < 1:
        raise ValueError("worker count must be >= 1")
    return workers


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def bootstrap_ci(values, seed=0, level=0.95, resamples=2000):
    """Percentile bootstrap CI of the mean; degenerate for fewer than 2 values."""
    x = np.asarray(values, dtype=float)
    if len(x) == 0:
        return (math.nan, math.nan)
    m = float(x.mean())
    if len(x) < 2 or np.all(x == x[0]):
        return (m, m)
    res = stats.bootstrap((x,), np.mean, confidence_level=level, n_resamples=resamples, method="percentile",
                          random_state=np.random.default_rng(seed))
    lo, hi = float(res.confidence_interval.low), float(res.confidence_interval.high)
    return (min(lo, m), max(hi, m))


@dataclass
class RunManifest:
    config: dict
    root_seed: int
    point: int
    encounters: int
    completed: int
    discarded: int
    failed: int
    mean_F: float
    se_F: float
    ci: tuple
    nmac_rate: float
    wall_time: float
    label: dict = field(default_factory=dict)

    def as_items(self):
        items = [(f"config.{k}", self.config[k]) for k in sorted(self.config)]
        items += [(f"label.{k}", v) for k, v in sorted(self.label.items())]
        items += [("root_seed", self.root_seed), ("point", self.point), ("encounters", self.encounters),
                  ("completed", self.completed), ("discarded", self.discarded), ("failed", self.failed),
                  ("mean_F", self.mean_F), ("se_F", self.se_F), ("ci_low", self.ci[0]), ("ci_high", self.ci[1]),
                  ("nmac_rate", self.nmac_rate), ("wall_time", self.wall_time)]
        return items


def summarize(outcomes, values: dict, root_seed: int, point: int = 0, wall_time: float = 0.0,
              label=None) -> RunManifest:
    usable = [o for o in outcomes if o.usable]
    discarded = sum(o.discarded and not o.failed for o in outcomes)
    failed = sum(o.failed for o in outcomes)
    F = np.array([o.F for o in usable], dtype=float)
    mean = float(F.mean()) if len(F) else math.nan
    se = float(F.std(ddof=1) / math.sqrt(len(F))) if len(F) > 1 else 0.0
    nmac = float(np.mean([o.nmac for o in usable])) if usable else math.nan
    return RunManifest(config=dict(values), root_seed=root_seed, point=point, encounters=len(outcomes),
                       completed=len(usable), discarded=discarded, failed=failed, mean_F=mean, se_F=se,
                       ci=bootstrap_ci(F, seed=(root_seed, point)), nmac_rate=nmac, wall_time=wall_time,
                       label=dict(label or {}))


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------

def _encounter_task(args):
    values, root_seed, point, index, keep = args
    cfg = config_mod.build(values)
    rng = encounter_rng(root_seed, point, index)
    t0 = time.perf_counter()
    s0 = generate_encounter(cfg, rng)
    sim = EncounterSim(cfg, s0, rng, seed=(root_seed, point, index), keep_trajectory=keep).run()
    return sim.record(time.perf_counter() - t0)


def _run_tasks(fn, tasks, workers):
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def _check_failures(outcomes, max_failure_fraction):
    failed = sum(o.failed for o in outcomes)
    if outcomes and failed == len(outcomes):
        raise BatchError(f"all {failed} encounters failed; first failure: {outcomes[0].failure}")
    if outcomes and failed / len(outcomes) > max_failure_fraction:
        raise BatchError(f"{failed} of {len(outcomes)} encounters failed "
                         f"(limit {max_failure_fraction:.0%})")


def run_batch(values: dict | None, n: int, root_seed: int, workers=None, point: int = 0,
              keep_trajectories: bool = False, max_failure_fraction: float = 0.5, label=None):
    """Run ``n`` seeded encounters; returns (manifest, outcomes in index order)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    values = config_mod.defaults() if values is None else {**config_mod.defaults(), **values}
    config_mod.build(values)  # validate before spawning work
    t0 = time.perf_counter()
    tasks = [(values, root_seed, point, k, keep_trajectories) for k in range(n)]
    outcomes = _run_tasks(_encounter_task, tasks, resolve_workers(workers))
    _check_failures(outcomes, max_failure_fraction)
    return summarize(outcomes, values, root_seed, point, time.perf_counter() - t0, label), outcomes


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    path: str
    grid: tuple
    encounters: int = 200
    root_seed: int = 0
    base: tuple = ()      # (key, value) pairs applied before the swept key

    def __post_init__(self):
        if self.path not in config_mod.SCHEMA:
            raise config_mod.ConfigError(f"unknown parameter path {self.path!r}")
        if not self.grid:
            raise ValueError("sweep grid must not be empty")
        if self.encounters < 1:
            raise ValueError("encounters per point must be >= 1")


@dataclass
class SweepResult:
    spec: SweepSpec
    manifests: list
    outcomes: list        # per point
    spearman: tuple       # (rho, p) over usable encounters

    def rows(self):
        for v, m in zip(self.spec.grid, self.manifests):
            yield (v, m.mean_F, m.ci[0], m.ci[1], m.se_F, m.completed, m.discarded, m.failed)

    @property
    def means(self):
        return [m.mean_F for m in self.manifests]


SWEEP_COLUMNS = ("value", "mean_F", "ci_low", "ci_high", "se_F", "completed", "discarded", "failed")


def spearman_trend(grid, outcomes_per_point):
    xs, ys = [], []
    for v, outs in zip(grid, outcomes_per_point):
        for o in outs:
            if o.usable:
                xs.append(float(v))
                ys.append(o.F)
    if len(set(xs)) < 2:
        return (math.nan, math.nan)
    r = stats.spearmanr(xs, ys)
    return float(r.statistic), float(r.pvalue)


def run_sweep(spec: SweepSpec, values: dict | None = None, workers=None, max_failure_fraction: float = 0.5):
    """One batch per grid point; point ``p`` uses seed streams (root, p, k)."""
    base = config_mod.defaults() if values is None else {**config_mod.defaults(), **values}
    base = config_mod.with_overrides(base, **dict(spec.base))
    point_values = [config_mod.with_overrides(base, **{spec.path: v}) for v in spec.grid]
    for pv in point_values:
        config_mod.build(pv)
    t0 = time.perf_counter()
    tasks = [(pv, spec.root_seed, p, k, False) for p, pv in enumerate(point_values) for k in range(spec.encounters)]
    flat = _run_tasks(_encounter_task, tasks, resolve_workers(workers))
    wall = time.perf_counter() - t0
    per_point = [flat[p * spec.encounters:(p + 1) * spec.encounters] for p in range(len(spec.grid))]
    manifests = []
    for p, (pv, outs) in enumerate(zip(point_values, per_point)):
        _check_failures(outs, max_failure_fraction)
        manifests.append(summarize(outs, pv, spec.root_seed, p, wall / len(spec.grid),
                                   label={"sweep_path": spec.path, "sweep_value": spec.grid[p]}))
    return SweepResult(spec, manifests, per_point, spearman_trend(spec.grid, per_point))


# ---------------------------------------------------------------------------
# Horizontal advisories
# ---------------------------------------------------------------------------

@dataclass
class HorizontalChoice:
    value: float
    means: dict           # candidate heading rate -> mean F over usable rollouts
    counts: dict          # candidate -> usable rollouts


def candidate_order(rates):
    """Tie-break order: maintain heading, then smaller turns, left before right."""
    return sorted(rates, key=lambda r: (abs(r), -r))


def horizontal_ra_search(sim: EncounterSim, i: int, cur, ra, w_tcas, rollouts: int, rng,
                         max_failure_fraction: float = 0.5) -> HorizontalChoice:
    """Pick aircraft i's horizontal advisory by counterfactual completions.

    Rollout r of every candidate starts from the same stream (common random
    numbers), so candidates are compared on matched futures.
    """
    if sim.cfg.mode != "horizontal":
        raise ValueError("horizontal search needs mode = horizontal")
    if rollouts < 1:
        raise ValueError("rollouts must be >= 1")
    seeds = rng.integers(0, 2**63, size=rollouts)
    means, counts = {}, {}
    for h in candidate_order(sim.cfg.heading_rates):
        F, failed = [], 0
        for sd in seeds:
            c = sim.clone(np.random.default_rng(int(sd)))
            c.stop_on_discard = False
            c.resume_with_hra(i, cur, ra, w_tcas, h)
            if c.failure is not None:
                failed += 1
            else:
                F.append(c.F)
        if failed / rollouts > max_failure_fraction:
            raise BatchError(f"horizontal search: {failed} of {rollouts} rollouts failed for candidate {h}")
        means[h] = float(np.mean(F))
        counts[h] = len(F)
    best = None
    for h in candidate_order(sim.cfg.heading_rates):
        if best is None or means[h] > means[best]:
            best = h
    return HorizontalChoice(best, means, counts)


def search_policy(rollouts: int, rng, log=None):
    """``hra_policy`` callable for :class:`EncounterSim` running the exhaustive search."""
    def policy(sim, i, cur, ra, w_tcas):
        choice = horizontal_ra_search(sim, i, cur, ra, w_tcas, rollouts, rng)
        if log is not None:
            log.append(choice)
        return choice.value
    return policy


def _horizontal_task(args):
    values, root_seed, index, rollouts, search = args
    cfg = config_mod.build(values)
    rng = encounter_rng(root_seed, 0, index)
    policy = None
    if search:
        policy = search_policy(rollouts, np.random.default_rng(np.random.SeedSequence([root_seed, 0, index, 1])))
    t0 = time.perf_counter()
    s0 = generate_encounter(cfg, rng)
    sim = EncounterSim(cfg, s0, rng, seed=(root_seed, 0, index), hra_policy=policy).run()
    return sim.record(time.perf_counter() - t0)


@dataclass
class HorizontalComparison:
    search: list
    baseline: list
    manifest_search: RunManifest
    manifest_baseline: RunManifest

    def paired(self):
        pairs = [(a.F, b.F) for a, b in zip(self.search, self.baseline) if a.usable and b.usable]
        return np.array(pairs, dtype=float).reshape(-1, 2)

    def paired_test(self):
        """One-sided paired t-test of search > baseline: (mean difference, p)."""
        d = self.paired()
        diff = d[:, 0] - d[:, 1]
        if len(diff) < 2 or np.all(diff == diff[0]):
            return float(diff.mean()) if len(diff) else math.nan, (0.0 if len(diff) and diff[0] > 0 else 1.0)
        r = stats.ttest_1samp(diff, 0.0, alternative="greater")
        return float(diff.mean()), float(r.pvalue)

    def quantile_dominance(self, levels=(0.2, 0.4, 0.6, 0.8, 1.0)):
        """Per quantile level: (search quantile, baseline quantile)."""
        s = [o.F for o in self.search if o.usable]
        b = [o.F for o in self.baseline if o.usable]
        return [(float(np.quantile(s, q)), float(np.quantile(b, q))) for q in levels]


def run_horizontal(values: dict | None, n: int, root_seed: int, rollouts: int | None = None, workers=None,
                   max_failure_fraction: float = 0.5) -> HorizontalComparison:
    """Search policy against all-maintain on the same ``n`` encounters."""
    values = config_mod.defaults() if values is None else {**config_mod.defaults(), **values}
    values = config_mod.with_overrides(values, **{"sim.mode": "horizontal"})
    rollouts = values["horizontal.rollouts"] if rollouts is None else rollouts
    config_mod.build(values)
    workers = resolve_workers(workers)
    out = {}
    for search in (True, False):
        t0 = time.perf_counter()
        tasks = [(values, root_seed, k, rollouts, search) for k in range(n)]
        outs = _run_tasks(_horizontal_task, tasks, workers)
        _check_failures(outs, max_failure_fraction)
        out[search] = (outs, summarize(outs, values, root_seed, 0, time.perf_counter() - t0,
                                       label={"policy": "search" if search else "maintain",
                                              "rollouts": rollouts}))
    return HorizontalComparison(out[True][0], out[False][0], out[True][1], out[False][1])


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, tuple):
        return ";".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def outcome_row(o: OutcomeRecord):
    seed = "-".join(str(s) for s in o.seed) if isinstance(o.seed, tuple) else o.seed
    return [_fmt(x) for x in (seed, o.d_min, o.nmac, o.F, o.discarded, o.ra[0], o.ra[1], o.action[0],
                              o.action[1], o.t_ra[0], o.t_ra[1], o.failed)]


def histogram(values, bins=10, edges=None):
    """Bin edges and counts; the last bin is closed."""
    x = np.asarray(values, dtype=float)
    if edges is None:
        if len(x) == 0:
            return np.array([0.0, 1.0]), np.array([0])
        edges = np.histogram_bin_edges(x, bins=bins)
    counts, edges = np.histogram(x, bins=edges)
    return edges, counts


def emit_report(manifest: RunManifest | None, outcomes, out_dir, prefix: str = "", hist_bins: int | None = 10,
                hist_edges=None, trajectories: bool = False) -> dict:
    """Write outcomes CSV, manifest key/value text and F histogram; returns paths."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out_dir}: {e}") from e
    paths = {"outcomes": os.path.join(out_dir, f"{prefix}outcomes.csv")}
    with open(paths["outcomes"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(OUTCOME_COLUMNS)
        for o in outcomes:
            w.writerow(outcome_row(o))
    if manifest is not None:
        paths["manifest"] = os.path.join(out_dir, f"{prefix}manifest.txt")
        with open(paths["manifest"], "w") as fh:
            for k, v in manifest.as_items():
                fh.write(f"{k} = {_fmt(v)}\n")
    if hist_bins or hist_edges is not None:
        edges, counts = histogram([o.F for o in outcomes], hist_bins or 10, hist_edges)
        paths["histogram"] = os.path.join(out_dir, f"{prefix}histogram.csv")
        with open(paths["histogram"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("bin_low", "bin_high", "count"))
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow((repr(float(lo)), repr(float(hi)), int(c)))
    if trajectories:
        tdir = os.path.join(out_dir, f"{prefix}trajectories")
        os.makedirs(tdir, exist_ok=True)
        for n, o in enumerate(outcomes):
            if o.trajectory is not None:
                write_trajectory_csv(o, os.path.join(tdir, f"encounter_{n:05d}.csv"))
        paths["trajectories"] = tdir
    return paths


def write_sweep_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for row in result.rows():
            w.writerow([_fmt(x) for x in row])
