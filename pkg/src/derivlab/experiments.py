"""Experiment runners: timeout sweep, forced bloom false positives, batcher outage."""

from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .baseline import derive_range_baseline
from .cost import CostLedger, CostWeights, DEFAULT_WEIGHTS, diff_percent
from .errors import EquivalenceViolation, OutOfRange, PropertyViolation
from .optimized import run_range
from .world import Chain, ScenarioConfig, build_chain, l1_origin_of_l2, total_txs

DEFAULT_TIMEOUTS = (10, 50, 100, 200, 500)
DEFAULT_OUTAGE_BLOCKS = 750
DEFAULT_OUTAGE_START = 200
TAIL_RANGES = 4
METRICS = ("total", "derivation", "receipt")
ELEVATION = 1.25


@dataclass(frozen=True)
class Row:
    label: int
    l1_blocks: int
    l1_txs: int
    baseline: CostLedger
    optimized: CostLedger

    def diff(self, metric: str) -> float:
        return diff_percent(getattr(self.baseline, metric), getattr(self.optimized, metric))


@dataclass
class ExperimentResult:
    name: str
    label_column: str
    rows: list[Row] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = [self.label_column, "l1_blocks", "l1_txs"]
        for m in METRICS:
            header += [f"baseline_{m}", f"optimized_{m}", f"diff_{m}"]
        w.writerow(header)
        for r in self.rows:
            line = [r.label, r.l1_blocks, r.l1_txs]
            for m in METRICS:
                line += [getattr(r.baseline, m), getattr(r.optimized, m), f"{r.diff(m):.2f}"]
            w.writerow(line)
        return buf.getvalue()

    def series(self, pipeline: str, metric: str = "total") -> list[tuple[int, int]]:
        return [(r.label, getattr(getattr(r, pipeline), metric)) for r in self.rows]


def range_bounds(chain: Chain, cfg: ScenarioConfig, index: int) -> tuple[int, int]:
    """L1 interval of the ``index``-th fixed-size L2 range.

    Anchored at the L1 origin of its first L2 block and ending at the block
    where its last L2 block's batch landed.
    """
    first = index * cfg.range_l2_blocks
    last = first + cfg.range_l2_blocks - 1
    if index < 0 or last >= len(chain.l2_inclusion):
        raise OutOfRange(f"range {index} needs L2 block {last}; chain has {len(chain.l2_inclusion)}")
    return l1_origin_of_l2(cfg, first), chain.l2_inclusion[last]


def measure_range(chain: Chain, cfg: ScenarioConfig, index: int,
                  weights: CostWeights = DEFAULT_WEIGHTS) -> Row:
    start, end = range_bounds(chain, cfg, index)
    base = derive_range_baseline(chain, start, end, cfg, weights=weights)
    opt = run_range(chain, start, end, cfg, weights=weights)
    if base.serialize() != opt.output.serialize():
        raise EquivalenceViolation(f"range {index} [{start}, {end}]: outputs differ")
    return Row(index, end - start, total_txs(chain, start, end), base.ledger, opt.ledger)


def _sweep(name: str, base: ScenarioConfig, timeouts: Sequence[int], forced: bool,
           weights: CostWeights) -> ExperimentResult:
    if not timeouts:
        raise ValueError("need at least one channel timeout")
    res = ExperimentResult(name, "channel_s")
    for t in timeouts:
        cfg = replace(base, channel_timeout_s=t, forced_bloom_fp=forced, outage_windows=())
        row = measure_range(build_chain(cfg), cfg, 0, weights)
        res.rows.append(replace(row, label=t))
    return res


def run_experiment_1(base: ScenarioConfig, timeouts: Sequence[int] = DEFAULT_TIMEOUTS,
                     weights: CostWeights = DEFAULT_WEIGHTS) -> ExperimentResult:
    return _sweep("exp1", base, timeouts, False, weights)


def run_experiment_2(base: ScenarioConfig, timeouts: Sequence[int] = DEFAULT_TIMEOUTS,
                     weights: CostWeights = DEFAULT_WEIGHTS) -> ExperimentResult:
    return _sweep("exp2", base, timeouts, True, weights)


@dataclass
class OutageResult(ExperimentResult):
    outage_start: int = DEFAULT_OUTAGE_START
    outage_blocks: int = 0
    pre_outage_ranges: int = 0

    def peak_index(self) -> int:
        return max(range(len(self.rows)), key=lambda i: self.rows[i].baseline.total)

    def peak_ratio(self) -> float:
        r = self.rows[self.peak_index()]
        return r.optimized.total / r.baseline.total

    def elevated_ranges(self, pipeline: str = "baseline") -> list[int]:
        """Labels of post-outage ranges costing >= 25% above the pre-outage maximum."""
        pre = [getattr(r, pipeline).total for r in self.rows[:self.pre_outage_ranges]]
        if not pre:
            return []
        limit = ELEVATION * max(pre)
        return [r.label for r in self.rows[self.pre_outage_ranges:] if getattr(r, pipeline).total >= limit]

    def plot_data(self, pipeline: str) -> str:
        return "".join(f"{i},{v}\n" for i, v in self.series(pipeline))


def run_experiment_3(base: ScenarioConfig, outage_blocks: int = DEFAULT_OUTAGE_BLOCKS, *,
                     outage_start: int = DEFAULT_OUTAGE_START,
                     weights: CostWeights = DEFAULT_WEIGHTS) -> OutageResult:
    if outage_blocks < 0:
        raise ValueError("outage_blocks must be >= 0")
    windows = ((outage_start, outage_blocks),) if outage_blocks else ()
    cfg = replace(base, outage_windows=windows, forced_bloom_fp=False)
    span = (outage_start + outage_blocks) * cfg.l1_block_time_s / cfg.l2_block_time_s
    n_ranges = math.ceil(span / cfg.range_l2_blocks) + TAIL_RANGES
    chain = build_chain(cfg, l2_blocks=n_ranges * cfg.range_l2_blocks)
    res = OutageResult("exp3", "range_index", outage_start=outage_start, outage_blocks=outage_blocks)
    for i in range(n_ranges):
        row = measure_range(chain, cfg, i, weights)
        res.rows.append(row)
        start, end = range_bounds(chain, cfg, i)
        if end < outage_start:
            res.pre_outage_ranges = i + 1
    return res


# --- property checks ------------------------------------------------------------


def check_experiment_1(res: ExperimentResult) -> None:
    d = [r.diff("derivation") for r in res.rows]
    if any(b <= a for a, b in zip(d, d[1:])):
        raise PropertyViolation(f"derivation diff not strictly increasing: {d}")
    if res.rows and d[-1] < 50.0:
        raise PropertyViolation(f"derivation diff at largest timeout {d[-1]:.2f}% < 50%")


def check_experiment_2(res: ExperimentResult) -> None:
    for r in res.rows:
        if r.baseline.receipt != r.optimized.receipt:
            raise PropertyViolation(f"timeout {r.label}: receipt counters differ under forced FP")
        if r.diff("total") < 0:
            raise PropertyViolation(f"timeout {r.label}: optimized total exceeds baseline")
    if res.rows and max(r.diff("total") for r in res.rows) <= 0:
        raise PropertyViolation("prefeeding saved nothing in any row")


def check_experiment_3(res: OutageResult) -> None:
    if res.outage_blocks == 0:
        return
    if res.peak_ratio() > 0.65:
        raise PropertyViolation(f"peak optimized/baseline ratio {res.peak_ratio():.3f} > 0.65")
    for p in ("baseline", "optimized"):
        if len(res.elevated_ranges(p)) < 2:
            raise PropertyViolation(f"{p} elevated for fewer than 2 post-outage ranges")


def write_result(res: ExperimentResult, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{res.name}.csv"]
    paths[0].write_text(res.to_csv())
    if isinstance(res, OutageResult):
        for p in ("baseline", "optimized"):
            path = out / f"{res.name}_{p}.dat"
            path.write_text(res.plot_data(p))
            paths.append(path)
    return paths


# --- equivalence sweep ----------------------------------------------------------


def equivalence_scenario(seed: int) -> ScenarioConfig:
    """Small seeded scenario (well under 400 L1 blocks) with no batcher change."""
    rng = random.Random(f"equiv/{seed}")
    outage = ()
    if rng.random() < 0.2:
        outage = ((rng.randint(5, 30), rng.randint(1, 40)),)
    return ScenarioConfig(
        seed=seed,
        range_l2_blocks=rng.choice((30, 60, 120)),
        channel_timeout_s=rng.choice((10, 24, 50, 100, 200)),
        noise_txs_per_block=rng.randint(0, 12),
        noise_logs_per_tx=rng.randint(0, 3),
        outage_windows=outage,
        post_outage_cap=rng.randint(1, 4),
        forced_bloom_fp=rng.random() < 0.2,
    )


def check_equivalence(seed: int) -> bool:
    """Derive the scenario's first range both ways; True iff serializations match."""
    cfg = equivalence_scenario(seed)
    chain = build_chain(cfg)
    start, end = range_bounds(chain, cfg, 0)
    base = derive_range_baseline(chain, start, end, cfg)
    opt = run_range(chain, start, end, cfg)
    return opt.mode == "optimized" and base.serialize() == opt.output.serialize()
