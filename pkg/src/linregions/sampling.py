"""Sampling-based region discovery and the enumeration-vs-sampling harness.

``sample_discover`` draws uniform points in a box and collects the distinct
activation patterns it sees, logging a discovery curve on a geometric
checkpoint schedule.  ``compare`` times the exact enumeration, then gives
the sampler exactly that wall-clock budget, several runs with derived
seeds, and reports how much of the partition sampling found.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from io import StringIO

import numpy as np

from .arrangement import Partition, SearchOptions
from .deep import enumerate_network
from .lp import Box
from .network import Network, forward

DEFAULT_RUNS = 5

_BATCH = 8192


@dataclass(frozen=True)
class CurvePoint:
    elapsed: float
    samples_drawn: int
    distinct_regions: int


@dataclass
class DiscoveryCurve:
    """Distinct-regions-found milestones on a geometric sample schedule."""

    points: list[CurvePoint]

    def to_csv(self) -> str:
        out = StringIO()
        out.write("elapsed_seconds,samples_drawn,distinct_regions\n")
        for p in self.points:
            out.write(f"{p.elapsed!r},{p.samples_drawn},{p.distinct_regions}\n")
        return out.getvalue()


@dataclass
class ComparisonReport:
    """Enumeration count versus sampling discovery under a matched budget."""

    enumeration_count: int
    enumeration_time: float
    sampling_mean: float
    sampling_std: float
    sampling_runs: int
    percent_found: float
    config: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "enumeration_count": self.enumeration_count,
                "enumeration_time": self.enumeration_time,
                "sampling_mean": self.sampling_mean,
                "sampling_std": self.sampling_std,
                "sampling_runs": self.sampling_runs,
                "percent_found": self.percent_found,
                "config": self.config,
            },
            indent=2,
        )


def _batch_patterns(net: Network, xs: np.ndarray) -> list[tuple[bytes, ...]]:
    """Per-sample activation patterns as hashable per-layer sign bytes."""
    _, preacts = forward(net, xs)
    sign_blocks = [
        np.where(h >= 0, 1, -1).astype(np.int8)
        for h, layer in zip(preacts, net.layers)
        if layer.activation.sign_based
    ]
    n = xs.shape[0]
    return [tuple(block[i].tobytes() for block in sign_blocks) for i in range(n)]


def sample_discover(
    net: Network,
    box: Box,
    n_samples: int | None = None,
    wall_seconds: float | None = None,
    seed: int = 0,
) -> tuple[set[tuple[bytes, ...]], DiscoveryCurve]:
    """Uniformly sample the box and collect distinct activation patterns.

    Exactly one of ``n_samples`` (deterministic budget) and ``wall_seconds``
    (matched-time budget) must be given.  Sampling uses the counter-based
    Philox stream keyed by ``seed``, so a sample-count budget reproduces
    bit-identically.  Curve checkpoints fall at sample counts 1, 2, 4, 8,
    ... plus the final count.
    """
    if not box.bounded:
        raise ValueError("sampling needs a bounded box")
    if (n_samples is None) == (wall_seconds is None):
        raise ValueError("give exactly one of n_samples or wall_seconds")
    if n_samples is not None and n_samples < 0:
        raise ValueError("n_samples must be >= 0")
    rng = np.random.Generator(np.random.Philox(seed))
    hw = float(box.half_width)
    D = box.dim
    if D != net.input_dim:
        raise ValueError(f"box dimension {D} does not match network input {net.input_dim}")

    seen: set[tuple[bytes, ...]] = set()
    points: list[CurvePoint] = []
    drawn = 0
    next_checkpoint = 1
    t0 = time.perf_counter()

    def budget_left() -> int:
        if n_samples is not None:
            return n_samples - drawn
        if time.perf_counter() - t0 >= wall_seconds:
            return 0
        return _BATCH

    while True:
        left = budget_left()
        if left <= 0:
            break
        chunk = min(left, _BATCH, max(next_checkpoint - drawn, 1))
        xs = rng.uniform(-hw, hw, size=(chunk, D))
        seen.update(_batch_patterns(net, xs))
        drawn += chunk
        while next_checkpoint <= drawn:
            points.append(CurvePoint(time.perf_counter() - t0, drawn, len(seen)))
            next_checkpoint *= 2
    if drawn and (not points or points[-1].samples_drawn != drawn):
        points.append(CurvePoint(time.perf_counter() - t0, drawn, len(seen)))
    return seen, DiscoveryCurve(points)


def _derived_seed(seed: int, run: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(run,)).generate_state(1)[0])


def compare(
    net: Network,
    box: Box,
    runs: int = DEFAULT_RUNS,
    seed: int = 0,
    options: SearchOptions | None = None,
) -> tuple[ComparisonReport, Partition]:
    """Exact enumeration vs sampling at the enumeration's own wall budget.

    Enumeration runs once; sampling then runs ``runs`` times with distinct
    derived seeds, each for the wall time enumeration took.  Every sampled
    pattern must belong to the enumerated partition (the subsumption
    invariant), otherwise the enumeration missed a region and this raises.
    """
    if runs < 1:
        raise ValueError("need at least one sampling run")
    partition = enumerate_network(net, box, options)
    known = {r.pattern.signs_only() for r in partition.regions}
    budget = max(partition.stats.wall_time, 1e-3)
    counts = []
    for run in range(runs):
        found, _ = sample_discover(
            net, box, wall_seconds=budget, seed=_derived_seed(seed, run)
        )
        stray = found - known
        if stray:
            raise RuntimeError(
                f"sampling found {len(stray)} pattern(s) missing from the enumerated "
                f"partition; region enumeration is incomplete"
            )
        counts.append(len(found))
    mean = float(np.mean(counts))
    std = float(np.std(counts))
    report = ComparisonReport(
        enumeration_count=partition.stats.region_count,
        enumeration_time=partition.stats.wall_time,
        sampling_mean=mean,
        sampling_std=std,
        sampling_runs=runs,
        percent_found=100.0 * mean / partition.stats.region_count,
        config={
            "input_dim": net.input_dim,
            "widths": net.widths,
            "activation": net.layers[0].activation.to_dict(),
            "seed": seed,
            "box_half_width": box.half_width,
            "budget": "matched-wall-time",
        },
    )
    return report, partition


def comparison_table_csv(reports: list[ComparisonReport]) -> str:
    """Pivot several reports into rows-by-D, columns-by-width CSV cells.

    Each cell reads ``enumeration / mean+-std / percent``.
    """
    by_key = {}
    dims = set()
    widths = set()
    for r in reports:
        D = r.config["input_dim"]
        w = r.config["widths"][0]
        dims.add(D)
        widths.add(w)
        by_key[(D, w)] = r
    out = StringIO()
    cols = sorted(widths)
    out.write("D," + ",".join(f"K={w}" for w in cols) + "\n")
    for D in sorted(dims):
        cells = []
        for w in cols:
            r = by_key.get((D, w))
            if r is None:
                cells.append("")
            else:
                cells.append(
                    f"{r.enumeration_count} / "
                    f"{r.sampling_mean:.1f}+-{r.sampling_std:.1f} / "
                    f"{r.percent_found:.1f}%"
                )
        out.write(f"{D}," + ",".join(cells) + "\n")
    return out.getvalue()
