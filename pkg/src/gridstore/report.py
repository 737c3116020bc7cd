"""Run statistics, batch execution across seeds, and policy comparison.

A single run reduces to a ReportBundle of scalar metrics plus small
histograms; batches aggregate bundles across seeds with mean and standard
deviation, isolating per-run failures; comparisons express baselines
against the layer-complete policy as percent reductions.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .engine import EventLog, run
from .model import ValidationError

THRESHOLDS = (30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0)
MOVING_WINDOW = 1000


@dataclass
class ReportBundle:
    """Metrics of one completed run."""

    name: str
    policy: str
    seed: int
    requests: int
    zero_tasks: int
    depth_histogram: dict[int, int]       # digging depth -> count
    bins_above_histogram: dict[int, int]  # bins dug up -> count
    surface_fraction: float               # share retrieved with 0 bins above
    mean_retrieval: float
    median_retrieval: float
    iqr_retrieval: tuple[float, float]
    max_retrieval: float
    moving_avg_max: float                 # max of the moving average
    moving_max_max: float                 # max of the moving maximum
    threshold_exceedance: dict[float, float]  # seconds -> fraction above
    mean_waiting: float
    robot_working_s: float
    robot_delivery_s: float
    robot_gripper_s: float
    first_equivalent: int | None
    first_quasi: int | None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["iqr_retrieval"] = list(self.iqr_retrieval)
        return d


def _moving_stats(values: list[float], window: int) -> tuple[float, float]:
    """Max of the moving average and moving maximum over a trailing window."""
    if not values:
        return 0.0, 0.0
    x = np.asarray(values)
    w = min(window, len(x))
    csum = np.concatenate(([0.0], np.cumsum(x)))
    avg = (csum[w:] - csum[:-w]) / w
    mmax = max(x[i:i + w].max() for i in range(0, len(x) - w + 1, max(1, w // 4)))
    return float(avg.max()), float(mmax)


def summarize(config: ScenarioConfig, log: EventLog) -> ReportBundle:
    served = [r for r in sorted(log.records, key=lambda r: r.request_id)
              if not r.zero_task]
    rts = [r.retrieval_time for r in served]
    depth_hist: dict[int, int] = {}
    above_hist: dict[int, int] = {}
    for r in served:
        depth_hist[r.digging_depth] = depth_hist.get(r.digging_depth, 0) + 1
        above_hist[r.bins_above] = above_hist.get(r.bins_above, 0) + 1
    n = len(served)
    if n == 0:
        raise ValidationError("run served no requests")
    rt = np.asarray(rts)
    q1, q3 = np.percentile(rt, [25, 75])
    mov_avg, mov_max = _moving_stats(rts, MOVING_WINDOW)
    delivery = float(sum(log.robot_delivery))
    gripper = float(sum(log.robot_gripper))
    return ReportBundle(
        name=config.name,
        policy=config.policy,
        seed=config.seed,
        requests=len(log.records),
        zero_tasks=len(log.records) - n,
        depth_histogram=depth_hist,
        bins_above_histogram=above_hist,
        surface_fraction=above_hist.get(0, 0) / n,
        mean_retrieval=float(rt.mean()),
        median_retrieval=float(np.median(rt)),
        iqr_retrieval=(float(q1), float(q3)),
        max_retrieval=float(rt.max()),
        moving_avg_max=mov_avg,
        moving_max_max=mov_max,
        threshold_exceedance={t: float((rt > t).mean()) for t in THRESHOLDS},
        mean_waiting=float(np.mean([r.waiting for r in served])),
        robot_working_s=delivery + gripper,
        robot_delivery_s=delivery,
        robot_gripper_s=gripper,
        first_equivalent=log.first_equivalent,
        first_quasi=log.first_quasi,
    )


def run_report(config: ScenarioConfig) -> ReportBundle:
    return summarize(config, run(config.scenario()))


@dataclass
class BatchResult:
    bundles: list[ReportBundle] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)  # (seed, err)

    def mean_std(self, attr: str) -> tuple[float, float]:
        vals = [getattr(b, attr) for b in self.bundles]
        vals = [v for v in vals if v is not None]
        if not vals:
            return float("nan"), float("nan")
        a = np.asarray(vals, dtype=float)
        return float(a.mean()), float(a.std(ddof=1) if len(a) > 1 else 0.0)


SCALAR_METRICS = (
    "mean_retrieval", "median_retrieval", "max_retrieval", "surface_fraction",
    "mean_waiting", "robot_working_s", "robot_delivery_s", "robot_gripper_s",
    "moving_avg_max", "moving_max_max",
)


def run_batch(config: ScenarioConfig, seeds: list[int]) -> BatchResult:
    """Run one configuration across seeds; a failing seed is recorded and
    does not abort the rest of the batch."""
    result = BatchResult()
    for seed in seeds:
        try:
            result.bundles.append(run_report(config.with_seed(seed)))
        except Exception as e:  # noqa: BLE001 - isolate per-run failures
            result.failures.append((seed, f"{type(e).__name__}: {e}"))
    return result


@dataclass
class Comparison:
    """Percent reduction of the layer-complete policy against a baseline,
    positive when the layer-complete policy is better (smaller)."""

    baseline: str
    metric: str
    lcp_mean: float
    baseline_mean: float
    reduction_percent: float


def _scenario_signature(config: ScenarioConfig) -> tuple:
    d = dataclasses.asdict(config)
    d.pop("policy")
    d.pop("name")
    d["grid"].pop("buffer_stack")  # baselines run without the buffer stack
    return tuple(sorted((k, json.dumps(v, sort_keys=True)) for k, v in d.items()))


def compare_policies(lcp: tuple[ScenarioConfig, BatchResult],
                     baselines: list[tuple[ScenarioConfig, BatchResult]],
                     metrics: tuple[str, ...] = ("mean_retrieval",
                                                 "robot_working_s"),
                     ) -> list[Comparison]:
    """Percent reductions per metric and baseline.  Refuses to compare
    batches whose scenarios differ in anything but the policy."""
    ref_cfg, ref = lcp
    ref_sig = _scenario_signature(ref_cfg)
    out = []
    for cfg, batch in baselines:
        if _scenario_signature(cfg) != ref_sig:
            raise ValidationError(
                f"cannot compare {cfg.policy!r}: scenario parameters differ "
                f"from the {ref_cfg.policy!r} batch")
        for metric in metrics:
            a, _ = ref.mean_std(metric)
            b, _ = batch.mean_std(metric)
            red = float("nan") if b == 0 else (b - a) / b * 100.0
            out.append(Comparison(cfg.policy, metric, a, b, red))
    return out


# -- serialization ----------------------------------------------------------


def bundle_to_json(bundle: ReportBundle) -> str:
    return json.dumps(bundle.to_dict(), sort_keys=True, indent=2)


def bundle_from_json(text: str) -> ReportBundle:
    d = json.loads(text)
    d["depth_histogram"] = {int(k): v for k, v in d["depth_histogram"].items()}
    d["bins_above_histogram"] = {int(k): v
                                 for k, v in d["bins_above_histogram"].items()}
    d["threshold_exceedance"] = {float(k): v
                                 for k, v in d["threshold_exceedance"].items()}
    d["iqr_retrieval"] = tuple(d["iqr_retrieval"])
    return ReportBundle(**d)


def batch_to_csv(result: BatchResult) -> str:
    """One row per run with the scalar metrics, then mean/std footer rows."""
    out = io.StringIO()
    cols = ["name", "policy", "seed", "requests", "zero_tasks",
            "first_equivalent", "first_quasi", *SCALAR_METRICS]
    writer = csv.DictWriter(out, fieldnames=cols)
    writer.writeheader()
    for b in result.bundles:
        d = b.to_dict()
        writer.writerow({c: d[c] for c in cols})
    if result.bundles:
        mean_row = {"name": result.bundles[0].name, "policy": "mean", "seed": ""}
        std_row = {"name": result.bundles[0].name, "policy": "std", "seed": ""}
        for m in SCALAR_METRICS:
            mean, std = result.mean_std(m)
            mean_row[m] = mean
            std_row[m] = std
        writer.writerow(mean_row)
        writer.writerow(std_row)
    return out.getvalue()


def comparisons_to_csv(comparisons: list[Comparison]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["baseline", "metric", "layer_complete_mean",
                     "baseline_mean", "reduction_percent"])
    for c in comparisons:
        writer.writerow([c.baseline, c.metric, c.lcp_mean, c.baseline_mean,
                         c.reduction_percent])
    return out.getvalue()
