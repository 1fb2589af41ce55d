"""Presentation artifacts: empirical CDFs and the CSV tables for every metric.

All CSVs are UTF-8 with LF line endings, header rows, and deterministic
(sorted) row ordering. Percent columns are rendered with two decimals so they
recompute from the raw counts within 0.05 percentage points; curve and CDF
values keep full float precision for lossless round-trips.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .failure import AvailabilityCurve
from .model import Dataset
from .retrieval import EdgeTraffic, GraphTraffic, OptimisticTraffic


@dataclass(frozen=True)
class CdfSeries:
    """Empirical CDF: sorted distinct values with cumulative fractions ending at 1."""

    label: str
    points: tuple[tuple[float, float], ...]

    def validate(self) -> None:
        if not self.points:
            raise ValueError("CDF series has no points")
        values = [p[0] for p in self.points]
        fracs = [p[1] for p in self.points]
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("CDF values must be strictly increasing")
        if any(b < a for a, b in zip(fracs, fracs[1:])):
            raise ValueError("CDF fractions must be non-decreasing")
        if fracs[-1] != 1.0:
            raise ValueError("CDF must end at fraction 1.0")

    def fraction_at(self, value: float) -> float:
        """Fraction of observations <= value."""
        out = 0.0
        for v, f in self.points:
            if v <= value:
                out = f
            else:
                break
        return out


def cdf(values: Sequence[float], label: str) -> CdfSeries:
    """Empirical CDF over the distinct values of a nonempty list."""
    if len(values) == 0:
        raise ValueError("cannot build a CDF from an empty list")
    ordered = sorted(values)
    total = len(ordered)
    points = []
    seen = 0
    for i, v in enumerate(ordered):
        seen += 1
        if i + 1 == total or ordered[i + 1] != v:
            points.append((float(v), seen / total))
    series = CdfSeries(label=label, points=tuple(points))
    series.validate()
    return series


@dataclass(frozen=True)
class ReplicationDistributions:
    """Per-post replica counts over relays and over distinct ASes."""

    relay_cdf: CdfSeries
    as_cdf: CdfSeries
    mean_relays: float
    mean_ases: float


def replication_distributions(dataset: Dataset) -> ReplicationDistributions:
    """CDFs and means of how many relays / ASes each post is replicated across."""
    as_of = dataset.as_of_relay()
    relay_counts = []
    as_counts = []
    for relays in dataset.replica_map.entries.values():
        relay_counts.append(len(relays))
        as_counts.append(len({as_of[r] for r in relays}))
    return ReplicationDistributions(
        relay_cdf=cdf(relay_counts, "replicas_per_post_relays"),
        as_cdf=cdf(as_counts, "replicas_per_post_ases"),
        mean_relays=sum(relay_counts) / len(relay_counts),
        mean_ases=sum(as_counts) / len(as_counts),
    )


def _writer(path: Path | str):
    fh = Path(path).open("w", encoding="utf-8", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def write_cdf_csv(series: CdfSeries, path: Path | str) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["label", "value", "cumulative_fraction"])
        for v, f in series.points:
            w.writerow([series.label, repr(v), repr(f)])


def read_cdf_csv(path: Path | str) -> CdfSeries:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CDF file")
    label = rows[0]["label"]
    points = tuple((float(r["value"]), float(r["cumulative_fraction"])) for r in rows)
    return CdfSeries(label=label, points=points)


def write_curves_csv(curves: Iterable[AvailabilityCurve], path: Path | str) -> None:
    """Availability curves as ``scenario,X,percent_available``."""
    fh, w = _writer(path)
    with fh:
        w.writerow(["scenario", "X", "percent_available"])
        for curve in curves:
            for x, pct in curve.points:
                w.writerow([curve.label, x, repr(pct)])


def read_curves_csv(path: Path | str) -> list[AvailabilityCurve]:
    by_label: dict[str, list[tuple[int, float]]] = {}
    order: list[str] = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            label = row["scenario"]
            if label not in by_label:
                by_label[label] = []
                order.append(label)
            by_label[label].append((int(row["X"]), float(row["percent_available"])))
    return [AvailabilityCurve(label=l, points=tuple(by_label[l])) for l in order]


def write_savings_csv(rows: Iterable[tuple[int, str, int, int]], path: Path | str) -> None:
    """``N,strategy,replicas_removed,percent_removed`` (percent of all replicas)."""
    fh, w = _writer(path)
    with fh:
        w.writerow(["N", "strategy", "replicas_removed", "percent_removed"])
        for n, strategy, removed, total in rows:
            pct = 100.0 * removed / total if total else 0.0
            w.writerow([n, strategy, removed, f"{pct:.2f}"])


def write_delta_table_csv(rows: Iterable[tuple[str, str, int, float, float]],
                          path: Path | str) -> None:
    """Availability differences vs the original, in percentage points.

    Rows: (scenario, ranking, X, delta at X, mean delta over 1..X).
    """
    fh, w = _writer(path)
    with fh:
        w.writerow(["scenario", "ranking", "X", "delta_pp", "mean_delta_pp"])
        for scenario, ranking, x, delta, mean_delta in rows:
            w.writerow([scenario, ranking, x, f"{delta:.2f}", f"{mean_delta:.2f}"])


def write_optimistic_csv(original: GraphTraffic, rows: Iterable[OptimisticTraffic],
                         path: Path | str) -> None:
    """Optimistic-retrieval table: completeness plus wasted count/size vs the original."""
    fh, w = _writer(path)
    with fh:
        w.writerow(["N", "completeness_mean", "wasted_count", "wasted_pct",
                    "wasted_bytes", "bytes_pct"])
        w.writerow(["original", "", original.wasted_count, "", original.wasted_bytes, ""])
        for r in rows:
            w.writerow([r.n, f"{r.completeness_mean:.2f}", r.wasted_count,
                        f"{r.wasted_count_pct_of_original:.2f}", r.wasted_bytes,
                        f"{r.wasted_bytes_pct_of_original:.2f}"])


def write_edge_traffic_csv(per_edge: Iterable[EdgeTraffic], path: Path | str) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["follower", "followee", "count", "bytes",
                    "optimal_count", "wasted_count", "wasted_bytes"])
        for e in per_edge:
            w.writerow([e.follower, e.followee, e.retrieval_count, e.retrieval_bytes,
                        e.optimal_count, e.wasted_count, e.wasted_bytes])


def write_graph_traffic_csv(totals: GraphTraffic, path: Path | str) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["edges", "retrieval_count", "retrieval_bytes", "optimal_count",
                    "optimal_bytes", "wasted_count", "wasted_bytes",
                    "percent_wasted_count", "percent_wasted_bytes",
                    "mean_retrieval_count_per_edge", "mean_optimal_count_per_edge"])
        w.writerow([totals.edges, totals.retrieval_count, totals.retrieval_bytes,
                    totals.optimal_count, totals.optimal_bytes,
                    totals.wasted_count, totals.wasted_bytes,
                    f"{totals.percent_wasted_count:.2f}", f"{totals.percent_wasted_bytes:.2f}",
                    f"{totals.mean_retrieval_count_per_edge:.1f}",
                    f"{totals.mean_optimal_count_per_edge:.1f}"])


def format_summary(summary: dict) -> list[list]:
    """Header + single row for the dataset summary table (mean with one decimal)."""
    header = ["posts", "users", "replicas", "relays", "ases", "countries", "mean_replication"]
    row = [summary[k] for k in header[:-1]] + [f"{summary['mean_replication']:.1f}"]
    return [header, row]


def write_summary_csv(summary: dict, path: Path | str) -> None:
    fh, w = _writer(path)
    with fh:
        for row in format_summary(summary):
            w.writerow(row)


def write_replica_map_csv(entries: dict, path: Path | str) -> None:
    """Replica map interchange: one ``post_id,relay_id`` row per replica."""
    fh, w = _writer(path)
    with fh:
        w.writerow(["post_id", "relay_id"])
        for pid in sorted(entries):
            for rid in sorted(entries[pid]):
                w.writerow([pid, rid])


def read_replica_map_csv(path: Path | str) -> dict[str, frozenset[str]]:
    acc: dict[str, set[str]] = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            acc.setdefault(row["post_id"], set()).add(row["relay_id"])
    return {pid: frozenset(s) for pid, s in acc.items()}
