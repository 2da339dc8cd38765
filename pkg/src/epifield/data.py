"""Case-count ingestion, smoothing and synthetic data generation."""

from __future__ import annotations

import csv
import datetime as dt
import warnings
from dataclasses import dataclass

import numpy as np

from .graph import RegionGraph
from .likelihood import _batched_covariances
from .model import IncubationParams, QuadratureRule, predict_daily
from .params import ParamVector

DEFAULT_SMOOTHING_WINDOW = 7


@dataclass(frozen=True)
class CaseData:
    """Daily case counts on a contiguous date axis, columns in graph order."""

    dates: tuple  # of datetime.date
    counts: np.ndarray  # (N_d, R)
    region_ids: tuple
    smoothed: bool = False

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        dates = tuple(self.dates)
        if counts.shape != (len(dates), len(self.region_ids)):
            raise ValueError("counts must be (len(dates), len(region_ids))")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        for a, b in zip(dates, dates[1:]):
            if (b - a).days != 1:
                raise ValueError(f"date axis must be contiguous daily; gap at {a} -> {b}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "region_ids", tuple(self.region_ids))

    @property
    def n_days(self):
        return len(self.dates)

    def day_offsets(self, reference_date):
        """Integer day offsets of the date axis from reference_date."""
        return np.array([(d - reference_date).days for d in self.dates], dtype=float)

    def window(self, start, end):
        """Rows with start <= date <= end."""
        idx = [i for i, d in enumerate(self.dates) if start <= d <= end]
        if not idx:
            raise ValueError(f"no dates in [{start}, {end}]")
        return CaseData(
            dates=tuple(self.dates[i] for i in idx),
            counts=self.counts[idx],
            region_ids=self.region_ids,
            smoothed=self.smoothed,
        )


def ingest_cases(path, graph: RegionGraph):
    """Read a date,region_id,count CSV into graph region order.

    Missing (date, region) cells are filled with zero (a warning reports
    how many); duplicates and unknown regions are errors.  Counts must be
    daily new cases, not cumulative.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            date = dt.date.fromisoformat(row["date"])
            count = float(row["count"])
            if count < 0:
                raise ValueError(f"negative count for {row['region_id']} on {date}")
            rows.append((date, row["region_id"], count))
    unknown = sorted({rid for _, rid, _ in rows} - set(graph.region_ids))
    if unknown:
        raise ValueError(f"unknown region ids in {path}: {', '.join(unknown)}")
    if not rows:
        raise ValueError(f"no case rows in {path}")

    first = min(date for date, _, _ in rows)
    last = max(date for date, _, _ in rows)
    dates = tuple(first + dt.timedelta(days=i) for i in range((last - first).days + 1))
    date_index = {d: i for i, d in enumerate(dates)}
    region_index = {rid: r for r, rid in enumerate(graph.region_ids)}
    counts = np.full((len(dates), graph.n_regions), np.nan)
    for date, rid, count in rows:
        i, r = date_index[date], region_index[rid]
        if not np.isnan(counts[i, r]):
            raise ValueError(f"duplicate row for ({date}, {rid})")
        counts[i, r] = count
    n_missing = int(np.isnan(counts).sum())
    if n_missing:
        warnings.warn(f"{n_missing} missing (date, region) cell(s) filled with 0", stacklevel=2)
        counts = np.nan_to_num(counts, nan=0.0)
    return CaseData(dates=dates, counts=counts, region_ids=graph.region_ids)


def smooth(data: CaseData, window=DEFAULT_SMOOTHING_WINDOW):
    """Centered moving average; truncated window mean at the edges."""
    if window % 2 == 0:
        raise ValueError("smoothing window must be odd")
    if window > data.n_days:
        raise ValueError(f"window {window} exceeds series length {data.n_days}")
    half = window // 2
    out = np.empty_like(data.counts)
    for i in range(data.n_days):
        lo, hi = max(0, i - half), min(data.n_days, i + half + 1)
        out[i] = data.counts[lo:hi].mean(axis=0)
    return CaseData(dates=data.dates, counts=out, region_ids=data.region_ids, smoothed=True)


def smooth_counts(counts, window=DEFAULT_SMOOTHING_WINDOW):
    """Array-level variant of smooth() for windows without a date axis."""
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    half = window // 2
    out = np.empty_like(counts)
    for i in range(counts.shape[0]):
        lo, hi = max(0, i - half), min(counts.shape[0], i + half + 1)
        out[i] = counts[lo:hi].mean(axis=0)
    return out


def synthetic_counts(truth: ParamVector, graph: RegionGraph, inc: IncubationParams, day_grid, seed=0, quad_nodes=64):
    """Noisy synthetic observations y = prediction + correlated noise, floored at 0.

    Returns (observations, noise-free predictions), both (N_d, R).
    """
    day_grid = np.asarray(day_grid, dtype=float)
    quad = QuadratureRule.gauss_legendre(quad_nodes)
    y = np.column_stack(
        [predict_daily(truth.region(r), inc, day_grid, quad) for r in range(graph.n_regions)]
    )
    eta = truth.noise
    if eta.tau_phi == 0 and eta.sigma_a == 0 and eta.sigma_m == 0:
        return y.copy(), y
    _, chol, _ = _batched_covariances(graph, eta, y)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(y.shape)
    noise = np.einsum("irs,is->ir", chol, z)
    return np.maximum(y + noise, 0.0), y


def generate_synthetic(truth: ParamVector, graph: RegionGraph, inc: IncubationParams, reference_date, day_grid, seed=0, quad_nodes=64):
    """CaseData wrapper around synthetic_counts with a real date axis."""
    obs, _ = synthetic_counts(truth, graph, inc, day_grid, seed=seed, quad_nodes=quad_nodes)
    dates = tuple(reference_date + dt.timedelta(days=int(d)) for d in np.asarray(day_grid))
    return CaseData(dates=dates, counts=obs, region_ids=graph.region_ids)


def write_cases_csv(data: CaseData, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "region_id", "count"])
        for i, date in enumerate(data.dates):
            for r, rid in enumerate(data.region_ids):
                writer.writerow([date.isoformat(), rid, f"{data.counts[i, r]:.9g}"])
