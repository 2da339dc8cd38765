"""Outbreak detection: outlier boundary alarms, exceedance maps, clustering."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.cluster import hierarchy

from .forecast import ForecastEnsemble

ALARM_RUN_LENGTH = 3
BOUNDARY_PERCENTILE = 99.0
DEFAULT_N_SMOOTH = 14


@dataclass(frozen=True)
class DetectionResult:
    """Outliers and alarms per region over the forecast window.

    An alarm fires on the day a run of consecutive outliers reaches length
    three; one alarm per run, dated at its third outlier day.
    """

    boundary: np.ndarray  # (N_days, R)
    outliers: np.ndarray  # boolean (N_days, R)
    alarms: tuple  # of (region_index, day_index, run_length)


@dataclass(frozen=True)
class ExceedanceMap:
    gamma: np.ndarray  # (N_days, R); NaN where the boundary is unusable
    mean_exceedance: np.ndarray  # (R,)
    excluded_days: np.ndarray  # (R,) count of days dropped from the mean


def detect(ensemble: ForecastEnsemble, observations, forecast_start=0):
    """Flag observed days above the 99th-percentile forecast boundary.

    `observations` covers the forecast days only, i.e. rows
    forecast_start..end of the ensemble's day axis.
    """
    obs = np.asarray(observations, dtype=float)
    boundary = ensemble.boundary(BOUNDARY_PERCENTILE)[forecast_start:]
    if obs.shape != boundary.shape:
        raise ValueError("observations must cover the forecast window exactly")
    outliers = obs > boundary
    alarms = []
    n_days, n_regions = obs.shape
    for r in range(n_regions):
        run = 0
        for i in range(n_days):
            if outliers[i, r]:
                run += 1
                if run == ALARM_RUN_LENGTH:
                    alarms.append((r, i, run))
            else:
                run = 0
    # Extend recorded run lengths to the full run for reporting.
    alarms = [
        (r, i, _full_run_length(outliers[:, r], i)) for (r, i, _) in alarms
    ]
    return DetectionResult(boundary=boundary, outliers=outliers, alarms=tuple(alarms))


def _full_run_length(col, alarm_day):
    length = ALARM_RUN_LENGTH
    for i in range(alarm_day + 1, col.size):
        if not col[i]:
            break
        length += 1
    return length


def exceedance(ensemble: ForecastEnsemble, observations, start=0, n_smooth=DEFAULT_N_SMOOTH):
    """Exceedance ratios observed / boundary and their n_smooth-day mean.

    Days with a nonpositive boundary (possible when negative noise
    percentiles meet near-zero predictions) are excluded from the mean and
    counted per region.
    """
    obs = np.asarray(observations, dtype=float)
    boundary = ensemble.boundary(BOUNDARY_PERCENTILE)[start : start + n_smooth]
    window = obs[:n_smooth] if obs.shape[0] >= n_smooth else obs
    if window.shape != boundary.shape:
        raise ValueError(f"need {boundary.shape[0]} observation days from the window start")
    usable = boundary > 0
    gamma = np.where(usable, window / np.where(usable, boundary, 1.0), np.nan)
    counts = usable.sum(axis=0)
    mean = np.where(counts > 0, np.nansum(gamma, axis=0) / np.maximum(counts, 1), np.nan)
    return ExceedanceMap(
        gamma=gamma,
        mean_exceedance=mean,
        excluded_days=(~usable).sum(axis=0),
    )


def zscore_features(features):
    """Column-wise Z-scores; zero-variance columns are dropped with a warning."""
    X = np.asarray(features, dtype=float)
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    keep = sd > 0
    if not keep.all():
        warnings.warn(f"dropping {int((~keep).sum())} zero-variance feature column(s)", stacklevel=2)
    return (X[:, keep] - mean[keep]) / sd[keep]


def cluster_regions(features, cut=0.6, linkage="complete", cut_mode="fraction"):
    """Hierarchical clustering of Z-scored region features.

    cut_mode "fraction" cuts the tree at cut * (maximum merge height);
    "quantile" cuts at the given quantile of merge heights.  Returns
    (labels, merges) where merges rows are (left, right, height, size).
    """
    X = np.asarray(features, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("clustering needs at least 2 regions")
    scored = zscore_features(X)
    if scored.shape[1] == 0:
        # All features identical: every merge happens at height zero.
        scored = np.zeros((X.shape[0], 1))
    Z = hierarchy.linkage(scored, method=linkage, metric="euclidean")
    heights = Z[:, 2]
    if cut_mode == "fraction":
        threshold = cut * heights.max()
    elif cut_mode == "quantile":
        threshold = float(np.quantile(heights, cut))
    else:
        raise ValueError(f"unknown cut_mode {cut_mode!r}")
    labels = hierarchy.fcluster(Z, t=threshold, criterion="distance")
    return labels, Z


def write_alarms_csv(result: DetectionResult, region_ids, dates, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region_id", "alarm_date", "run_length"])
        for r, day, run in result.alarms:
            writer.writerow([region_ids[r], dates[day], run])


def write_exceedance_csv(emap: ExceedanceMap, region_ids, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region_id", "mean_exceedance", "excluded_days"])
        for r, rid in enumerate(region_ids):
            writer.writerow([rid, f"{emap.mean_exceedance[r]:.9g}", int(emap.excluded_days[r])])


def write_clusters(labels, merges, region_ids, clusters_path, dendrogram_path):
    with open(clusters_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region_id", "cluster_label"])
        for rid, label in zip(region_ids, labels):
            writer.writerow([rid, int(label)])
    merge_list = [
        {"left": int(left), "right": int(right), "height": float(h)}
        for left, right, h, _ in merges
    ]
    with open(dendrogram_path, "w") as fh:
        json.dump({"merges": merge_list}, fh, indent=2)
