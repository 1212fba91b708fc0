"""Detection quality against planted ground truth.

The botnet community of a window is picked with the ground truth (the
community overlapping the true bots most), so these numbers measure how well
a partition *can* isolate the botnet, not an unsupervised selector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from dynbot.community import Partition


@dataclass(frozen=True)
class WindowResult:
    window_index: int
    detected: frozenset
    tp: int
    fp: int
    fn: int

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn)

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0


@dataclass(frozen=True)
class FrameResult:
    detected: frozenset
    tp: int
    fp: int
    fn: int

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn)

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0


def botnet_community(p: Partition, truth_window: Iterable[int]) -> set[int]:
    """Community with the largest overlap with the true bots.

    Ties go to the smaller community, then to the lower community id.
    """
    truth = np.fromiter(set(truth_window), dtype=np.int64)
    if len(truth) == 0:
        raise ValueError("empty ground truth")
    inside = np.isin(truth, p.vertices)
    k = p.n_communities
    overlap = np.bincount(p.labels_for(truth[inside]), minlength=k)
    size = np.bincount(p.labels, minlength=k)
    # lexsort: last key is primary
    best = np.lexsort((np.arange(k), size, -overlap))[0]
    return set(p.vertices[p.labels == best].tolist())


def _counts(detected: set, truth: set) -> tuple[int, int, int]:
    tp = len(detected & truth)
    return tp, len(detected) - tp, len(truth) - tp


def window_metrics(detected: Iterable[int], truth_window: Iterable[int],
                   window_index: int = 0) -> WindowResult:
    detected, truth = set(detected), set(truth_window)
    if not truth:
        raise ValueError("empty ground truth")
    return WindowResult(window_index, frozenset(detected), *_counts(detected, truth))


def frame_metrics(window_results: Sequence[WindowResult], frame_truth: Iterable[int]) -> FrameResult:
    """Union the per-window detections and score them against the frame's bots."""
    if not window_results:
        raise ValueError("need at least one window result")
    detected = set().union(*(r.detected for r in window_results))
    truth = set(frame_truth)
    if not truth:
        raise ValueError("empty ground truth")
    return FrameResult(frozenset(detected), *_counts(detected, truth))


def aggregate_trials(values: Sequence[float], confidence: float = 0.95) -> tuple[float, float]:
    """Mean and Student-t confidence half-width."""
    x = np.asarray(values, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise ValueError(f"need at least 2 trials, got {n}")
    s = x.std(ddof=1)
    t = stats.t.ppf(0.5 + confidence / 2, n - 1)
    half = float(t * s / math.sqrt(n))
    return float(x.mean()), half
