"""Botnet community detection on dynamic communication graphs."""

from dynbot.community import (Algorithm, Partition, brute_force_best_partition, detect,
                              label_propagation, louvain, modularity)
from dynbot.evaluate import (aggregate_trials, botnet_community, frame_metrics,
                             window_metrics)
from dynbot.reinforce import (ReinforceConfig, ReinforceMode, build_reinforced,
                              detect_window)
from dynbot.timegraph import (Scheme, SliceGraph, TimeConfig, WindowGraph, build_composite,
                              build_snapshot, ingest_flows)

__version__ = "0.1.0"

__all__ = [
    "Algorithm", "Partition", "ReinforceConfig", "ReinforceMode", "Scheme", "SliceGraph",
    "TimeConfig", "WindowGraph", "aggregate_trials", "botnet_community", "brute_force_best_partition",
    "build_composite", "build_reinforced", "build_snapshot", "detect", "detect_window",
    "frame_metrics", "ingest_flows", "label_propagation", "louvain", "modularity",
    "window_metrics",
]
