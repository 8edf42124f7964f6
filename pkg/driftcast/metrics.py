"""Prometheus collectors for the online harness and the CLI."""
import os

from loguru import logger
from prometheus_client import REGISTRY, Counter, Histogram, write_to_textfile

ORACLE_READS: Counter = Counter(
    "driftcast_oracle_reads_total",
    "Out-of-clock time indices read through oracle-mode streams",
)
LEAKAGE_VIOLATIONS: Counter = Counter(
    "driftcast_leakage_violations_total",
    "Out-of-clock reads rejected by guarded streams",
)
ONLINE_STEPS: Counter = Counter(
    "driftcast_online_steps_total",
    "Online time steps processed",
    ["strategy"],
)
ONLINE_STEP_SECONDS: Histogram = Histogram(
    "driftcast_online_step_seconds",
    "Wall time of one online step (feedback plus forecast)",
    ["strategy"],
    buckets=(0.0005, 0.001, 0.0025, 0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 1.0),
)
DIVERGED: Counter = Counter(
    "driftcast_diverged_total",
    "Training phases stopped on a non-finite loss",
    ["phase"],
)


def export_metrics(out_dir: str) -> str:
    """Dump the default registry in text exposition format."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "metrics.prom")
    write_to_textfile(path, REGISTRY)
    logger.debug(f"Metrics written to {path}")
    return path
