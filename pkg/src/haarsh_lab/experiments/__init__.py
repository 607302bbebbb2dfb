"""Config-driven experiments: parse a config, run a mode, emit records."""
from __future__ import annotations

import time
from typing import Optional

from ..seeding import seed_fanout
from .config import MODES, ConfigError, ExperimentConfig, load_config, parse_config
from .modes import RUNNERS, estimate_seconds, omega_from_seed, resolve_workers
from .records import Check, Curve, ResultRecord, emit, read_csv, read_jsonl


def run(config: ExperimentConfig, workers: Optional[int] = None,
        seed: Optional[int] = None) -> ResultRecord:
    """Run one experiment. ``seed`` overrides the config's master seed."""
    if seed is not None:
        config = config.with_overrides(master_seed=seed)
    est = estimate_seconds(config)
    if est > 60.0 * config.max_minutes:
        raise ConfigError(f"estimated {est / 60:.1f} min exceeds max_minutes = {config.max_minutes:g}",
                          key="max_minutes")
    t0 = time.perf_counter()
    cols, rows, summary, checks, curves = RUNNERS[config.mode](config, resolve_workers(config.workers, workers))
    return ResultRecord(config.mode, config.fingerprint(), config.master_seed, cols, rows, summary,
                        checks, curves, time.perf_counter() - t0)


__all__ = ["MODES", "ConfigError", "ExperimentConfig", "ResultRecord", "Check", "Curve", "run", "emit",
           "parse_config", "load_config", "read_csv", "read_jsonl", "seed_fanout", "omega_from_seed"]
