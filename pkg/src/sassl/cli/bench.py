"""Augmentation-only throughput measurement."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..augpipe import AugPolicy, make_views
from ..nst.augment import StyleTransfer
from ..rng import RngStream
from ..stylebank import StyleBank

WARMUP_RUNS = 3


def relative_change(baseline: float, candidate: float) -> float:
    """Throughput lost by the candidate, as a percentage of the baseline."""
    if baseline <= 0:
        raise ValueError("baseline throughput must be positive")
    return (baseline - candidate) / baseline * 100.0


@dataclass(frozen=True)
class BenchReport:
    label: str
    images_per_second: float
    baseline_images_per_second: float
    relative_change_percent: float
    runs: int
    batch_size: int
    image_size: int
    workers: int

    @classmethod
    def from_rates(cls, label: str, candidate: float, baseline: float, runs: int,
                   batch_size: int, image_size: int, workers: int = 1) -> "BenchReport":
        return cls(label, candidate, baseline, relative_change(baseline, candidate),
                   runs, batch_size, image_size, workers)

    def to_dict(self) -> dict:
        return asdict(self)


def augment_batch(batch: np.ndarray, policy: AugPolicy, rng: RngStream, styler: StyleTransfer | None,
                  bank: StyleBank | None, workers: int = 1, pool: ThreadPoolExecutor | None = None):
    """Both views of ``batch``, split into ``workers`` contiguous shards."""
    if workers <= 1 or pool is None:
        return make_views(batch, policy, rng, styler, bank)
    shards = np.array_split(np.arange(len(batch)), workers)
    futures = [pool.submit(make_views, batch[idx], policy, rng, styler, bank, idx)
               for idx in shards if len(idx)]
    parts = [f.result() for f in futures]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def measure(batch: np.ndarray, policy: AugPolicy, runs: int, styler: StyleTransfer | None = None,
            bank: StyleBank | None = None, workers: int = 1, seed: int = 0,
            clock=time.perf_counter) -> float:
    """Mean images/second over ``runs`` timed batches after the warmup batches."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    rng = RngStream(seed).child("bench")
    rates = []
    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        for i in range(WARMUP_RUNS + runs):
            start = clock()
            augment_batch(batch, policy, rng.child(i), styler, bank, workers, pool)
            elapsed = clock() - start
            if i >= WARMUP_RUNS:
                rates.append(len(batch) / max(elapsed, 1e-12))
    return float(np.mean(rates))


def run_bench(batch: np.ndarray, policy: AugPolicy, mode: str, runs: int,
              styler: StyleTransfer | None, bank: StyleBank | None, workers: int = 1,
              seed: int = 0) -> BenchReport:
    """Candidate pipeline (``mode``) against the SASSL-free baseline on the same batch."""
    if mode not in ("default", "sassl"):
        raise ValueError(f"mode must be 'default' or 'sassl', got {mode!r}")
    baseline_policy = policy.without_sassl()
    baseline = measure(batch, baseline_policy, runs, None, None, workers, seed)
    if mode == "sassl":
        if policy.sassl is None:
            raise ValueError("sassl mode needs a policy with style augmentation enabled")
        candidate = measure(batch, policy, runs, styler, bank, workers, seed)
    else:
        candidate = measure(batch, baseline_policy, runs, None, None, workers, seed)
    return BenchReport.from_rates(mode, candidate, baseline, runs, len(batch), batch.shape[-1], workers)
