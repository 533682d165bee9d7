"""
Frame-parallel Monte-Carlo BER engine.

A frame function ``fn(snr_db, frame_index) -> dict of int counters`` must
return at least ``bits`` and ``errors``; it draws all of its randomness
from ``RngStream(master_seed, frame_index)`` so results do not depend on
which worker ran it. Frames are evaluated in fixed-size chunks and merged
in frame order, and the stopping rule (``errors >= target`` or
``max_frames``) is checked frame by frame, so the outcome is identical for
any worker count. Stopping at an error target biases BER slightly upward;
that is acceptable for the ordering and slope comparisons made here.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from typing import Callable, Iterable

from scipy.stats import binomtest

from .. import __version__

__all__ = [
    "BerRecord",
    "PointResult",
    "RunManifest",
    "wilson_interval",
    "run_points",
    "to_record",
    "csv_text",
    "write_csv",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("experiment", "snr_db", "bits", "errors", "ber", "ci95_low", "ci95_high",
               "frames", "seed")
CHUNK = 8

FrameFn = Callable[[float, int], dict]


def wilson_interval(errors: int, bits: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if bits == 0:
        return 0.0, 1.0
    ci = binomtest(int(errors), int(bits)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class BerRecord:
    experiment: str
    snr_db: float
    bits: int
    errors: int
    ber: float
    ci95_low: float
    ci95_high: float
    frames: int
    seed: int


@dataclass
class PointResult:
    snr_db: float
    frames: int
    counters: dict


@dataclass(frozen=True)
class RunManifest:
    tool_version: str
    master_seed: int
    config: str
    config_digest: str
    timestamp: str

    @classmethod
    def create(cls, master_seed: int, config: str, digest: str) -> "RunManifest":
        ts = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        return cls(__version__, master_seed, config, digest, ts)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def to_record(label: str, point: PointResult, seed: int, errors_key: str = "errors",
              bits_key: str = "bits") -> BerRecord:
    bits = int(point.counters.get(bits_key, 0))
    errors = int(point.counters.get(errors_key, 0))
    lo, hi = wilson_interval(errors, bits)
    return BerRecord(label, point.snr_db, bits, errors, errors / bits if bits else 0.0, lo, hi,
                     point.frames, seed)


def run_points(frame_fn: FrameFn, snrs: Iterable[float], target_errors: int | None,
               max_frames: int, workers: int = 1, errors_key: str = "errors") -> list[PointResult]:
    """Simulate each SNR point until ``target_errors`` (if given) or ``max_frames``."""
    out = []
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for snr in snrs:
            totals: dict = {}
            frames = 0
            done = False
            while not done and frames < max_frames:
                idx = range(frames, min(frames + CHUNK, max_frames))
                if pool is None:
                    results = [frame_fn(snr, f) for f in idx]
                else:
                    results = list(pool.map(lambda f: frame_fn(snr, f), idx))
                for res in results:
                    for k, v in res.items():
                        totals[k] = totals.get(k, 0) + int(v)
                    frames += 1
                    if target_errors is not None and totals.get(errors_key, 0) >= target_errors:
                        done = True
                        break
            out.append(PointResult(float(snr), frames, totals))
    finally:
        if pool is not None:
            pool.shutdown()
    return out


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        return repr(v)
    return str(v)


def csv_text(records: Iterable[BerRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_csv(records: Iterable[BerRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(records))
