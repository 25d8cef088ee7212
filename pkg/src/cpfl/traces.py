"""Device capability traces and the per-round timing model."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, TraceParseError

HEADER = ["device_id", "network_bytes_per_sec", "compute_sec_per_batch"]

# Envelope of the published mobile-device traces.
MIN_NETWORK_BPS = 130_000.0
MAX_NETWORK_BPS = 26_000_000.0
MIN_SEC_PER_BATCH = 0.9
MAX_SEC_PER_BATCH = 11.9


@dataclass(frozen=True)
class DeviceProfile:
    device_id: str
    compute_sec_per_batch: float
    network_bytes_per_sec: float

    def __post_init__(self) -> None:
        if not self.compute_sec_per_batch > 0 or not math.isfinite(self.compute_sec_per_batch):
            raise InvalidInputError(f"{self.device_id}: compute_sec_per_batch must be > 0")
        if not self.network_bytes_per_sec > 0 or not math.isfinite(self.network_bytes_per_sec):
            raise InvalidInputError(f"{self.device_id}: network_bytes_per_sec must be > 0")


def load_traces(path: str | Path) -> list[DeviceProfile]:
    """Read a trace CSV. Errors carry the 1-based line number (header is line 1)."""
    path = str(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise TraceParseError(path, 0, f"cannot open: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceParseError(path, 1, "missing header")
        if [h.strip() for h in header] != HEADER:
            raise TraceParseError(path, 1, f"header must be {','.join(HEADER)}")
        profiles = []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise TraceParseError(path, line, f"expected 3 fields, got {len(row)}")
            device_id = row[0].strip()
            try:
                bandwidth = float(row[1])
                per_batch = float(row[2])
            except ValueError as exc:
                raise TraceParseError(path, line, str(exc)) from None
            if not device_id:
                raise TraceParseError(path, line, "empty device_id")
            if not (bandwidth > 0 and math.isfinite(bandwidth)):
                raise TraceParseError(path, line, f"network_bytes_per_sec must be > 0, got {row[1]}")
            if not (per_batch > 0 and math.isfinite(per_batch)):
                raise TraceParseError(path, line, f"compute_sec_per_batch must be > 0, got {row[2]}")
            profiles.append(DeviceProfile(device_id, per_batch, bandwidth))
    return profiles


def save_traces(path: str | Path, profiles: Sequence[DeviceProfile]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER)
        for p in profiles:
            writer.writerow(
                [p.device_id, repr(float(p.network_bytes_per_sec)), repr(float(p.compute_sec_per_batch))]
            )


def gen_traces(count: int, seed) -> list[DeviceProfile]:
    """Synthetic devices: log-uniform bandwidth, uniform seconds per mini-batch."""
    if count < 1:
        raise InvalidInputError("count must be >= 1")
    rng = np.random.default_rng(seed)
    log_bw = rng.uniform(math.log(MIN_NETWORK_BPS), math.log(MAX_NETWORK_BPS), size=count)
    per_batch = rng.uniform(MIN_SEC_PER_BATCH, MAX_SEC_PER_BATCH, size=count)
    bandwidth = np.clip(np.exp(log_bw), MIN_NETWORK_BPS, MAX_NETWORK_BPS)
    width = len(str(count - 1))
    return [
        DeviceProfile(f"dev{i:0{width}d}", float(per_batch[i]), float(bandwidth[i]))
        for i in range(count)
    ]


def assign_profiles(
    num_clients: int, profiles: Sequence[DeviceProfile], seed
) -> dict[int, DeviceProfile]:
    """Client index -> profile, drawn uniformly with replacement."""
    if not profiles:
        raise InvalidInputError("no device profiles to assign")
    picks = np.random.default_rng(seed).integers(0, len(profiles), size=num_clients)
    return {k: profiles[int(i)] for k, i in enumerate(picks)}


def transfer_seconds(profile: DeviceProfile, num_bytes: int) -> float:
    return num_bytes / profile.network_bytes_per_sec


def compute_seconds(profile: DeviceProfile, num_batches: int) -> float:
    return num_batches * profile.compute_sec_per_batch


def client_round_duration(profile: DeviceProfile, model_bytes: int, num_batches: int) -> float:
    """Download, local training and upload, one after another."""
    if model_bytes < 0 or num_batches < 0:
        raise InvalidInputError("model_bytes and num_batches must be >= 0")
    link = transfer_seconds(profile, model_bytes)
    return link + compute_seconds(profile, num_batches) + link
