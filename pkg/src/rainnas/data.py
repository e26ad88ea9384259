"""Datasets: container, screening, timeline split, synthetic generation, IO.

A sample pairs a c-member ensemble stack with its observed 33x33 rainfall
grid under one timestamp.  Two dataset modes fix the member count: Smod
carries 50 perturbed runs of one model, Mmod carries 4 distinct models.

Real archives are not redistributable, so ``generate_synthetic`` fakes
the relevant structure: spatially coherent observation fields whose
pooled level histogram tracks a target mix, and ensemble members derived
from the truth by small shifts, multiplicative noise, and per-member
additive biases (so the weighted mean has something to exploit).
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .metrics import classify

__all__ = [
    "GRID_H", "GRID_W", "MODE_CHANNELS", "DEFAULT_LEVEL_MIX",
    "GridSample", "Dataset", "screen", "split_timeline",
    "generate_synthetic", "dataset_arrays",
    "read_dataset", "write_dataset", "read_raster", "write_raster",
]

GRID_H = 33
GRID_W = 33
MODE_CHANNELS = {"Smod": 50, "Mmod": 4}
_MODE_CODES = {"Smod": 0, "Mmod": 1}

# pooled level proportions (None, Light, Moderate, Heavy, Violent); the
# trailing two split the residual 2.4% between heavy and violent rain
_RAW_MIX = np.array([0.081, 0.764, 0.127, 0.018, 0.006])
DEFAULT_LEVEL_MIX = tuple(_RAW_MIX / _RAW_MIX.sum())

DATASET_MAGIC = b"ADNR"
DATASET_VERSION = 1
RASTER_MAGIC = "raster"


@dataclass
class GridSample:
    timestamp: str
    ensemble: np.ndarray     # (c, 33, 33) mm/day
    observation: np.ndarray  # (33, 33) mm/day


@dataclass
class Dataset:
    samples: list[GridSample]
    mode: str

    def __post_init__(self):
        if self.mode not in MODE_CHANNELS:
            raise ValueError(f"unknown mode {self.mode!r}, expected one of "
                             f"{tuple(MODE_CHANNELS)}")
        c = MODE_CHANNELS[self.mode]
        prev = None
        for s in self.samples:
            if s.ensemble.shape != (c, GRID_H, GRID_W):
                raise ValueError(f"sample {s.timestamp!r}: ensemble shape "
                                 f"{s.ensemble.shape}, expected {(c, GRID_H, GRID_W)}")
            if s.observation.shape != (GRID_H, GRID_W):
                raise ValueError(f"sample {s.timestamp!r}: observation shape "
                                 f"{s.observation.shape}, expected {(GRID_H, GRID_W)}")
            if prev is not None and s.timestamp <= prev:
                raise ValueError(f"timestamps must strictly increase; "
                                 f"{s.timestamp!r} follows {prev!r}")
            prev = s.timestamp

    @property
    def channels(self) -> int:
        return MODE_CHANNELS[self.mode]

    def __len__(self) -> int:
        return len(self.samples)


def _valid_timestamp(ts: str) -> bool:
    if not ts:
        return False
    try:
        datetime.fromisoformat(ts.replace("Z", "+00:00"))
    except ValueError:
        return False
    return True


def screen(samples) -> tuple[list[GridSample], list[tuple[GridSample, str]]]:
    """Drop unusable samples; every rejection carries a reason.

    Reasons: "time mismatch" (bad, duplicate, or out-of-order timestamp),
    "missing member" (non-finite ensemble values), "missing observation",
    "negative values", "all-zero" (ensemble or observation entirely zero).
    """
    kept: list[GridSample] = []
    rejected: list[tuple[GridSample, str]] = []
    last_ts = None
    for s in samples:
        if not _valid_timestamp(s.timestamp) or (last_ts is not None
                                                 and s.timestamp <= last_ts):
            rejected.append((s, "time mismatch"))
            continue
        if not np.isfinite(s.ensemble).all():
            rejected.append((s, "missing member"))
            continue
        if not np.isfinite(s.observation).all():
            rejected.append((s, "missing observation"))
            continue
        if (np.asarray(s.ensemble) < 0).any() or (np.asarray(s.observation) < 0).any():
            rejected.append((s, "negative values"))
            continue
        if not s.ensemble.any() or not s.observation.any():
            rejected.append((s, "all-zero"))
            continue
        kept.append(s)
        last_ts = s.timestamp
    return kept, rejected


def split_timeline(dataset: Dataset, train_fraction: float = 0.9) -> tuple[Dataset, Dataset]:
    """First ceil(fraction * n) samples train, the rest validate; no shuffle."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train fraction must lie in (0, 1), got {train_fraction}")
    n = len(dataset.samples)
    if n < 10:
        warnings.warn(f"splitting a dataset of only {n} samples")
    frac = round(train_fraction * 10)
    if abs(train_fraction * 10 - frac) < 1e-12:
        n_train = -((-n * frac) // 10)   # exact ceil for tenth fractions
    else:
        n_train = int(np.ceil(n * train_fraction))
    return (Dataset(dataset.samples[:n_train], dataset.mode),
            Dataset(dataset.samples[n_train:], dataset.mode))


def dataset_arrays(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """(n, c, H, W) ensembles and (n, H, W) observations as float64."""
    n = len(dataset.samples)
    x = np.zeros((n, dataset.channels, GRID_H, GRID_W))
    y = np.zeros((n, GRID_H, GRID_W))
    for i, s in enumerate(dataset.samples):
        x[i] = s.ensemble
        y[i] = s.observation
    return x, y


# ----------------------------------------------------------------------
# synthetic generation
# ----------------------------------------------------------------------

def _smooth_field(rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:GRID_H, 0:GRID_W].astype(np.float64)
    bumps = rng.integers(3, 7)
    f = np.zeros((GRID_H, GRID_W))
    for _ in range(bumps):
        cy, cx = rng.uniform(0, GRID_H), rng.uniform(0, GRID_W)
        sigma = rng.uniform(3.0, 9.0)
        amp = rng.uniform(0.5, 2.0)
        f += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma * sigma))
    return f


def _level_values(counts, rng: np.random.Generator) -> np.ndarray:
    """Ascending rainfall values realizing the per-level pixel counts."""
    bands = [
        np.zeros(counts[0]),
        np.sort(rng.uniform(0.1, 10.1, counts[1])),
        np.sort(rng.uniform(10.1, 25.1, counts[2])),
        np.sort(rng.uniform(25.1, 50.1, counts[3])),
        np.sort(50.1 + rng.exponential(20.0, counts[4])),
    ]
    return np.concatenate(bands)


def generate_synthetic(n: int, mode: str, seed: int,
                       level_mix=None) -> Dataset:
    """Deterministic synthetic dataset with an informative-but-imperfect ensemble."""
    if n < 1:
        raise ValueError(f"need n >= 1 samples, got {n}")
    if mode not in MODE_CHANNELS:
        raise ValueError(f"unknown mode {mode!r}, expected one of {tuple(MODE_CHANNELS)}")
    mix = np.asarray(DEFAULT_LEVEL_MIX if level_mix is None else level_mix,
                     dtype=np.float64)
    if mix.shape != (5,) or (mix < 0).any() or mix.sum() <= 0:
        raise ValueError("level_mix must be five nonnegative proportions")
    mix = mix / mix.sum()

    c = MODE_CHANNELS[mode]
    rng = np.random.default_rng(seed)
    # wet bias drawn once per dataset: constant offsets keep EM informative
    # (rank structure intact) while leaving it plenty of room to be beaten
    member_bias = rng.normal(2.5, 1.0, size=c)
    start = datetime(2020, 1, 1)
    samples: list[GridSample] = []
    for k in range(n):
        counts = rng.multinomial(GRID_H * GRID_W, mix)
        f = _smooth_field(rng)
        values = _level_values(counts, rng)
        obs = np.empty(GRID_H * GRID_W)
        obs[np.argsort(f.ravel(), kind="stable")] = values
        obs = obs.reshape(GRID_H, GRID_W)

        ensemble = np.empty((c, GRID_H, GRID_W))
        for i in range(c):
            dy, dx = rng.integers(-2, 3, size=2)
            shifted = np.roll(obs, (dy, dx), axis=(0, 1))
            noise = rng.lognormal(0.0, 0.3, size=(GRID_H, GRID_W))
            ensemble[i] = np.maximum(shifted * noise + member_bias[i], 0.0)

        ts = (start + timedelta(days=k)).strftime("%Y-%m-%dT%H:%M:%SZ")
        samples.append(GridSample(timestamp=ts,
                                  ensemble=ensemble.astype(np.float32),
                                  observation=obs.astype(np.float32)))
    return Dataset(samples, mode)


def level_histogram(dataset: Dataset) -> np.ndarray:
    """Pooled observed-level proportions over all pixels."""
    _, y = dataset_arrays(dataset)
    levels = classify(y)
    return np.bincount(levels.ravel(), minlength=6)[1:] / levels.size


# ----------------------------------------------------------------------
# dataset file format
# ----------------------------------------------------------------------

class _Reader:
    def __init__(self, blob: bytes, path: Path):
        self.blob = blob
        self.path = path
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise ValueError(f"{self.path}: truncated while reading {what} "
                             f"at byte offset {self.pos}")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk


def write_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    parts = [DATASET_MAGIC,
             struct.pack("<I", DATASET_VERSION),
             struct.pack("<B", _MODE_CODES[dataset.mode]),
             struct.pack("<HHH", dataset.channels, GRID_W, GRID_H),
             struct.pack("<I", len(dataset.samples))]
    for s in dataset.samples:
        ts = s.timestamp.encode("utf-8")
        parts.append(struct.pack("<H", len(ts)))
        parts.append(ts)
        parts.append(np.ascontiguousarray(s.ensemble, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(s.observation, dtype="<f4").tobytes())
    path.write_bytes(b"".join(parts))


def read_dataset(path) -> Dataset:
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    if r.take(4, "magic") != DATASET_MAGIC:
        raise ValueError(f"{path}: not an ADNR file")
    (version,) = struct.unpack("<I", r.take(4, "version"))
    if version != DATASET_VERSION:
        raise ValueError(f"{path}: unsupported dataset format version {version}")
    (mode_code,) = struct.unpack("<B", r.take(1, "mode"))
    modes = {code: name for name, code in _MODE_CODES.items()}
    if mode_code not in modes:
        raise ValueError(f"{path}: unknown mode code {mode_code}")
    mode = modes[mode_code]
    c, w, h = struct.unpack("<HHH", r.take(6, "dimensions"))
    if c != MODE_CHANNELS[mode] or w != GRID_W or h != GRID_H:
        raise ValueError(f"{path}: dimensions ({c}, {w}, {h}) do not match "
                         f"mode {mode} on a {GRID_W}x{GRID_H} grid")
    (n,) = struct.unpack("<I", r.take(4, "sample count"))
    samples = []
    for k in range(n):
        (ts_len,) = struct.unpack("<H", r.take(2, f"timestamp length of sample {k}"))
        ts = r.take(ts_len, f"timestamp of sample {k}").decode("utf-8")
        raw = r.take(4 * c * w * h, f"ensemble of sample {k}")
        ensemble = np.frombuffer(raw, dtype="<f4").reshape(c, h, w).astype(np.float32)
        raw = r.take(4 * w * h, f"observation of sample {k}")
        observation = np.frombuffer(raw, dtype="<f4").reshape(h, w).astype(np.float32)
        samples.append(GridSample(ts, ensemble, observation))
    if r.pos != len(r.blob):
        raise ValueError(f"{path}: {len(r.blob) - r.pos} trailing bytes after last sample")
    return Dataset(samples, mode)


# ----------------------------------------------------------------------
# raster export
# ----------------------------------------------------------------------

def write_raster(path, grid) -> None:
    """One text header line, then row-major float32 little-endian values."""
    grid = np.asarray(grid, dtype="<f4")
    if grid.ndim != 2:
        raise ValueError(f"raster must be 2-d, got shape {grid.shape}")
    header = f"{RASTER_MAGIC} {grid.shape[0]} {grid.shape[1]} float32-le\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(grid.tobytes())


def read_raster(path) -> np.ndarray:
    path = Path(path)
    blob = path.read_bytes()
    end = blob.find(b"\n")
    if end < 0:
        raise ValueError(f"{path}: missing raster header line")
    fields = blob[:end].decode("ascii", errors="replace").split()
    if len(fields) != 4 or fields[0] != RASTER_MAGIC or fields[3] != "float32-le":
        raise ValueError(f"{path}: not a raster file")
    h, w = int(fields[1]), int(fields[2])
    payload = blob[end + 1:]
    if len(payload) != 4 * h * w:
        raise ValueError(f"{path}: truncated raster payload at byte offset "
                         f"{end + 1 + len(payload)}")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w).astype(np.float32)
