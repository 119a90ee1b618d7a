"""ECG signal preprocessing: band-pass filtering, resampling to 107 Hz,
per-record z-score normalization, and 50%-overlap windowing.

The pipeline order is filter -> resample -> normalize -> window. Records
enter as raw single-lead ECG (the challenge data is 300 Hz, 9-60 s) and
leave as (N_w, 256) window batches ready for the classifier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .errors import (
    ManifestError,
    MissingFileError,
    NyquistError,
    ResampleDirectionError,
    ShortRecordError,
    UnknownLabelError,
)

CLASS_NAMES = ("Normal", "AF", "Other", "Noise")

# PhysioNet/CinC 2017 reference labels map onto our class names
_LABEL_ALIASES = {
    "N": "Normal",
    "A": "AF",
    "O": "Other",
    "~": "Noise",
    "Normal": "Normal",
    "AF": "AF",
    "Other": "Other",
    "Noise": "Noise",
}

WINDOW_LEN = 256
WINDOW_STEP = 128  # 50% overlap
TARGET_FS = 107.0

BAND_LOW_HZ = 0.5
BAND_HIGH_HZ = 40.0
FILTER_ORDER = 4
SIGMA_FLOOR = 1e-8


@dataclass
class SignalRecord:
    samples: np.ndarray
    fs: float
    label: str = None  # one of CLASS_NAMES, or None when unlabeled
    id: str = ""
    degenerate: bool = False  # set when normalization hit a constant signal

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.fs <= 0:
            raise ValueError(f"sampling rate must be positive, got {self.fs}")
        if self.samples.size == 0:
            raise ValueError("record has no samples")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.fs


@dataclass
class WindowBatch:
    windows: np.ndarray  # (N_w, WINDOW_LEN)
    offset: int  # start index of the first window in the source record
    source_id: str = ""

    @property
    def n_windows(self) -> int:
        return self.windows.shape[0]


def bandpass(record: SignalRecord, zero_phase: bool = False) -> SignalRecord:
    """4th-order Butterworth band-pass, 0.5-40 Hz.

    Causal (forward-only) by default, matching a streaming implementation;
    ``zero_phase`` switches to forward-backward filtering for offline
    parity studies.
    """
    if record.fs <= 2 * BAND_HIGH_HZ:
        raise NyquistError(
            f"nyquist violation: fs={record.fs} Hz cannot carry a {BAND_HIGH_HZ} Hz passband"
        )
    sos = sps.butter(
        FILTER_ORDER, [BAND_LOW_HZ, BAND_HIGH_HZ], btype="band", fs=record.fs, output="sos"
    )
    filt = sps.sosfiltfilt if zero_phase else sps.sosfilt
    return replace(record, samples=np.asarray(filt(sos, record.samples)))


def resample(record: SignalRecord, target_fs: float = TARGET_FS) -> SignalRecord:
    """Polyphase-FIR downsample to target_fs using the exact rational ratio."""
    if target_fs > record.fs:
        raise ResampleDirectionError(
            f"unsupported direction: cannot upsample {record.fs} -> {target_fs} Hz"
        )
    if target_fs == record.fs:
        return replace(record)
    ratio = Fraction(target_fs).limit_denominator(10**6) / Fraction(
        record.fs
    ).limit_denominator(10**6)
    out_len = round(record.samples.size * target_fs / record.fs)
    out = sps.resample_poly(record.samples, ratio.numerator, ratio.denominator)
    return replace(record, samples=out[:out_len], fs=target_fs)


def normalize(record: SignalRecord) -> SignalRecord:
    """Per-record z-score (population sigma, floored at 1e-8).

    A constant record comes back all-zero with ``degenerate`` set.
    """
    if record.samples.size < 2:
        raise ShortRecordError("record too short: normalization needs >= 2 samples")
    mu = record.samples.mean()
    sigma = record.samples.std()
    if sigma < SIGMA_FLOOR:
        return replace(record, samples=np.zeros_like(record.samples), degenerate=True)
    return replace(record, samples=(record.samples - mu) / sigma)


def make_windows(record: SignalRecord, seed: int = None) -> WindowBatch:
    """Split into 256-sample windows with 50% overlap.

    Leftover samples (length not on the 128-step grid) are discarded from
    both ends: the first window starts at a random offset in [0, leftover]
    when ``seed`` is given, or at the midpoint in deterministic mode
    (seed None).
    """
    n = record.samples.size
    if n < WINDOW_LEN:
        raise ShortRecordError(f"record too short: {n} < {WINDOW_LEN} samples")
    n_w = (n - WINDOW_LEN) // WINDOW_STEP + 1
    leftover = n - (WINDOW_LEN + (n_w - 1) * WINDOW_STEP)
    if seed is None:
        offset = leftover // 2
    else:
        offset = int(np.random.default_rng(seed).integers(0, leftover + 1))
    starts = offset + WINDOW_STEP * np.arange(n_w)
    windows = record.samples[starts[:, None] + np.arange(WINDOW_LEN)[None, :]]
    return WindowBatch(windows=windows, offset=offset, source_id=record.id)


def preprocess(record: SignalRecord, seed: int = None, zero_phase: bool = False) -> WindowBatch:
    """Full pipeline: bandpass -> resample -> normalize -> window."""
    return make_windows(
        normalize(resample(bandpass(record, zero_phase=zero_phase))), seed=seed
    )


# ---------------------------------------------------------------------------
# Dataset interchange format: JSON-lines manifest + raw little-endian samples
# ---------------------------------------------------------------------------


def load_manifest(manifest_path) -> list:
    """Read a JSON-lines manifest: {id, label, fs, path, dtype?, scale?}.

    ``path`` is relative to the manifest. Sample files are little-endian
    int16 (default) or float32; int16 samples are multiplied by ``scale``
    (default 1.0).
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise MissingFileError(f"missing file: {manifest_path}")
    entries = []
    with open(manifest_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(
                    f"malformed header: {manifest_path}:{lineno}: {e}"
                ) from None
            for key in ("id", "fs", "path"):
                if key not in entry:
                    raise ManifestError(
                        f"malformed header: {manifest_path}:{lineno}: missing {key!r}"
                    )
            entries.append(entry)
    if not entries:
        raise ManifestError(f"empty manifest: {manifest_path}")
    return entries


def load_record(entry: dict, base_dir) -> SignalRecord:
    label = entry.get("label")
    if label is not None:
        if label not in _LABEL_ALIASES:
            raise UnknownLabelError(f"unknown label: {label!r} for record {entry['id']}")
        label = _LABEL_ALIASES[label]
    path = Path(base_dir) / entry["path"]
    if not path.exists():
        raise MissingFileError(f"missing file: {path}")
    dtype = entry.get("dtype", "i16")
    if dtype == "i16":
        samples = np.fromfile(path, dtype="<i2").astype(np.float64)
        samples *= float(entry.get("scale", 1.0))
    elif dtype == "f32":
        samples = np.fromfile(path, dtype="<f4").astype(np.float64)
    else:
        raise ManifestError(f"malformed header: unknown dtype {dtype!r}")
    return SignalRecord(samples=samples, fs=float(entry["fs"]), label=label, id=str(entry["id"]))


def load_dataset(manifest_path) -> list:
    """Load every record referenced by a manifest."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    return [load_record(e, base) for e in load_manifest(manifest_path)]


def stratified_split(records: list, test_size: int, seed: int = 0) -> tuple:
    """Seeded stratified train/test split keeping per-class proportions.

    Per-class test counts are the largest-remainder apportionment of
    ``test_size``; records are shuffled per class with the seed.
    """
    if not 0 < test_size < len(records):
        raise ValueError(f"test_size {test_size} out of range for {len(records)} records")
    rng = np.random.default_rng(seed)
    by_class = {}
    for rec in records:
        by_class.setdefault(rec.label, []).append(rec)

    total = len(records)
    quotas = {}
    remainders = []
    assigned = 0
    for label, group in sorted(by_class.items(), key=lambda kv: str(kv[0])):
        exact = test_size * len(group) / total
        quotas[label] = int(exact)
        assigned += int(exact)
        remainders.append((exact - int(exact), label))
    for _, label in sorted(remainders, reverse=True)[: test_size - assigned]:
        quotas[label] += 1

    train, test = [], []
    for label, group in sorted(by_class.items(), key=lambda kv: str(kv[0])):
        order = rng.permutation(len(group))
        k = quotas[label]
        test.extend(group[i] for i in order[:k])
        train.extend(group[i] for i in order[k:])
    return train, test
