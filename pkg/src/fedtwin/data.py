"""Motor-condition datasets: synthetic signal generation, windowing,
normalization, subset bookkeeping, and file I/O.

The real rig data behind the experimental design is not public, so
experiments run on a synthetic stand-in: three channels (two orthogonal
accelerometers plus one motor-current clamp) sampled at 12 kHz, with
eight health conditions crossed with four operating regimes (2000/3000
RPM at low/high load). Each condition carries its own mix of shaft-order
harmonics, modulation, resonance bursts, and line-frequency content so
the classes are separable but overlapping; each regime moves the shaft
frequency and scales amplitudes, which is what makes domain transfer
non-trivial.

Recordings are normalized per channel by the channel's max absolute
value over the whole recording (so relative amplitude structure between
windows survives) and split into non-overlapping 256-sample windows.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from . import _binio
from .errors import (
    ContractError,
    DegenerateDataError,
    DimensionError,
    EmptySubsetError,
    FormatError,
    SplitError,
)

WINDOW_LENGTH = 256
N_CHANNELS = 3
DEFAULT_SAMPLE_RATE = 12000

DATASET_MAGIC = b"FTDS"
DATASET_VERSION = 1


class ConditionLabel(IntEnum):
    """The eight motor health conditions; codes are fixed so confusion
    matrices always share axes."""

    N = 0       # normal
    FB = 1      # faulted bearings
    BoR = 2     # bowed rotor
    BrR = 3     # broken rotor
    MR = 4      # misaligned rotor
    UR = 5      # unbalanced rotor
    PL = 6      # phase loss
    UV = 7      # unbalanced voltage

    @classmethod
    def parse(cls, text: str) -> "ConditionLabel":
        lookup = {m.name.lower(): m for m in cls}
        try:
            return lookup[text.strip().lower()]
        except KeyError:
            raise ContractError(f"unknown condition {text!r}") from None


class OperatingRegime(IntEnum):
    """Speed/load combinations: 2000 or 3000 RPM at 0.06 or 0.7 N*m."""

    R2L = 0
    R2H = 1
    R3L = 2
    R3H = 3

    @property
    def rpm(self) -> int:
        return 2000 if self in (OperatingRegime.R2L, OperatingRegime.R2H) else 3000

    @property
    def high_load(self) -> bool:
        return self in (OperatingRegime.R2H, OperatingRegime.R3H)

    @property
    def load_nm(self) -> float:
        return 0.7 if self.high_load else 0.06

    @property
    def display(self) -> str:
        return self.name[1:]  # "2L", "2H", "3L", "3H"

    @property
    def shaft_hz(self) -> float:
        return self.rpm / 60.0

    @classmethod
    def parse(cls, text: str) -> "OperatingRegime":
        key = text.strip().upper()
        if not key.startswith("R"):
            key = "R" + key
        try:
            return cls[key]
        except KeyError:
            raise ContractError(f"unknown regime {text!r}") from None


ALL_CONDITIONS = frozenset(ConditionLabel)
ALL_REGIMES = frozenset(OperatingRegime)


# ----------------------------------------------------------------------
# synthetic profile
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionSignature:
    """Spectral fingerprint of one health condition.

    vib_harmonics are amplitudes at integer shaft orders (1x, 2x, ...)
    on the accelerometer channels; line_harmonics are amplitudes at
    integer multiples of the electrical line frequency on the current
    channel. Optional extras: a half-order (0.5x) component, repeating
    high-frequency resonance bursts, amplitude modulation of the
    vibration or current, and a 2x-line vibration leak for electrical
    faults.
    """

    vib_harmonics: tuple[float, ...]
    line_harmonics: tuple[float, ...]
    half_order: float = 0.0
    burst_amp: float = 0.0
    burst_order: float = 0.0
    burst_carrier_hz: float = 0.0
    am_depth: float = 0.0
    am_order: float = 0.0
    current_am_depth: float = 0.0
    vib_line2: float = 0.0
    noise_level: float = 0.1

    def __post_init__(self):
        for amp in (*self.vib_harmonics, *self.line_harmonics, self.half_order,
                    self.burst_amp, self.vib_line2, self.noise_level):
            if amp < 0:
                raise ContractError("signature amplitudes must be nonnegative")


@dataclass(frozen=True)
class SyntheticProfile:
    """Full generator parameterization; serializable so a dataset is
    regenerable bit-exactly from (profile, seed)."""

    version: int = 1
    line_hz: float = 60.0
    channel_phases: tuple[float, float, float] = (0.0, math.pi / 2, 0.0)
    # per shaft order, amplitude ratio of the second accelerometer axis
    cross_axis_gains: tuple[float, ...] = (0.75, 1.2, 0.9, 1.1, 0.85)
    # regime display -> (vibration gain, current gain, noise gain)
    regime_gains: tuple[tuple[str, tuple[float, float, float]], ...] = (
        ("2L", (0.80, 0.90, 1.00)),
        ("2H", (1.15, 1.20, 1.10)),
        ("3L", (1.00, 1.00, 1.00)),
        ("3H", (1.30, 1.25, 1.10)),
    )
    # slow load-fluctuation envelope: window-to-window amplitude varies
    # while spectral shape stays put (a nuisance for energy features)
    drift_depth_vib: float = 0.0
    drift_depth_current: float = 0.0
    drift_hz: float = 0.3
    signatures: tuple[tuple[str, ConditionSignature], ...] = ()

    def __post_init__(self):
        names = [name for name, _sig in self.signatures]
        if len(set(names)) != len(names):
            raise ContractError("duplicate condition in profile signatures")
        sigs = [sig for _name, sig in self.signatures]
        for i in range(len(sigs)):
            for j in range(i + 1, len(sigs)):
                if sigs[i] == sigs[j]:
                    raise ContractError(
                        f"conditions {names[i]} and {names[j]} have identical signatures"
                    )

    def signature(self, condition: ConditionLabel) -> ConditionSignature:
        for name, sig in self.signatures:
            if name == condition.name:
                return sig
        raise ContractError(f"profile has no signature for {condition.name}")

    def regime_gain(self, regime: OperatingRegime) -> tuple[float, float, float]:
        for name, gains in self.regime_gains:
            if name == regime.display:
                return gains
        raise ContractError(f"profile has no gains for regime {regime.display}")

    def fundamental_hz(self, regime: OperatingRegime) -> float:
        return regime.shaft_hz

    def to_json(self) -> str:
        payload = {
            "version": self.version,
            "line_hz": self.line_hz,
            "channel_phases": list(self.channel_phases),
            "cross_axis_gains": list(self.cross_axis_gains),
            "drift_depth_vib": self.drift_depth_vib,
            "drift_depth_current": self.drift_depth_current,
            "drift_hz": self.drift_hz,
            "regime_gains": {name: list(g) for name, g in self.regime_gains},
            "signatures": {
                name: {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in vars(sig).items()}
                for name, sig in self.signatures
            },
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SyntheticProfile":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as err:
            raise FormatError(f"profile JSON: {err}") from None
        try:
            signatures = tuple(
                (name, ConditionSignature(
                    vib_harmonics=tuple(entry["vib_harmonics"]),
                    line_harmonics=tuple(entry["line_harmonics"]),
                    half_order=entry.get("half_order", 0.0),
                    burst_amp=entry.get("burst_amp", 0.0),
                    burst_order=entry.get("burst_order", 0.0),
                    burst_carrier_hz=entry.get("burst_carrier_hz", 0.0),
                    am_depth=entry.get("am_depth", 0.0),
                    am_order=entry.get("am_order", 0.0),
                    current_am_depth=entry.get("current_am_depth", 0.0),
                    vib_line2=entry.get("vib_line2", 0.0),
                    noise_level=entry.get("noise_level", 0.1),
                ))
                for name, entry in sorted(payload["signatures"].items())
            )
            return cls(
                version=payload["version"],
                line_hz=payload["line_hz"],
                channel_phases=tuple(payload["channel_phases"]),
                cross_axis_gains=tuple(payload["cross_axis_gains"]),
                drift_depth_vib=payload.get("drift_depth_vib", 0.0),
                drift_depth_current=payload.get("drift_depth_current", 0.0),
                drift_hz=payload.get("drift_hz", 0.3),
                regime_gains=tuple(sorted(
                    (name, tuple(g)) for name, g in payload["regime_gains"].items()
                )),
                signatures=signatures,
            )
        except (KeyError, TypeError) as err:
            raise FormatError(f"profile JSON: missing or bad field {err}") from None


def default_profile() -> SyntheticProfile:
    """Eight conditions with deliberately orthogonal cues.

    Mechanical faults live mostly on the accelerometer channels
    (harmonic ratios, half-order, bursts, modulation); electrical faults
    live mostly on the current channel (line-harmonic mix) with a mild
    120 Hz vibration leak. Normal is the clean baseline.
    """
    base_line = (1.0, 0.05, 0.03)
    signatures = (
        ("N", ConditionSignature(
            vib_harmonics=(1.0, 0.30, 0.10, 0.04, 0.02),
            line_harmonics=base_line, noise_level=0.10)),
        ("FB", ConditionSignature(
            vib_harmonics=(1.0, 0.32, 0.12, 0.05, 0.02),
            line_harmonics=base_line,
            burst_amp=0.9, burst_order=3.3, burst_carrier_hz=2800.0,
            noise_level=0.14)),
        ("BoR", ConditionSignature(
            vib_harmonics=(1.6, 0.85, 0.12, 0.05, 0.02),
            line_harmonics=base_line, half_order=0.55, noise_level=0.11)),
        ("BrR", ConditionSignature(
            vib_harmonics=(1.25, 0.35, 0.40, 0.30, 0.22),
            line_harmonics=(1.0, 0.06, 0.03),
            am_depth=0.45, am_order=2.5, current_am_depth=0.30,
            noise_level=0.11)),
        ("MR", ConditionSignature(
            vib_harmonics=(0.95, 1.90, 0.75, 0.10, 0.03),
            line_harmonics=base_line, noise_level=0.11)),
        ("UR", ConditionSignature(
            vib_harmonics=(2.6, 0.35, 0.10, 0.04, 0.02),
            line_harmonics=base_line, noise_level=0.11)),
        ("PL", ConditionSignature(
            vib_harmonics=(1.0, 0.30, 0.10, 0.04, 0.02),
            line_harmonics=(0.55, 0.10, 0.85),
            vib_line2=0.65, noise_level=0.10)),
        ("UV", ConditionSignature(
            vib_harmonics=(1.0, 0.30, 0.10, 0.04, 0.02),
            line_harmonics=(1.30, 0.55, 0.06),
            vib_line2=0.30, noise_level=0.10)),
    )
    return SyntheticProfile(
        drift_depth_vib=0.45, drift_depth_current=0.25, signatures=signatures
    )


DEFAULT_PROFILE = default_profile()


def generate_synthetic(
    profile: SyntheticProfile,
    condition: ConditionLabel,
    regime: OperatingRegime,
    seconds: float,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    seed: int = 0,
) -> np.ndarray:
    """One steady-state recording, shape (3, seconds*rate), deterministic
    in (profile version, condition, regime, seed)."""
    if seconds <= 0:
        raise ContractError(f"seconds must be positive, got {seconds}")
    n = int(round(seconds * sample_rate))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(
        [int(seed), int(condition), int(regime), int(profile.version)]
    )))
    t = np.arange(n) / sample_rate
    sig = profile.signature(condition)
    vib_gain, cur_gain, noise_gain = profile.regime_gain(regime)

    # small per-recording speed detune keeps recordings from being
    # perfectly periodic copies of each other
    f0 = profile.fundamental_hz(regime) * (1.0 + rng.normal(0.0, 0.003))
    shaft_phase = rng.uniform(0.0, 2.0 * math.pi)

    def shaft_tone(order: float, amp: float, channel: int) -> np.ndarray:
        phase = (
            order * shaft_phase
            + profile.channel_phases[channel]
            + rng.uniform(0.0, 2.0 * math.pi)
        )
        return amp * np.sin(2.0 * math.pi * order * f0 * t + phase)

    vib = [np.zeros(n), np.zeros(n)]
    for k, amp in enumerate(sig.vib_harmonics, start=1):
        gain2 = profile.cross_axis_gains[(k - 1) % len(profile.cross_axis_gains)]
        tone = shaft_tone(k, amp, 0)
        vib[0] += tone
        vib[1] += gain2 * shaft_tone(k, amp, 1)
    if sig.half_order > 0:
        vib[0] += shaft_tone(0.5, sig.half_order, 0)
        vib[1] += 0.8 * shaft_tone(0.5, sig.half_order, 1)

    if sig.am_depth > 0:
        am = 1.0 + sig.am_depth * np.sin(
            2.0 * math.pi * sig.am_order * f0 * t + rng.uniform(0, 2 * math.pi)
        )
        vib[0] *= am
        vib[1] *= am

    if sig.burst_amp > 0:
        burst_rate = sig.burst_order * f0
        pulse_pos = (t * burst_rate + rng.uniform(0.0, 1.0)) % 1.0
        envelope = np.exp(-pulse_pos / 0.12)
        carrier = np.sin(2.0 * math.pi * sig.burst_carrier_hz * t + rng.uniform(0, 2 * math.pi))
        burst = sig.burst_amp * envelope * carrier
        vib[0] += burst
        vib[1] += 0.8 * burst

    if sig.vib_line2 > 0:
        leak = sig.vib_line2 * np.sin(
            2.0 * math.pi * 2.0 * profile.line_hz * t + rng.uniform(0, 2 * math.pi)
        )
        vib[0] += leak
        vib[1] += 0.9 * leak

    current = np.zeros(n)
    for k, amp in enumerate(sig.line_harmonics, start=1):
        current += amp * np.sin(
            2.0 * math.pi * k * profile.line_hz * t
            + profile.channel_phases[2]
            + rng.uniform(0.0, 2.0 * math.pi)
        )
    if sig.current_am_depth > 0:
        current *= 1.0 + sig.current_am_depth * np.sin(
            2.0 * math.pi * sig.am_order * f0 * t + rng.uniform(0, 2 * math.pi)
        )
    # mild mechanical reflection of the shaft into the current
    current += 0.05 * np.sin(2.0 * math.pi * f0 * t + shaft_phase)

    vib_drift = np.ones(n)
    cur_drift = np.ones(n)
    if profile.drift_depth_vib > 0 or profile.drift_depth_current > 0:
        # two incommensurate slow phases so the envelope never repeats
        # window-aligned; both channels share the load fluctuation
        p1 = rng.uniform(0.0, 2.0 * math.pi)
        p2 = rng.uniform(0.0, 2.0 * math.pi)
        envelope = 0.6 * np.sin(2.0 * math.pi * profile.drift_hz * t + p1)
        envelope += 0.4 * np.sin(2.0 * math.pi * 2.37 * profile.drift_hz * t + p2)
        vib_drift = 1.0 + profile.drift_depth_vib * envelope
        cur_drift = 1.0 + profile.drift_depth_current * envelope

    noise = sig.noise_level * noise_gain
    out = np.stack([
        vib_gain * vib_drift * vib[0] + rng.normal(0.0, noise, n),
        vib_gain * vib_drift * vib[1] + rng.normal(0.0, noise, n),
        cur_gain * cur_drift * current + rng.normal(0.0, 0.4 * noise, n),
    ])
    return out


# ----------------------------------------------------------------------
# window datasets
# ----------------------------------------------------------------------

class WindowDataset:
    """Normalized window batch with per-window condition and regime codes.

    Immutable by convention after construction; filtering and splitting
    return new instances over copied views.
    """

    def __init__(self, windows: np.ndarray, labels, regimes):
        windows = np.asarray(windows, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.uint8)
        regimes = np.asarray(regimes, dtype=np.uint8)
        if windows.ndim != 3 or windows.shape[1] != N_CHANNELS or windows.shape[2] != WINDOW_LENGTH:
            raise DimensionError(
                f"windows must be (N, {N_CHANNELS}, {WINDOW_LENGTH}), got {windows.shape}"
            )
        if not (len(labels) == len(regimes) == windows.shape[0]):
            raise DimensionError("windows, labels, and regimes lengths disagree")
        if not np.all(np.isfinite(windows)):
            raise DegenerateDataError("windows contain non-finite values")
        if np.abs(windows).max(initial=0.0) > 1.0 + 1e-12:
            raise DegenerateDataError("window values must lie in [-1, 1]")
        peak = np.abs(windows).reshape(windows.shape[0], -1).max(axis=1) if len(windows) else np.array([])
        if len(windows) and peak.min() == 0.0:
            raise DegenerateDataError("dataset contains an all-zero window")
        if labels.size and labels.max() >= len(ConditionLabel):
            raise FormatError(f"condition code {labels.max()} out of range")
        if regimes.size and regimes.max() >= len(OperatingRegime):
            raise FormatError(f"regime code {regimes.max()} out of range")
        self.windows = windows
        self.labels = labels
        self.regimes = regimes

    def __len__(self) -> int:
        return self.windows.shape[0]

    def conditions_present(self) -> set:
        return {ConditionLabel(int(code)) for code in np.unique(self.labels)}

    def regimes_present(self) -> set:
        return {OperatingRegime(int(code)) for code in np.unique(self.regimes)}


def window_and_normalize(raw: np.ndarray) -> np.ndarray:
    """Scale each channel by 1/max|channel| over the whole recording and
    cut into floor(T/256) non-overlapping windows: (n, 3, 256)."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] != N_CHANNELS:
        raise DimensionError(f"raw recording must be ({N_CHANNELS}, T), got {raw.shape}")
    if raw.shape[1] < WINDOW_LENGTH:
        raise DimensionError(
            f"recording too short: {raw.shape[1]} < {WINDOW_LENGTH} samples"
        )
    peaks = np.abs(raw).max(axis=1)
    if np.any(peaks == 0.0):
        dead = int(np.argmin(peaks))
        raise DegenerateDataError(f"channel {dead} is all zero; cannot normalize")
    normalized = raw / peaks[:, None]
    n_windows = raw.shape[1] // WINDOW_LENGTH
    trimmed = normalized[:, : n_windows * WINDOW_LENGTH]
    return np.ascontiguousarray(
        trimmed.reshape(N_CHANNELS, n_windows, WINDOW_LENGTH).transpose(1, 0, 2)
    )


def generate_dataset(
    profile: SyntheticProfile,
    conditions=None,
    regimes=None,
    seconds: float = 60.0,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    seed: int = 0,
) -> WindowDataset:
    """Windows for every requested (condition, regime) combination, in
    canonical code order."""
    conditions = sorted(conditions or ALL_CONDITIONS)
    regimes = sorted(regimes or ALL_REGIMES)
    blocks, labels, regs = [], [], []
    for condition in conditions:
        for regime in regimes:
            raw = generate_synthetic(profile, condition, regime, seconds, sample_rate, seed)
            windows = window_and_normalize(raw)
            blocks.append(windows)
            labels.append(np.full(len(windows), int(condition), dtype=np.uint8))
            regs.append(np.full(len(windows), int(regime), dtype=np.uint8))
    return WindowDataset(
        np.concatenate(blocks), np.concatenate(labels), np.concatenate(regs)
    )


def filter_subset(dataset: WindowDataset, conditions, regimes) -> WindowDataset:
    """Rows matching both filters, original order preserved."""
    conditions = set(conditions)
    regimes = set(regimes)
    if not conditions or not regimes:
        raise ContractError("condition and regime filters must be non-empty")
    want_cond = np.isin(dataset.labels, [int(c) for c in conditions])
    want_reg = np.isin(dataset.regimes, [int(r) for r in regimes])
    keep = want_cond & want_reg
    if not keep.any():
        names = sorted(c.name for c in conditions)
        raise EmptySubsetError(f"no windows match conditions {names}")
    return WindowDataset(
        dataset.windows[keep].copy(),
        dataset.labels[keep].copy(),
        dataset.regimes[keep].copy(),
    )


def train_test_split(dataset: WindowDataset, fraction: float = 0.8, seed: int = 0):
    """Deterministic split, stratified by (condition, regime); both sides
    keep the dataset's original row order."""
    if not 0.0 < fraction < 1.0:
        raise ContractError(f"fraction must be in (0, 1), got {fraction}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0x5B117])))
    strata = dataset.labels.astype(np.int64) * len(OperatingRegime) + dataset.regimes
    train_mask = np.zeros(len(dataset), dtype=bool)
    for stratum in np.unique(strata):
        idx = np.flatnonzero(strata == stratum)
        n_train = int(fraction * len(idx))
        if n_train == 0 or n_train == len(idx):
            raise SplitError(
                f"stratum {stratum} with {len(idx)} windows cannot be split "
                f"at fraction {fraction}"
            )
        chosen = rng.permutation(len(idx))[:n_train]
        train_mask[idx[chosen]] = True

    def take(mask):
        return WindowDataset(
            dataset.windows[mask].copy(),
            dataset.labels[mask].copy(),
            dataset.regimes[mask].copy(),
        )

    return take(train_mask), take(~train_mask)


# ----------------------------------------------------------------------
# dataset files
# ----------------------------------------------------------------------

def dataset_to_bytes(dataset: WindowDataset) -> bytes:
    blob = [
        DATASET_MAGIC,
        _binio.u32(DATASET_VERSION),
        _binio.u32(len(dataset)),
        _binio.u8(N_CHANNELS),
        _binio.u16(WINDOW_LENGTH),
    ]
    for i in range(len(dataset)):
        blob.append(_binio.u8(int(dataset.labels[i])))
        blob.append(_binio.u8(int(dataset.regimes[i])))
        blob.append(_binio.f64_array(dataset.windows[i]))
    return b"".join(blob)


def dataset_from_bytes(data: bytes, source: str = "dataset") -> WindowDataset:
    reader = _binio.Reader(data, source)
    magic = reader.take(4, "magic")
    if magic != DATASET_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r} at offset 0")
    version = reader.u32("version")
    if version != DATASET_VERSION:
        raise FormatError(f"{source}: unsupported version {version} at offset 4")
    count = reader.u32("window count")
    channels = reader.u8("channels")
    if channels != N_CHANNELS:
        raise FormatError(f"{source}: channels field is {channels}, expected {N_CHANNELS}")
    length = reader.u16("window length")
    if length != WINDOW_LENGTH:
        raise FormatError(f"{source}: length field is {length}, expected {WINDOW_LENGTH}")
    windows = np.empty((count, N_CHANNELS, WINDOW_LENGTH))
    labels = np.empty(count, dtype=np.uint8)
    regimes = np.empty(count, dtype=np.uint8)
    for i in range(count):
        code = reader.u8(f"window {i} condition code")
        if code >= len(ConditionLabel):
            raise FormatError(
                f"{source}: condition code {code} out of range at offset {reader.pos - 1}"
            )
        reg = reader.u8(f"window {i} regime code")
        if reg >= len(OperatingRegime):
            raise FormatError(
                f"{source}: regime code {reg} out of range at offset {reader.pos - 1}"
            )
        labels[i] = code
        regimes[i] = reg
        windows[i] = reader.f64_array(
            N_CHANNELS * WINDOW_LENGTH, f"window {i} samples"
        ).reshape(N_CHANNELS, WINDOW_LENGTH)
    reader.expect_end()
    return WindowDataset(windows, labels, regimes)


def save_dataset(dataset: WindowDataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dataset_to_bytes(dataset))


def load_dataset(path) -> WindowDataset:
    with open(path, "rb") as fh:
        data = fh.read()
    return dataset_from_bytes(data, source=str(path))


def import_csv_recording(csv_path, meta_path=None) -> WindowDataset:
    """Ingest a real recording: CSV columns time, ch1, ch2, ch3 plus a
    JSON sidecar naming condition, regime, and sample_rate."""
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".meta.json")
    try:
        meta = json.loads(meta_path.read_text())
    except FileNotFoundError:
        raise FormatError(f"missing sidecar metadata file {meta_path}") from None
    except json.JSONDecodeError as err:
        raise FormatError(f"{meta_path}: {err}") from None
    for key in ("condition", "regime", "sample_rate"):
        if key not in meta:
            raise FormatError(f"{meta_path}: missing field {key!r}")
    condition = ConditionLabel.parse(str(meta["condition"]))
    regime = OperatingRegime.parse(str(meta["regime"]))

    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{csv_path}: empty file")
    header = [cell.strip().lower() for cell in rows[0]]
    if header != ["time", "ch1", "ch2", "ch3"]:
        raise FormatError(f"{csv_path}: header must be time,ch1,ch2,ch3, got {rows[0]}")
    try:
        values = np.array([[float(cell) for cell in row] for row in rows[1:]])
    except ValueError as err:
        raise FormatError(f"{csv_path}: non-numeric cell ({err})") from None
    if values.ndim != 2 or values.shape[1] != 4:
        raise FormatError(f"{csv_path}: expected 4 columns")
    raw = values[:, 1:].T
    windows = window_and_normalize(raw)
    return WindowDataset(
        windows,
        np.full(len(windows), int(condition), dtype=np.uint8),
        np.full(len(windows), int(regime), dtype=np.uint8),
    )
