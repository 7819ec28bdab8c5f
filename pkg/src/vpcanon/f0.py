"""F0 contours and the pitch-domain anonymization transforms.

Conventions used throughout:

* unvoiced frames carry ``f0 == 0`` and are passed through untouched;
* the moving average is causal: frame ``t`` averages the last ``n`` *voiced*
  frames at indices ``<= t`` (unvoiced frames are skipped, not counted), and
  uses however many voiced frames exist near the start of the track;
* standard deviations are population (divide-by-N) values.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray

from .fileio import atomic_write_text, fmt_float, json_ready
from .rng import SeededRng, check_seed


class TrackFormatError(ValueError):
    """Raised when an F0 track file or array pair violates the track invariants."""


@dataclass(frozen=True)
class F0Track:
    """Per-frame F0 contour with voicing flags.

    Arrays are copied on construction and made read-only.
    """

    frame_period_ms: float
    f0_hz: NDArray[np.float64]
    voiced: NDArray[np.bool_]

    def __post_init__(self):
        f0 = np.array(self.f0_hz, dtype=np.float64)
        voiced = np.array(self.voiced, dtype=bool)
        if f0.ndim != 1 or voiced.ndim != 1:
            raise TrackFormatError("f0_hz and voiced must be one-dimensional")
        if f0.shape != voiced.shape:
            raise TrackFormatError(
                f"length mismatch: f0_hz has {f0.size} frames, voiced has {voiced.size}"
            )
        period = float(self.frame_period_ms)
        if not (math.isfinite(period) and period > 0):
            raise TrackFormatError(f"frame_period_ms must be positive, got {self.frame_period_ms}")
        if not np.all(np.isfinite(f0)):
            bad = int(np.flatnonzero(~np.isfinite(f0))[0])
            raise TrackFormatError(f"f0_hz[{bad}]: value must be finite")
        bad_voiced = np.flatnonzero(voiced & ~(f0 > 0))
        if bad_voiced.size:
            i = int(bad_voiced[0])
            raise TrackFormatError(f"f0_hz[{i}]: voiced frame must have f0 > 0, got {f0[i]}")
        bad_unvoiced = np.flatnonzero(~voiced & (f0 != 0))
        if bad_unvoiced.size:
            i = int(bad_unvoiced[0])
            raise TrackFormatError(f"f0_hz[{i}]: unvoiced frame must have f0 == 0, got {f0[i]}")
        f0.flags.writeable = False
        voiced.flags.writeable = False
        object.__setattr__(self, "frame_period_ms", period)
        object.__setattr__(self, "f0_hz", f0)
        object.__setattr__(self, "voiced", voiced)

    @classmethod
    def from_f0(cls, f0_hz, frame_period_ms: float = 10.0) -> "F0Track":
        """Build a track from an F0 array where zeros mark unvoiced frames."""
        f0 = np.asarray(f0_hz, dtype=np.float64)
        return cls(frame_period_ms, f0, f0 > 0)

    def __len__(self) -> int:
        return int(self.f0_hz.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, F0Track):
            return NotImplemented
        return (
            self.frame_period_ms == other.frame_period_ms
            and np.array_equal(self.f0_hz, other.f0_hz)
            and np.array_equal(self.voiced, other.voiced)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def n_voiced(self) -> int:
        return int(np.count_nonzero(self.voiced))

    def with_voiced_values(self, values: NDArray[np.float64]) -> "F0Track":
        """Return a copy whose voiced frames take ``values`` (in frame order)."""
        values = np.asarray(values, dtype=np.float64)
        if not np.all((values > 0) & np.isfinite(values)):
            bad = int(np.flatnonzero(~((values > 0) & np.isfinite(values)))[0])
            raise TrackFormatError(f"voiced value {bad} must be finite and > 0, got {values[bad]}")
        f0 = np.zeros(len(self), dtype=np.float64)
        f0[self.voiced] = values
        f0.flags.writeable = False
        # voicing and period are already validated, skip the full check
        out = object.__new__(F0Track)
        object.__setattr__(out, "frame_period_ms", self.frame_period_ms)
        object.__setattr__(out, "f0_hz", f0)
        object.__setattr__(out, "voiced", self.voiced)
        return out


@dataclass(frozen=True)
class MeanReversionConfig:
    alpha: float
    window_n: int = 32

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if isinstance(self.window_n, bool) or int(self.window_n) != self.window_n or self.window_n < 1:
            raise ValueError(f"invalid window: window_n must be a positive integer, got {self.window_n}")


@dataclass(frozen=True)
class F0NoiseConfig:
    snr_db: float
    floor_hz: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.snr_db):
            raise ValueError(f"snr_db must be finite, got {self.snr_db}")
        if not self.floor_hz > 0:
            raise ValueError(f"floor_hz must be positive, got {self.floor_hz}")
        check_seed(self.seed)


def _voiced_moving_average(values: NDArray[np.float64], window_n: int) -> NDArray[np.float64]:
    # trailing mean over a compacted voiced-only series; leading zeros make
    # the first windows partial, the divisor counts real samples only
    n = len(values)
    padded = np.concatenate([np.zeros(window_n - 1), values])
    sums = sliding_window_view(padded, window_n).sum(axis=1)
    counts = np.minimum(np.arange(1, n + 1), window_n)
    return sums / counts


def moving_average_f0(track: F0Track, window_n: int) -> F0Track:
    """Causal n-frame moving average over voiced frames.

    Each voiced frame becomes the mean of the most recent ``window_n`` voiced
    values up to and including itself. Unvoiced frames stay at 0.

    Example:
        >>> t = F0Track.from_f0([100.0, 0.0, 120.0])
        >>> moving_average_f0(t, 2).f0_hz.tolist()
        [100.0, 0.0, 110.0]
    """
    if len(track) == 0:
        raise ValueError("empty track")
    if isinstance(window_n, bool) or int(window_n) != window_n or window_n < 1:
        raise ValueError("invalid window")
    values = track.f0_hz[track.voiced]
    if values.size == 0:
        return track
    return track.with_voiced_values(_voiced_moving_average(values, int(window_n)))


def mean_reversion_f0(track: F0Track, cfg: MeanReversionConfig) -> F0Track:
    """Blend each voiced frame with its moving average: ``(1-a)*f0 + a*mean``.

    ``alpha=0`` returns the input values bit for bit and ``alpha=1`` returns
    exactly :func:`moving_average_f0`.
    """
    averaged = moving_average_f0(track, cfg.window_n)
    voiced = track.voiced
    f0 = track.f0_hz[voiced]
    ma = averaged.f0_hz[voiced]
    alpha = float(cfg.alpha)
    return track.with_voiced_values((1.0 - alpha) * f0 + alpha * ma)


def awgn_f0(track: F0Track, cfg: F0NoiseConfig) -> F0Track:
    """Add white Gaussian noise to voiced frames at a given SNR.

    The noise std is ``rms(voiced f0) * 10**(-snr_db/20)``; one variate is
    drawn per voiced frame in frame order, and noisy values are clamped to
    ``floor_hz`` so the contour stays positive.
    """
    voiced = track.voiced
    values = track.f0_hz[voiced]
    if values.size == 0:
        raise ValueError("no voiced frames for SNR reference")
    rms = math.sqrt(float(np.mean(values * values)))
    sigma = rms * 10.0 ** (-cfg.snr_db / 20.0)
    noise = SeededRng(cfg.seed).normal(values.size) * sigma
    return track.with_voiced_values(np.maximum(cfg.floor_hz, values + noise))


def f0_summary(track: F0Track) -> dict[str, float | None]:
    """Voiced-frame statistics (population std) and the voiced ratio.

    With no voiced frames every statistic is ``None``.
    """
    values = track.f0_hz[track.voiced]
    ratio = values.size / len(track) if len(track) else 0.0
    if values.size == 0:
        return {"mean_hz": None, "std_hz": None, "min_hz": None, "max_hz": None, "voiced_ratio": 0.0}
    return {
        "mean_hz": float(np.mean(values)),
        "std_hz": float(np.std(values)),
        "min_hz": float(np.min(values)),
        "max_hz": float(np.max(values)),
        "voiced_ratio": float(ratio),
    }


def vibrato_track(n_frames: int = 400, center_hz: float = 160.0, depth_hz: float = 30.0,
                  period_frames: float = 20.0, frame_period_ms: float = 10.0) -> F0Track:
    """Fully voiced sinusoidal contour ``center + depth*sin(2*pi*t/period)``."""
    t = np.arange(n_frames, dtype=np.float64)
    return F0Track.from_f0(center_hz + depth_hz * np.sin(2.0 * np.pi * t / period_frames), frame_period_ms)


# --- file format -----------------------------------------------------------

def track_to_dict(track: F0Track) -> dict[str, Any]:
    return {
        "frame_period_ms": track.frame_period_ms,
        "f0_hz": track.f0_hz.tolist(),
        "voiced": [int(v) for v in track.voiced],
    }


def track_from_dict(obj: Any) -> F0Track:
    if not isinstance(obj, dict):
        raise TrackFormatError("top level: expected a JSON object")
    for key in ("frame_period_ms", "f0_hz", "voiced"):
        if key not in obj:
            raise TrackFormatError(f"{key}: missing required field")
    period = obj["frame_period_ms"]
    if isinstance(period, bool) or not isinstance(period, (int, float)):
        raise TrackFormatError("frame_period_ms: expected a number")
    f0 = obj["f0_hz"]
    voiced = obj["voiced"]
    if not isinstance(f0, list):
        raise TrackFormatError("f0_hz: expected an array")
    if not isinstance(voiced, list):
        raise TrackFormatError("voiced: expected an array")
    for i, v in enumerate(f0):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise TrackFormatError(f"f0_hz[{i}]: expected a number, got {v!r}")
    flags = []
    for i, v in enumerate(voiced):
        if v is True or v is False or v in (0, 1):
            flags.append(bool(v))
        else:
            raise TrackFormatError(f"voiced[{i}]: expected 0 or 1, got {v!r}")
    return F0Track(float(period), np.array(f0, dtype=np.float64), np.array(flags, dtype=bool))


def loads_track(text: str) -> F0Track:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TrackFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return track_from_dict(obj)


def dumps_track(track: F0Track) -> str:
    """Serialize a track as compact JSON with 9-significant-digit floats."""
    return json.dumps(json_ready(track_to_dict(track)), separators=(",", ":")) + "\n"


def dumps_track_csv(track: F0Track) -> str:
    lines = ["frame,time_ms,f0_hz,voiced"]
    for i, (f0, v) in enumerate(zip(track.f0_hz, track.voiced)):
        lines.append(f"{i},{fmt_float(i * track.frame_period_ms)},{fmt_float(f0)},{int(v)}")
    return "\n".join(lines) + "\n"


def read_track(path: str | os.PathLike) -> F0Track:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return loads_track(text)
    except TrackFormatError as exc:
        raise TrackFormatError(f"{path}: {exc}") from None


def write_track(path: str | os.PathLike, track: F0Track) -> None:
    atomic_write_text(path, dumps_track(track))
