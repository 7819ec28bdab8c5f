"""WAV ingestion and a reference autocorrelation F0 extractor."""

from __future__ import annotations

import math
import os
import struct
import wave
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .f0 import F0Track


class WavFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Waveform:
    sample_rate_hz: int
    samples: NDArray[np.float64]

    def __post_init__(self):
        if int(self.sample_rate_hz) != self.sample_rate_hz or self.sample_rate_hz < 8000:
            raise ValueError(f"sample rate must be an integer >= 8000 Hz, got {self.sample_rate_hz}")
        x = np.array(self.samples, dtype=np.float64).ravel()
        if not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite")
        x.flags.writeable = False
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))
        object.__setattr__(self, "samples", x)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


def read_wav(path: str | os.PathLike) -> Waveform:
    """Read 16-bit PCM WAV, averaging stereo to mono, scaled by 1/32768."""
    try:
        with wave.open(os.fspath(path), "rb") as w:
            channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            n_frames = w.getnframes()
            data = w.readframes(n_frames)
    except wave.Error as exc:
        msg = str(exc)
        if msg.startswith("unknown format"):
            tag = msg.rsplit(":", 1)[-1].strip()
            raise WavFormatError(f"{path}: unsupported fmt.audio_format {tag} (only PCM = 1)") from None
        raise WavFormatError(f"{path}: {msg}") from None
    except EOFError:
        raise WavFormatError(f"{path}: truncated chunk in header") from None
    except struct.error:
        raise WavFormatError(f"{path}: truncated chunk in header") from None
    if width != 2:
        raise WavFormatError(f"{path}: unsupported fmt.bits_per_sample {8 * width} (only 16)")
    if channels not in (1, 2):
        raise WavFormatError(f"{path}: unsupported fmt.num_channels {channels} (mono or stereo only)")
    if len(data) != n_frames * channels * width:
        raise WavFormatError(
            f"{path}: truncated data chunk ({len(data)} of {n_frames * channels * width} bytes)"
        )
    pcm = np.frombuffer(data, dtype="<i2").astype(np.float64).reshape(-1, channels)
    return Waveform(rate, pcm.mean(axis=1) / 32768.0)


def write_wav(path: str | os.PathLike, wave_: Waveform) -> None:
    """Write mono 16-bit PCM, clipping to the representable range."""
    pcm = np.clip(np.round(wave_.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(os.fspath(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(wave_.sample_rate_hz)
        w.writeframes(pcm.tobytes())


def _normalized_autocorr(frame: NDArray[np.float64], lag_min: int, lag_max: int) -> NDArray[np.float64]:
    n = frame.size
    energy = np.cumsum(np.concatenate([[0.0], frame * frame]))
    r = np.zeros(lag_max + 1)
    for lag in range(lag_min, lag_max + 1):
        head = energy[n - lag]               # frame[:n-lag]
        tail = energy[n] - energy[lag]       # frame[lag:]
        denom = math.sqrt(head * tail)
        if denom > 0:
            r[lag] = float(np.dot(frame[: n - lag], frame[lag:])) / denom
    return r


def _pick_lag(r: NDArray[np.float64], lag_min: int, lag_max: int, tolerance: float = 0.05) -> int:
    # the shortest local maximum within `tolerance` of the global peak; plain
    # argmax drifts to multiples of the period, where r is just as high
    peak = float(np.max(r[lag_min:lag_max + 1]))
    for lag in range(lag_min, lag_max + 1):
        left = r[lag - 1] if lag > lag_min else -np.inf
        right = r[lag + 1] if lag < lag_max else -np.inf
        if r[lag] >= left and r[lag] >= right and r[lag] >= peak - tolerance:
            return lag
    return int(np.argmax(r[lag_min:lag_max + 1])) + lag_min


def extract_f0_autocorr(wave_: Waveform, frame_ms: float = 25.0, hop_ms: float = 10.0,
                        fmin_hz: float = 60.0, fmax_hz: float = 400.0,
                        voicing_threshold: float = 0.45, rms_gate: float = 0.01) -> F0Track:
    """Frame-wise F0 by normalized autocorrelation.

    A frame is voiced when its RMS is at least ``rms_gate`` and the chosen
    autocorrelation peak reaches ``voicing_threshold``. The chosen lag is the
    shortest local maximum close to the highest peak in
    [rate/fmax, rate/fmin], refined by parabolic interpolation. Voiced values
    are clamped to [fmin, fmax]; unvoiced frames get 0.

    Returns:
        An :class:`F0Track` with ``frame_period_ms == hop_ms`` and
        ``floor((len - frame) / hop) + 1`` frames.
    """
    if not (0 < fmin_hz < fmax_hz):
        raise ValueError("need 0 < fmin_hz < fmax_hz")
    if frame_ms <= 0 or hop_ms <= 0:
        raise ValueError("frame_ms and hop_ms must be positive")
    rate = wave_.sample_rate_hz
    frame_len = int(round(frame_ms * rate / 1000.0))
    hop = int(round(hop_ms * rate / 1000.0))
    x = wave_.samples
    if x.size == 0 or x.size < frame_len:
        raise ValueError(f"signal too short: {x.size} samples, need at least {frame_len} for one frame")
    lag_min = max(1, int(math.ceil(rate / fmax_hz)))
    lag_max = min(frame_len - 2, int(math.floor(rate / fmin_hz)))
    if lag_max <= lag_min:
        raise ValueError("frame too short for the requested fmin_hz")

    n_frames = (x.size - frame_len) // hop + 1
    f0 = np.zeros(n_frames)
    for k in range(n_frames):
        frame = x[k * hop: k * hop + frame_len]
        if math.sqrt(float(np.mean(frame * frame))) < rms_gate:
            continue
        frame = frame - frame.mean()
        r = _normalized_autocorr(frame, lag_min, lag_max)
        lag = _pick_lag(r, lag_min, lag_max)
        if r[lag] < voicing_threshold:
            continue
        refined = float(lag)
        if lag_min < lag < lag_max:
            a, b, c = r[lag - 1], r[lag], r[lag + 1]
            curve = a - 2.0 * b + c
            if curve < 0:
                refined = lag + 0.5 * (a - c) / curve
        f0[k] = min(fmax_hz, max(fmin_hz, rate / refined))
    return F0Track(hop_ms, f0, f0 > 0)


def sine_wave(freq_hz: float, duration_s: float = 1.0, sample_rate_hz: int = 16000,
              amplitude: float = 0.5) -> Waveform:
    t = np.arange(int(round(duration_s * sample_rate_hz))) / sample_rate_hz
    return Waveform(sample_rate_hz, amplitude * np.sin(2.0 * np.pi * freq_hz * t))
