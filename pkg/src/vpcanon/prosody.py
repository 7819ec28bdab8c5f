"""Per-phoneme pitch/energy multiplier randomization."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fileio import atomic_write_text, fmt_float
from .rng import SeededRng, check_seed

CSV_HEADER = ("phoneme", "pitch", "energy", "duration_frames")


@dataclass(frozen=True)
class PhonemeProsody:
    phoneme_id: str
    pitch: float
    energy: float
    duration_frames: int

    def __post_init__(self):
        if not (math.isfinite(self.pitch) and self.pitch >= 0):
            raise ValueError(f"pitch must be a finite value >= 0, got {self.pitch}")
        if not (math.isfinite(self.energy) and self.energy >= 0):
            raise ValueError(f"energy must be a finite value >= 0, got {self.energy}")
        if isinstance(self.duration_frames, bool) or int(self.duration_frames) != self.duration_frames \
                or self.duration_frames < 1:
            raise ValueError(f"duration_frames must be a positive integer, got {self.duration_frames}")


@dataclass(frozen=True)
class MultiplierRange:
    """Half-open multiplier interval ``[lo, hi)``; ``lo == hi`` is a fixed multiplier."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and 0 < self.lo <= self.hi):
            raise ValueError(f"multiplier range must satisfy 0 < lo <= hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def parse(cls, text: str) -> "MultiplierRange":
        """Parse ``"lo:hi"``, e.g. ``"0.6:1.4"``."""
        try:
            lo, hi = (float(p) for p in text.split(":"))
        except ValueError:
            raise ValueError(f"malformed multiplier range {text!r}, expected lo:hi") from None
        return cls(lo, hi)

    def __str__(self) -> str:
        return f"{self.lo:g}:{self.hi:g}"


_PRESETS = ((0.6, 1.4), (0.7, 1.3), (0.8, 1.2), (0.9, 1.1), (1.0, 1.0))


def preset_ranges() -> list[MultiplierRange]:
    """The evaluated multiplier grid, widest first, ending with the no-op range."""
    return [MultiplierRange(lo, hi) for lo, hi in _PRESETS]


def draw_multipliers(n: int, rng_range: MultiplierRange, seed: int) -> np.ndarray:
    """Return an ``(n, 2)`` array of (pitch, energy) multipliers in ``[lo, hi)``.

    Draws are consumed phoneme by phoneme, pitch before energy.
    """
    lo, hi = rng_range.lo, rng_range.hi
    u = SeededRng(check_seed(seed)).uniform(2 * n).reshape(n, 2)
    mult = lo + (hi - lo) * u
    if hi > lo:
        # rounding in lo + width*u can land on hi; keep the interval half-open
        np.minimum(mult, np.nextafter(hi, lo), out=mult)
    return mult


def randomize_prosody(seq: Sequence[PhonemeProsody], rng_range: MultiplierRange,
                      seed: int) -> list[PhonemeProsody]:
    """Scale each phoneme's pitch and energy by independent uniform multipliers.

    Phoneme ids and durations are copied unchanged.
    """
    mult = draw_multipliers(len(seq), rng_range, seed).tolist()
    return [
        PhonemeProsody(p.phoneme_id, p.pitch * mp, p.energy * me, p.duration_frames)
        for p, (mp, me) in zip(seq, mult)
    ]


def loads_prosody_csv(text: str) -> list[PhonemeProsody]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise ValueError(f"line 1: expected header {','.join(CSV_HEADER)!r}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ValueError(f"line {lineno}: expected 4 fields, got {len(row)}")
        try:
            duration = float(row[3])
            out.append(PhonemeProsody(row[0], float(row[1]), float(row[2]),
                                      int(duration) if duration.is_integer() else duration))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return out


def dumps_prosody_csv(seq: Sequence[PhonemeProsody]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for p in seq:
        writer.writerow([p.phoneme_id, fmt_float(p.pitch), fmt_float(p.energy), p.duration_frames])
    return buf.getvalue()


def read_prosody_csv(path: str | os.PathLike) -> list[PhonemeProsody]:
    with open(path, encoding="utf-8", newline="") as fh:
        return loads_prosody_csv(fh.read())


def write_prosody_csv(path: str | os.PathLike, seq: Sequence[PhonemeProsody]) -> None:
    atomic_write_text(path, dumps_prosody_csv(seq))
