"""Speaker-embedding pools and pseudo-speaker selection strategies.

Vectors are unit-normalized when a pool is built. Every stochastic routine
takes an explicit 64-bit seed; nothing reads global random state.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
from numpy.typing import NDArray

from .fileio import atomic_write_text, json_ready
from .rng import SeededRng, check_seed, derive_seed

GENDERS = ("M", "F")
STRATEGIES = ("identity", "random_speaker", "farthest_pool_average", "rejection")

Generator = Callable[[int], NDArray[np.float64]]


def _as_vector(v) -> NDArray[np.float64]:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("embedding must be a non-empty 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError("embedding contains non-finite values")
    return arr


# vectors this close to unit norm are left bit-identical (idempotent normalization)
_UNIT_TOL = 4 * np.finfo(np.float64).eps


def unit(v) -> NDArray[np.float64]:
    """L2-normalize ``v``; vectors already at unit norm are returned unchanged."""
    v = _as_vector(v)
    norm = math.sqrt(float(np.dot(v, v)))
    if norm == 0.0:
        raise ValueError("zero-norm vector")
    if abs(norm - 1.0) <= _UNIT_TOL:
        return v.copy()
    return v / norm


def cosine_similarity(a, b) -> float:
    a = _as_vector(a)
    b = _as_vector(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    aa = float(np.dot(a, a))
    bb = float(np.dot(b, b))
    if aa == 0.0 or bb == 0.0:
        raise ValueError("zero-norm vector")
    return min(1.0, max(-1.0, float(np.dot(a, b)) / math.sqrt(aa * bb)))


def cosine_distance(a, b) -> float:
    return 1.0 - cosine_similarity(a, b)


@dataclass(frozen=True, eq=False)
class SpeakerEmbedding:
    speaker_id: str
    gender: str
    vector: NDArray[np.float64]
    utterance_id: str | None = None

    def __post_init__(self):
        if self.gender not in GENDERS:
            raise ValueError(f"gender must be 'M' or 'F', got {self.gender!r}")
        vec = _as_vector(self.vector)
        if not np.any(vec):
            raise ValueError(f"speaker {self.speaker_id}: zero-norm vector")
        vec = vec.copy()
        vec.flags.writeable = False
        object.__setattr__(self, "vector", vec)

    @property
    def key(self) -> tuple[str, str | None]:
        return (self.speaker_id, self.utterance_id)

    def with_vector(self, vector) -> "SpeakerEmbedding":
        return SpeakerEmbedding(self.speaker_id, self.gender, vector, self.utterance_id)


class EmbeddingPool:
    """Immutable collection of speaker embeddings sharing one dimension.

    Entries are unit-normalized on construction; ``matrix`` stacks them row-wise
    in input order.
    """

    def __init__(self, entries: Iterable[SpeakerEmbedding], dimension: int | None = None):
        entries = list(entries)
        if dimension is None:
            if not entries:
                raise ValueError("cannot infer dimension of an empty pool")
            dimension = entries[0].vector.size
        if dimension < 1:
            raise ValueError(f"dimension must be positive, got {dimension}")
        seen = set()
        normed = []
        for i, e in enumerate(entries):
            if e.vector.size != dimension:
                raise ValueError(f"entry {i} ({e.speaker_id}): dimension {e.vector.size} != {dimension}")
            if e.key in seen:
                raise ValueError(f"entry {i}: duplicate speaker_id/utterance_id {e.key}")
            seen.add(e.key)
            normed.append(e.with_vector(unit(e.vector)))
        mat = np.array([e.vector for e in normed], dtype=np.float64).reshape(len(normed), dimension)
        self._set_state(int(dimension), tuple(normed), mat)

    def _set_state(self, dimension: int, entries: tuple[SpeakerEmbedding, ...], mat: np.ndarray) -> None:
        self.dimension = dimension
        self.entries = entries
        mat.flags.writeable = False
        self.matrix = mat
        self._index = {e.key: i for i, e in enumerate(entries)}
        self._by_utterance: dict[str, int] = {}
        for i, e in enumerate(entries):
            if e.utterance_id is not None:
                self._by_utterance.setdefault(e.utterance_id, i)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[SpeakerEmbedding]:
        return iter(self.entries)

    def __getitem__(self, i: int) -> SpeakerEmbedding:
        return self.entries[i]

    def __repr__(self) -> str:
        return f"EmbeddingPool(n={len(self)}, dimension={self.dimension})"

    @property
    def genders(self) -> list[str]:
        return [e.gender for e in self.entries]

    def index_of(self, speaker_id: str, utterance_id: str | None = None) -> int:
        try:
            return self._index[(speaker_id, utterance_id)]
        except KeyError:
            raise KeyError(f"unknown embedding id {speaker_id!r}"
                           + (f"/{utterance_id!r}" if utterance_id is not None else "")) from None

    def lookup(self, ident: str) -> int:
        """Resolve an id string: ``utterance_id`` first, then a bare ``speaker_id``."""
        if ident in self._by_utterance:
            return self._by_utterance[ident]
        if (ident, None) in self._index:
            return self._index[(ident, None)]
        raise KeyError(f"unresolved id {ident!r}")

    def subset(self, indices: Iterable[int]) -> "EmbeddingPool":
        """Sub-pool in the given order; entries are reused without re-validation."""
        idx = np.fromiter(indices, dtype=np.int64)
        sub = object.__new__(EmbeddingPool)
        sub._set_state(self.dimension, tuple(self.entries[i] for i in idx), self.matrix[idx].copy())
        return sub

    def without_speaker(self, speaker_id: str) -> "EmbeddingPool":
        return self.subset(i for i, e in enumerate(self.entries) if e.speaker_id != speaker_id)


@dataclass(frozen=True)
class FarthestPoolConfig:
    k_far: int = 200
    k_select: int = 100
    renormalize: bool = True

    def __post_init__(self):
        if self.k_far < 1 or self.k_select < 1:
            raise ValueError("k_far and k_select must be positive")
        if self.k_select > self.k_far:
            raise ValueError(f"k_select ({self.k_select}) must not exceed k_far ({self.k_far})")


@dataclass(frozen=True)
class EmbeddingNoiseConfig:
    scale: float
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale >= 0):
            raise ValueError(f"noise scale must be >= 0, got {self.scale}")
        check_seed(self.seed)


@dataclass(frozen=True)
class RejectionConfig:
    distance_threshold: float = 0.3
    max_attempts: int = 30
    accept_when: str = "distance_below"

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError(f"max_attempts must be >= 1, got {self.max_attempts}")
        if self.accept_when not in ("distance_below", "distance_above"):
            raise ValueError(f"accept_when must be distance_below or distance_above, got {self.accept_when!r}")

    def accepts(self, distance: float) -> bool:
        if self.accept_when == "distance_below":
            return distance < self.distance_threshold
        return distance > self.distance_threshold


@dataclass(frozen=True)
class RejectionResult:
    vector: NDArray[np.float64]
    attempts: int
    accepted: bool
    distance: float


def select_random_speaker(pool: EmbeddingPool, seed: int,
                          exclude_speaker: str | None = None) -> SpeakerEmbedding:
    """Pick one entry uniformly at random (one draw per source utterance)."""
    if exclude_speaker is not None:
        pool = pool.without_speaker(exclude_speaker)
    if len(pool) == 0:
        raise ValueError("empty pool")
    return pool[SeededRng(seed).choice(len(pool))]


def cross_gender_filter(pool: EmbeddingPool, source_gender: str) -> EmbeddingPool:
    """Keep only entries of the gender opposite to ``source_gender``."""
    if source_gender not in GENDERS:
        raise ValueError(f"gender must be 'M' or 'F', got {source_gender!r}")
    keep = [i for i, e in enumerate(pool.entries) if e.gender != source_gender]
    if not keep:
        raise ValueError("no opposite-gender candidates")
    return pool.subset(keep)


def farthest_pool_average(source: SpeakerEmbedding, pool: EmbeddingPool,
                          cfg: FarthestPoolConfig, seed: int) -> NDArray[np.float64]:
    """Average ``k_select`` random picks from the ``k_far`` entries least similar to ``source``.

    Entries of the source speaker are dropped first. Ranking is by ascending
    cosine similarity with ties kept in pool order. The chosen rows are summed
    in pool order, so when every candidate is chosen the result does not depend
    on the seed.
    """
    pool = pool.without_speaker(source.speaker_id)
    if len(pool) < cfg.k_select:
        raise ValueError(f"pool too small: {len(pool)} candidates for k_select={cfg.k_select}")
    if source.vector.size != pool.dimension:
        raise ValueError(f"dimension mismatch: {source.vector.size} vs {pool.dimension}")
    sims = pool.matrix @ unit(source.vector)
    order = np.argsort(sims, kind="stable")
    candidates = order[: min(cfg.k_far, len(pool))]
    picked = np.sort(candidates[SeededRng(seed).sample(candidates.size, cfg.k_select)])
    mean = pool.matrix[picked].mean(axis=0)
    return unit(mean) if cfg.renormalize else mean


def embedding_awgn(vec, cfg: EmbeddingNoiseConfig) -> NDArray[np.float64]:
    """Normalize, add N(0, scale^2) per dimension, and renormalize."""
    base = unit(vec)
    if cfg.scale == 0:
        return base
    noise = SeededRng(cfg.seed).normal(base.size) * cfg.scale
    return unit(base + noise)


def pool_average_generator(pool: EmbeddingPool, k: int = 10) -> Generator:
    """Reference pseudo-speaker generator: mean of ``k`` random pool entries."""
    if len(pool) == 0:
        raise ValueError("empty pool")
    k = min(k, len(pool))

    def generate(seed: int) -> NDArray[np.float64]:
        picked = np.sort(SeededRng(seed).sample(len(pool), k))
        return unit(pool.matrix[picked].mean(axis=0))

    return generate


def rejection_sample_anon(source: SpeakerEmbedding, generator: Generator,
                          cfg: RejectionConfig, seed: int) -> RejectionResult:
    """Draw candidates until one passes the distance test or attempts run out.

    Attempt ``i`` (1-based) calls ``generator(derive_seed(seed, "attempt", i))``.
    If nothing is accepted the last candidate is returned with
    ``accepted=False``.
    """
    check_seed(seed)
    candidate = None
    distance = math.nan
    for attempt in range(1, cfg.max_attempts + 1):
        candidate = _as_vector(generator(derive_seed(seed, "attempt", attempt)))
        distance = cosine_distance(source.vector, candidate)
        if cfg.accepts(distance):
            return RejectionResult(candidate, attempt, True, distance)
    return RejectionResult(candidate, cfg.max_attempts, False, distance)


@dataclass(frozen=True)
class AnonymizationSpec:
    """Which strategy to run and with which optional pre/post steps.

    ``identity`` keeps the source direction, which isolates the noise step.
    ``generator`` is only used by ``rejection``; by default it averages
    ``generator_k`` random entries of the (filtered) pool.
    """

    strategy: str
    cross_gender: bool = False
    noise_scale: float | None = None
    farthest: FarthestPoolConfig = field(default_factory=FarthestPoolConfig)
    rejection: RejectionConfig = field(default_factory=RejectionConfig)
    generator: Generator | None = None
    generator_k: int = 10

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {', '.join(STRATEGIES)}")
        if self.noise_scale is not None:
            EmbeddingNoiseConfig(self.noise_scale)


def system_1a_spec() -> AnonymizationSpec:
    """Farthest 200 / average 100, cross-gender, embedding noise scale 0.075."""
    return AnonymizationSpec("farthest_pool_average", cross_gender=True, noise_scale=0.075,
                             farthest=FarthestPoolConfig(200, 100))


def anonymize_utterance(source: SpeakerEmbedding, pool: EmbeddingPool,
                        spec: AnonymizationSpec, seed: int) -> NDArray[np.float64]:
    """Cross-gender filter (optional), then the strategy, then noise (optional).

    Stage seeds are derived from ``seed`` with the labels ``"strategy"`` and
    ``"noise"``.
    """
    check_seed(seed)
    if spec.cross_gender and spec.strategy != "identity":
        pool = cross_gender_filter(pool, source.gender)
    stage_seed = derive_seed(seed, "strategy")
    if spec.strategy == "identity":
        vec = unit(source.vector)
    elif spec.strategy == "random_speaker":
        vec = select_random_speaker(pool, stage_seed, exclude_speaker=source.speaker_id).vector
    elif spec.strategy == "farthest_pool_average":
        vec = farthest_pool_average(source, pool, spec.farthest, stage_seed)
    else:
        generator = spec.generator
        if generator is None:
            generator = pool_average_generator(pool.without_speaker(source.speaker_id), spec.generator_k)
        vec = rejection_sample_anon(source, generator, spec.rejection, stage_seed).vector
    if spec.noise_scale is not None:
        vec = embedding_awgn(vec, EmbeddingNoiseConfig(spec.noise_scale, derive_seed(seed, "noise")))
    return np.array(vec, dtype=np.float64)


# --- file format -----------------------------------------------------------

def loads_pool(text: str) -> EmbeddingPool:
    """Parse the JSON Lines pool format (optional ``{"dimension": d}`` header)."""
    dimension = None
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise ValueError(f"line {lineno}: expected a JSON object")
        if not entries and dimension is None and set(obj) == {"dimension"}:
            d = obj["dimension"]
            if isinstance(d, bool) or not isinstance(d, int) or d < 1:
                raise ValueError(f"line {lineno}: dimension must be a positive integer")
            dimension = d
            continue
        try:
            entry = _entry_from_obj(obj)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if dimension is None:
            dimension = entry.vector.size
        if entry.vector.size != dimension:
            raise ValueError(f"line {lineno}: vector has {entry.vector.size} values, expected {dimension}")
        entries.append(entry)
    if dimension is None:
        raise ValueError("pool file has no entries")
    try:
        return EmbeddingPool(entries, dimension)
    except ValueError as exc:
        raise ValueError(f"pool: {exc}") from None


def _entry_from_obj(obj: dict) -> SpeakerEmbedding:
    for key in ("speaker_id", "gender", "vector"):
        if key not in obj:
            raise ValueError(f"missing field {key!r}")
    if not isinstance(obj["speaker_id"], str):
        raise ValueError("speaker_id must be a string")
    utt = obj.get("utterance_id")
    if utt is not None and not isinstance(utt, str):
        raise ValueError("utterance_id must be a string")
    vec = obj["vector"]
    if not isinstance(vec, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in vec):
        raise ValueError("vector must be an array of numbers")
    return SpeakerEmbedding(obj["speaker_id"], obj["gender"], np.array(vec, dtype=np.float64), utt)


def dumps_pool(entries: Sequence[SpeakerEmbedding], dimension: int | None = None) -> str:
    if dimension is None:
        if not entries:
            raise ValueError("cannot infer dimension of an empty pool")
        dimension = entries[0].vector.size
    lines = [json.dumps({"dimension": int(dimension)})]
    for e in entries:
        obj = {"speaker_id": e.speaker_id, "gender": e.gender}
        if e.utterance_id is not None:
            obj["utterance_id"] = e.utterance_id
        obj["vector"] = json_ready(np.asarray(e.vector).tolist())
        lines.append(json.dumps(obj, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def read_pool(path: str | os.PathLike) -> EmbeddingPool:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return loads_pool(text)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def write_pool(path: str | os.PathLike, entries: Sequence[SpeakerEmbedding],
               dimension: int | None = None) -> None:
    atomic_write_text(path, dumps_pool(entries, dimension))
