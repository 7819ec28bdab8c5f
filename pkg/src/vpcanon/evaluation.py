"""Attack-side privacy evaluation with cosine-scored verification trials.

The attacker is a cosine scorer in the embedding space itself, so absolute
EER values are not comparable to a trained ASV system; only trends across
anonymization settings are meaningful.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from numpy.typing import NDArray

from .embedding import AnonymizationSpec, EmbeddingPool, SpeakerEmbedding, anonymize_utterance
from .fileio import atomic_write_text, dumps_json, fmt_float
from .rng import SeededRng, check_seed, derive_seed

LABELS = ("genuine", "impostor")
CONDITIONS = ("below_range", "EER1", "EER2", "EER3", "EER4")
# lower edges of EER1..EER4, in percent; bands are [lo, next lo)
CONDITION_EDGES = (10.0, 20.0, 30.0, 40.0)


@dataclass(frozen=True)
class Trial:
    enrol_id: str
    test_id: str
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"trial label must be genuine or impostor, got {self.label!r}")

    @property
    def is_genuine(self) -> bool:
        return self.label == "genuine"


class ScoredTrial(NamedTuple):
    trial: Trial
    score: float


@dataclass(frozen=True)
class EerResult:
    eer_percent: float
    threshold: float
    n_genuine: int
    n_impostor: int

    @property
    def condition(self) -> str:
        return classify_condition(self.eer_percent)

    def to_dict(self) -> dict:
        return {
            "eer_percent": self.eer_percent,
            "threshold": self.threshold,
            "n_genuine": self.n_genuine,
            "n_impostor": self.n_impostor,
            "condition": self.condition,
        }


@dataclass(frozen=True)
class SyntheticPopulationConfig:
    n_speakers: int = 50
    utterances_per_speaker: int = 10
    dimension: int = 32
    within_speaker_std: float = 0.05
    seed: int = 0
    gender_split: float = 0.5

    def __post_init__(self):
        if self.n_speakers < 2:
            raise ValueError(f"need at least 2 speakers, got {self.n_speakers}")
        if self.utterances_per_speaker < 1:
            raise ValueError("utterances_per_speaker must be positive")
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if not (math.isfinite(self.within_speaker_std) and self.within_speaker_std >= 0):
            raise ValueError("within_speaker_std must be >= 0")
        if not 0.0 <= self.gender_split <= 1.0:
            raise ValueError("gender_split must be in [0, 1]")
        check_seed(self.seed)


@dataclass(frozen=True)
class Population:
    enrol: EmbeddingPool
    test: EmbeddingPool
    trials: list[Trial]


def trial_scores(trials: Sequence[Trial], enrol: EmbeddingPool, test: EmbeddingPool) -> NDArray[np.float64]:
    """Cosine scores for ``trials`` as an array, in trial order."""
    if enrol.dimension != test.dimension:
        raise ValueError(f"dimension mismatch: enrol {enrol.dimension} vs test {test.dimension}")
    ei = np.empty(len(trials), dtype=np.int64)
    ti = np.empty(len(trials), dtype=np.int64)
    for k, t in enumerate(trials):
        ei[k] = enrol.lookup(t.enrol_id)
        ti[k] = test.lookup(t.test_id)
    a = enrol.matrix[ei]
    b = test.matrix[ti]
    dots = np.einsum("ij,ij->i", a, b)
    norms = np.sqrt(np.einsum("ij,ij->i", a, a) * np.einsum("ij,ij->i", b, b))
    return np.clip(dots / norms, -1.0, 1.0)


def score_trials(trials: Sequence[Trial], enrol: EmbeddingPool, test: EmbeddingPool) -> list[ScoredTrial]:
    scores = trial_scores(trials, enrol, test)
    return [ScoredTrial(t, float(s)) for t, s in zip(trials, scores)]


def split_scores(scored: Sequence[ScoredTrial]) -> tuple[list[float], list[float]]:
    genuine = [s.score for s in scored if s.trial.is_genuine]
    impostor = [s.score for s in scored if not s.trial.is_genuine]
    return genuine, impostor


def compute_eer(genuine_scores, impostor_scores) -> EerResult:
    """Equal error rate from genuine and impostor score lists.

    With FAR(t) = share of impostor scores >= t and FRR(t) = share of genuine
    scores < t, both are evaluated at every distinct score plus one point above them all. The EER is where
    the two curves cross, linearly interpolated between the two sweep points
    around the first point with FAR <= FRR. The reported threshold is
    interpolated the same way.
    """
    g = np.asarray(genuine_scores, dtype=np.float64).ravel()
    i = np.asarray(impostor_scores, dtype=np.float64).ravel()
    if g.size == 0 or i.size == 0:
        raise ValueError("compute_eer needs at least one genuine and one impostor score")
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(i))):
        raise ValueError("scores must be finite")
    thresholds = np.unique(np.concatenate([g, i]))
    # sentinel above every score rejects all trials: FAR 0, FRR 1
    thresholds = np.append(thresholds, np.nextafter(thresholds[-1], np.inf))
    frr = np.searchsorted(np.sort(g), thresholds, side="left") / g.size
    far = (i.size - np.searchsorted(np.sort(i), thresholds, side="left")) / i.size
    diff = far - frr
    # diff[0] == 1 (nothing rejected) and diff[-1] == -1, so a crossing exists
    k = int(np.argmax(diff <= 0))
    if diff[k] == 0:
        eer, thr = far[k], thresholds[k]
    else:
        lam = diff[k - 1] / (diff[k - 1] - diff[k])
        eer = far[k - 1] + lam * (far[k] - far[k - 1])
        thr = thresholds[k - 1] + lam * (thresholds[k] - thresholds[k - 1])
    return EerResult(float(eer) * 100.0, float(thr), int(g.size), int(i.size))


def classify_condition(eer_percent: float) -> str:
    """Map an EER in percent to its privacy band (lower-inclusive)."""
    if not (isinstance(eer_percent, (int, float, np.floating)) and 0.0 <= eer_percent <= 100.0):
        raise ValueError(f"EER must be within [0, 100] percent, got {eer_percent}")
    band = sum(eer_percent >= edge for edge in CONDITION_EDGES)
    return CONDITIONS[band]


def _unit_rows(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return x / np.sqrt(np.einsum("ij,ij->i", x, x))[:, None]


def _ids(prefix: str, n_speakers: int, n_utts: int) -> tuple[list[str], int]:
    return [f"{prefix}{s:0{len(str(n_speakers - 1))}d}" for s in range(n_speakers)], len(str(n_utts - 1))


def _population_pools(cfg: SyntheticPopulationConfig, rng: SeededRng,
                      speaker_prefix: str) -> tuple[EmbeddingPool, EmbeddingPool]:
    n, u, d = cfg.n_speakers, cfg.utterances_per_speaker, cfg.dimension
    means = _unit_rows(rng.normal(n * d).reshape(n, d))
    n_male = math.floor(cfg.gender_split * n + 0.5)
    speakers, width = _ids(speaker_prefix, n, u)
    pools = []
    for side in ("e", "t"):
        noise = rng.normal(n * u * d).reshape(n, u, d)
        vecs = _unit_rows((means[:, None, :] + cfg.within_speaker_std * noise).reshape(n * u, d))
        entries = [
            SpeakerEmbedding(speakers[s], "M" if s < n_male else "F",
                             vecs[s * u + j], f"{speakers[s]}-{side}{j:0{width}d}")
            for s in range(n) for j in range(u)
        ]
        pools.append(EmbeddingPool(entries, d))
    return pools[0], pools[1]


def _sample_distinct(rng: SeededRng, total: int, k: int) -> NDArray[np.int64]:
    if 2 * k > total:
        return np.sort(rng.sample(total, k))
    chosen: set[int] = set()
    while len(chosen) < k:
        for v in rng.integers(total, 2 * (k - len(chosen))):
            if len(chosen) == k:
                break
            chosen.add(int(v))
    return np.array(sorted(chosen), dtype=np.int64)


def generate_population(cfg: SyntheticPopulationConfig, speaker_prefix: str = "spk") -> Population:
    """Seeded synthetic enrol/test pools plus a balanced trial list.

    Each speaker gets a mean direction uniform on the unit sphere; every
    utterance is that mean plus per-dimension Gaussian noise, renormalized.
    Both pools hold ``n_speakers * utterances_per_speaker`` entries. The first
    ``round(gender_split * n_speakers)`` speakers are male. Genuine trials are
    all same-speaker (enrol, test) pairs; the same number of cross-speaker
    pairs is sampled without replacement as impostor trials.
    """
    rng = SeededRng(cfg.seed)
    enrol, test = _population_pools(cfg, rng, speaker_prefix)
    n, u = cfg.n_speakers, cfg.utterances_per_speaker
    trials = []
    for s in range(n):
        for a in range(u):
            for b in range(u):
                trials.append(Trial(enrol[s * u + a].utterance_id, test[s * u + b].utterance_id, "genuine"))
    per_enrol = (n - 1) * u
    for p in _sample_distinct(rng, n * u * per_enrol, len(trials)):
        a, j = divmod(int(p), per_enrol)
        s_test, b = divmod(j, u)
        if s_test >= a // u:
            s_test += 1
        trials.append(Trial(enrol[a].utterance_id, test[s_test * u + b].utterance_id, "impostor"))
    return Population(enrol, test, trials)


def target_pool(dimension: int, seed: int, n_speakers: int = 200, utterances_per_speaker: int = 2,
                within_speaker_std: float = 0.05) -> EmbeddingPool:
    """Disjoint synthetic pool of anonymization targets (speaker ids ``pool*``)."""
    cfg = SyntheticPopulationConfig(n_speakers, utterances_per_speaker, dimension,
                                    within_speaker_std, seed, 0.5)
    enrol, _ = _population_pools(cfg, SeededRng(seed), "pool")
    return enrol


def anonymize_pool(pool: EmbeddingPool, targets: EmbeddingPool, spec: AnonymizationSpec,
                   seed: int) -> EmbeddingPool:
    """Anonymize every entry; entry ``k`` uses ``derive_seed(seed, "utterance", key)``."""
    out = []
    for e in pool:
        key = e.utterance_id if e.utterance_id is not None else e.speaker_id
        out.append(e.with_vector(anonymize_utterance(e, targets, spec, derive_seed(seed, "utterance", key))))
    return EmbeddingPool(out, pool.dimension)


def run_attack_experiment(cfg: SyntheticPopulationConfig, spec: AnonymizationSpec | None, seed: int,
                          pool: EmbeddingPool | None = None) -> EerResult:
    """Anonymize the test side of a synthetic population and measure the attacker EER.

    Enrolment embeddings are left as-is. Without ``pool`` a disjoint
    400-entry target pool is generated from ``derive_seed(seed, "target-pool")``.
    ``spec=None`` scores the clean population.
    """
    check_seed(seed)
    population = generate_population(cfg)
    test = population.test
    if spec is not None:
        if pool is None:
            pool = target_pool(cfg.dimension, derive_seed(seed, "target-pool"),
                               within_speaker_std=cfg.within_speaker_std)
        test = anonymize_pool(test, pool, spec, derive_seed(seed, "anonymize"))
    scores = trial_scores(population.trials, population.enrol, test)
    genuine = np.array([t.is_genuine for t in population.trials])
    return compute_eer(scores[genuine], scores[~genuine])


# --- file formats ----------------------------------------------------------

def loads_trials(text: str) -> list[Trial]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["enrol_id", "test_id", "label"]:
        raise ValueError("line 1: expected header 'enrol_id,test_id,label'")
    trials = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ValueError(f"line {lineno}: expected 3 fields, got {len(row)}")
        try:
            trials.append(Trial(row[0], row[1], row[2].strip()))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return trials


def dumps_trials(trials: Sequence[Trial]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["enrol_id", "test_id", "label"])
    for t in trials:
        w.writerow([t.enrol_id, t.test_id, t.label])
    return buf.getvalue()


def dumps_scores(scored: Sequence[ScoredTrial]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["enrol_id", "test_id", "score"])
    for st in scored:
        w.writerow([st.trial.enrol_id, st.trial.test_id, fmt_float(st.score)])
    return buf.getvalue()


def loads_scores(text: str) -> list[tuple[str, str, float]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["enrol_id", "test_id", "score"]:
        raise ValueError("line 1: expected header 'enrol_id,test_id,score'")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            rows.append((row[0], row[1], float(row[2])))
        except (IndexError, ValueError):
            raise ValueError(f"line {lineno}: malformed score row") from None
    return rows


def dumps_report(result: EerResult) -> str:
    return dumps_json(result.to_dict())


def read_trials(path: str | os.PathLike) -> list[Trial]:
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    try:
        return loads_trials(text)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def write_trials(path: str | os.PathLike, trials: Sequence[Trial]) -> None:
    atomic_write_text(path, dumps_trials(trials))
