import json
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from oracles import eer_sweep_oracle
from vpcanon.embedding import AnonymizationSpec, EmbeddingPool, SpeakerEmbedding
from vpcanon.evaluation import (
    EerResult,
    SyntheticPopulationConfig,
    Trial,
    classify_condition,
    compute_eer,
    dumps_report,
    dumps_scores,
    dumps_trials,
    generate_population,
    loads_scores,
    loads_trials,
    run_attack_experiment,
    score_trials,
)

score_lists = st.lists(st.sampled_from([round(0.05 * k, 2) for k in range(-20, 21)]) | st.floats(-1, 1),
                       min_size=1, max_size=40)


def _pool(named):
    return EmbeddingPool([SpeakerEmbedding(k, "M", np.asarray(v, dtype=float), k) for k, v in named.items()])


# --- scoring -----------------------------------------------------------------

def test_score_trials_hand_values():
    enrol = _pool({"e1": [1, 0], "e2": [3, 4]})
    test = _pool({"t1": [1, 1], "t2": [0, 2], "t3": [-4, 3], "same": [3, 4]})
    trials = [Trial("e1", "t1", "genuine"), Trial("e2", "t2", "impostor"),
              Trial("e2", "t3", "impostor"), Trial("e2", "same", "genuine")]
    scores = [s.score for s in score_trials(trials, enrol, test)]
    want = [1 / math.sqrt(2), 0.8, 0.0, 1.0]
    assert scores == pytest.approx(want, abs=1e-12)
    assert scores[3] == 1.0
    assert [s.trial for s in score_trials(trials, enrol, test)] == trials


def test_score_trials_unresolved_id():
    enrol = _pool({"e1": [1, 0]})
    with pytest.raises(KeyError, match="ghost"):
        score_trials([Trial("e1", "ghost", "genuine")], enrol, enrol)


# --- EER ---------------------------------------------------------------------

def test_eer_examples():
    assert compute_eer([0.9, 0.8], [0.1, 0.2]).eer_percent == 0.0
    assert compute_eer([0.1, 0.9], [0.1, 0.9]).eer_percent == 50.0
    # eer_sweep_oracle gives 100/3
    r = compute_eer([0.8, 0.6, 0.4], [0.7, 0.3, 0.2])
    assert r.eer_percent == pytest.approx(100 / 3, abs=1e-9)
    assert (r.n_genuine, r.n_impostor) == (3, 3)


def test_eer_interpolates_between_points():
    # crossing falls strictly between two sweep points
    r = compute_eer([0.2, 0.3], [0.1])
    assert r.eer_percent == pytest.approx(eer_sweep_oracle([0.2, 0.3], [0.1]), abs=1e-9)
    r = compute_eer([0.1, 0.5, 0.9], [0.4, 0.6])
    assert r.eer_percent == pytest.approx(eer_sweep_oracle([0.1, 0.5, 0.9], [0.4, 0.6]), abs=1e-9)


def test_eer_fully_inverted_scores():
    assert compute_eer([0.1, 0.2], [0.8, 0.9]).eer_percent == 100.0


def test_eer_errors():
    with pytest.raises(ValueError):
        compute_eer([], [0.1])
    with pytest.raises(ValueError):
        compute_eer([0.1], [])
    with pytest.raises(ValueError):
        compute_eer([float("nan")], [0.1])


@given(score_lists, score_lists)
def test_eer_matches_sweep_oracle(g, i):
    assert compute_eer(g, i).eer_percent == pytest.approx(eer_sweep_oracle(g, i), abs=1e-9)


@given(score_lists, score_lists)
def test_eer_rank_invariant(g, i):
    both = np.concatenate([g, i])
    # skip draws where float rounding merges distinct scores
    assume(np.unique(np.exp(3 * both)).size == np.unique(both).size)
    base = compute_eer(g, i).eer_percent
    warped = compute_eer(np.exp(3 * np.asarray(g)), np.exp(3 * np.asarray(i))).eer_percent
    assert warped == pytest.approx(base, abs=1e-9)


@given(score_lists, score_lists)
def test_eer_label_swap_symmetry(g, i):
    swapped = compute_eer([-s for s in i], [-s for s in g]).eer_percent
    assert swapped == pytest.approx(compute_eer(g, i).eer_percent, abs=1e-9)


def test_eer_same_distribution_near_half():
    rng = np.random.default_rng(4)
    r = compute_eer(rng.normal(size=10_000), rng.normal(size=10_000))
    assert abs(r.eer_percent - 50.0) <= 2.0


# --- condition bands ---------------------------------------------------------

@pytest.mark.parametrize("eer, band", [
    (0.0, "below_range"), (9.999, "below_range"), (10.0, "EER1"), (12.09, "EER1"), (16.88, "EER1"),
    (20.0, "EER2"), (21.47, "EER2"), (20.07, "EER2"), (30.0, "EER3"), (38.56, "EER3"),
    (40.0, "EER4"), (42.46, "EER4"), (100.0, "EER4"),
])
def test_condition_bands(eer, band):
    assert classify_condition(eer) == band


def test_condition_monotone_and_total():
    order = {c: k for k, c in enumerate(["below_range", "EER1", "EER2", "EER3", "EER4"])}
    grid = np.linspace(0, 100, 10_001)
    ranks = [order[classify_condition(float(x))] for x in grid]
    assert all(b >= a for a, b in zip(ranks, ranks[1:]))
    for bad in (-0.1, 100.1, float("nan")):
        with pytest.raises(ValueError):
            classify_condition(bad)


# --- synthetic population ----------------------------------------------------

def test_population_counts_and_balance():
    cfg = SyntheticPopulationConfig(6, 4, 8, 0.1, seed=2, gender_split=0.5)
    pop = generate_population(cfg)
    assert len(pop.enrol) == len(pop.test) == 24
    genuine = [t for t in pop.trials if t.is_genuine]
    impostor = [t for t in pop.trials if not t.is_genuine]
    assert len(genuine) == 6 * 4 * 4 == len(impostor)
    assert len({(t.enrol_id, t.test_id) for t in impostor}) == len(impostor)
    spk = {e.utterance_id: e.speaker_id for e in list(pop.enrol) + list(pop.test)}
    assert all(spk[t.enrol_id] == spk[t.test_id] for t in genuine)
    assert all(spk[t.enrol_id] != spk[t.test_id] for t in impostor)
    assert pop.enrol.genders.count("M") == 12


def test_population_zero_noise_genuine_scores_exactly_one():
    pop = generate_population(SyntheticPopulationConfig(5, 3, 16, 0.0, seed=1))
    scored = score_trials(pop.trials, pop.enrol, pop.test)
    assert all(s.score == 1.0 for s in scored if s.trial.is_genuine)


def test_population_deterministic():
    cfg = SyntheticPopulationConfig(5, 3, 8, 0.05, seed=9)
    a, b = generate_population(cfg), generate_population(cfg)
    assert a.trials == b.trials
    assert a.enrol.matrix.tobytes() == b.enrol.matrix.tobytes()
    assert a.test.matrix.tobytes() == b.test.matrix.tobytes()


def test_population_two_speakers_uses_every_cross_pair():
    pop = generate_population(SyntheticPopulationConfig(2, 2, 4, 0.1, seed=0))
    assert sum(not t.is_genuine for t in pop.trials) == 8


def test_population_validation():
    with pytest.raises(ValueError):
        SyntheticPopulationConfig(n_speakers=1)
    with pytest.raises(ValueError):
        SyntheticPopulationConfig(gender_split=1.5)


# --- attack experiment -------------------------------------------------------

def test_attack_no_anonymization_zero_noise():
    cfg = SyntheticPopulationConfig(10, 4, 16, 0.0, seed=3)
    assert run_attack_experiment(cfg, None, seed=3).eer_percent == 0.0


def test_attack_deterministic():
    cfg = SyntheticPopulationConfig(10, 4, 16, 0.05, seed=3)
    spec = AnonymizationSpec("identity", noise_scale=0.3)
    assert run_attack_experiment(cfg, spec, 5) == run_attack_experiment(cfg, spec, 5)


def test_attack_heavy_noise_trend_strictly_rises():
    # scales up to 0.09 leave d=32 clusters separated; larger ones exercise the trend
    cfg = SyntheticPopulationConfig(30, 6, 32, 0.05, seed=4)
    eers = [run_attack_experiment(cfg, AnonymizationSpec("identity", noise_scale=s), 4).eer_percent
            for s in (0.1, 0.3, 0.6, 1.2)]
    assert all(b > a for a, b in zip(eers, eers[1:]))


def test_attack_farthest_pool_destroys_identity():
    cfg = SyntheticPopulationConfig(20, 4, 16, 0.05, seed=8)
    spec = AnonymizationSpec("farthest_pool_average", cross_gender=True, noise_scale=0.075)
    assert run_attack_experiment(cfg, spec, 8).eer_percent >= 40.0


# --- files -------------------------------------------------------------------

def test_trials_csv_round_trip():
    trials = [Trial("a", "b", "genuine"), Trial("a", "c", "impostor")]
    text = dumps_trials(trials)
    assert text.splitlines()[0] == "enrol_id,test_id,label"
    assert loads_trials(text) == trials
    with pytest.raises(ValueError, match="line 2"):
        loads_trials("enrol_id,test_id,label\na,b,friend\n")


def test_scores_csv_nine_digits():
    enrol = _pool({"e1": [1, 0]})
    test = _pool({"t1": [1, 1]})
    text = dumps_scores(score_trials([Trial("e1", "t1", "genuine")], enrol, test))
    assert text == "enrol_id,test_id,score\ne1,t1,0.707106781\n"
    assert loads_scores(text) == [("e1", "t1", 0.707106781)]


def test_report_contains_condition():
    text = dumps_report(EerResult(42.46, 0.1, 10, 20))
    assert '"condition": "EER4"' in text
    assert list(json.loads(text)) == ["eer_percent", "threshold", "n_genuine", "n_impostor", "condition"]
