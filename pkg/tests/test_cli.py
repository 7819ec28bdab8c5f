import json

import pytest

from vpcanon.audio import sine_wave, write_wav
from vpcanon.cli import main
from vpcanon.f0 import loads_track, vibrato_track, write_track
from vpcanon.prosody import MultiplierRange, PhonemeProsody, write_prosody_csv


def run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


@pytest.fixture
def population(tmp_path):
    out = tmp_path / "pop"
    assert run("gen-population", "--output", out, "--speakers", 8, "--utterances", 3, "--dim", 8,
               "--pool-speakers", 20, "--seed", 4) == 0
    return out


def test_no_subcommand_is_usage_error(capsys):
    assert run() == 1


def test_f0_transform_writes_track_and_summary(tmp_path):
    write_track(tmp_path / "in.json", vibrato_track())
    assert run("f0-transform", "--input", tmp_path / "in.json", "--output", tmp_path / "out.json") == 0
    summary = json.loads((tmp_path / "out.summary.json").read_text())
    assert summary["after"]["std_hz"] < summary["before"]["std_hz"]
    assert len(loads_track((tmp_path / "out.json").read_text())) == 400


def test_f0_transform_alpha_zero_keeps_track(tmp_path):
    src = vibrato_track(50)
    write_track(tmp_path / "in.json", src)
    assert run("f0-transform", "--input", tmp_path / "in.json", "--output", tmp_path / "out.json",
               "--alpha", 0) == 0
    assert loads_track((tmp_path / "out.json").read_text()) == loads_track((tmp_path / "in.json").read_text())


def test_f0_transform_noise_and_csv(tmp_path):
    write_track(tmp_path / "in.json", vibrato_track(30))
    assert run("f0-transform", "--input", tmp_path / "in.json", "--output", tmp_path / "out.csv",
               "--snr-db", 10, "--format", "csv", "--summary", tmp_path / "s.json") == 0
    lines = (tmp_path / "out.csv").read_text().splitlines()
    assert lines[0] == "frame,time_ms,f0_hz,voiced" and len(lines) == 31
    assert (tmp_path / "s.json").exists()


def test_f0_transform_bad_alpha_is_usage_error(tmp_path, capsys):
    write_track(tmp_path / "in.json", vibrato_track(10))
    assert run("f0-transform", "--input", tmp_path / "in.json", "--output", tmp_path / "o.json",
               "--alpha", 1.5) == 1
    assert not (tmp_path / "o.json").exists()


def test_f0_transform_bad_input_no_outputs(tmp_path, capsys):
    (tmp_path / "in.json").write_text('{"frame_period_ms": 10, "f0_hz": [100, 0], "voiced": [1, 1]}')
    assert run("f0-transform", "--input", tmp_path / "in.json", "--output", tmp_path / "o.json") == 2
    assert "f0_hz[1]" in capsys.readouterr().err
    assert sorted(p.name for p in tmp_path.iterdir()) == ["in.json"]


def test_gen_population_files(population):
    assert sorted(p.name for p in population.iterdir()) == ["enrol.jsonl", "pool.jsonl", "test.jsonl", "trials.csv"]
    trials = (population / "trials.csv").read_text().splitlines()
    assert len(trials) == 1 + 2 * 8 * 3 * 3


@pytest.mark.parametrize("strategy", ["random", "farthest", "rejection", "identity"])
def test_anon_embed_strategies(population, tmp_path, strategy):
    out = tmp_path / f"{strategy}.jsonl"
    extra = ["--k-far", 10, "--k-select", 5] if strategy == "farthest" else []
    assert run("anon-embed", "--input", population / "test.jsonl", "--pool", population / "pool.jsonl",
               "--output", out, "--strategy", strategy, "--noise-scale", 0.01, *extra) == 0
    src = (population / "test.jsonl").read_text().splitlines()
    got = out.read_text().splitlines()
    assert len(got) == len(src)
    assert [json.loads(a).get("utterance_id") for a in got[1:]] == [json.loads(b).get("utterance_id") for b in src[1:]]


def test_anon_embed_missing_pool(population, tmp_path, capsys):
    missing = tmp_path / "nope.jsonl"
    assert run("anon-embed", "--input", population / "test.jsonl", "--pool", missing,
               "--output", tmp_path / "o.jsonl") == 2
    assert str(missing) in capsys.readouterr().err
    assert not (tmp_path / "o.jsonl").exists()


def test_eval_eer_report_and_scores(population, tmp_path):
    out = tmp_path / "eer.json"
    assert run("eval-eer", "--trials", population / "trials.csv", "--enrol", population / "enrol.jsonl",
               "--test", population / "test.jsonl", "--output", out) == 0
    report = json.loads(out.read_text())
    assert report["eer_percent"] == 0.0 and report["condition"] == "below_range"
    scores = (tmp_path / "eer.scores.csv").read_text().splitlines()
    assert scores[0] == "enrol_id,test_id,score" and len(scores) == 1 + 144

    # precomputed scores give the same report
    again = tmp_path / "eer2.json"
    assert run("eval-eer", "--trials", population / "trials.csv", "--scores-input",
               tmp_path / "eer.scores.csv", "--output", again) == 0
    assert json.loads(again.read_text())["eer_percent"] == report["eer_percent"]


def test_eval_eer_anonymized_test_side(population, tmp_path):
    anon = tmp_path / "anon.jsonl"
    assert run("anon-embed", "--input", population / "test.jsonl", "--pool", population / "pool.jsonl",
               "--output", anon, "--strategy", "random") == 0
    out = tmp_path / "eer.json"
    assert run("eval-eer", "--trials", population / "trials.csv", "--enrol", population / "enrol.jsonl",
               "--test", anon, "--output", out) == 0
    assert json.loads(out.read_text())["eer_percent"] >= 30.0


def test_eval_eer_needs_pools(population, tmp_path, capsys):
    assert run("eval-eer", "--trials", population / "trials.csv", "--output", tmp_path / "o.json") == 1


def test_sweep_alpha_five_rows(tmp_path):
    out = tmp_path / "a.csv"
    assert run("sweep", "--alpha", "0,0.25,0.5,0.75,1", "--output", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "parameter,value,std_hz"
    stds = [float(r.split(",")[2]) for r in lines[1:]]
    assert len(stds) == 5 and all(b <= a for a, b in zip(stds, stds[1:]))


def test_sweep_single_point(tmp_path):
    out = tmp_path / "a.csv"
    assert run("sweep", "--alpha", "0.5", "--output", out) == 0
    assert len(out.read_text().splitlines()) == 2


def test_sweep_noise_scale_rows(tmp_path):
    out = tmp_path / "n.csv"
    assert run("sweep", "--noise-scale", "0,0.075,0.08,0.09", "--speakers", 10, "--utterances", 3,
               "--dim", 16, "--repeats", 3, "--output", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "parameter,value,eer_percent"
    eers = [float(r.split(",")[2]) for r in lines[1:]]
    assert len(eers) == 4 and all(b >= a for a, b in zip(eers, eers[1:]))


def test_sweep_snr_and_json(tmp_path):
    out = tmp_path / "s.json"
    assert run("sweep", "--snr-db", "20,10,0", "--format", "json", "--output", out) == 0
    rows = json.loads(out.read_text())
    assert [r["value"] for r in rows] == ["20", "10", "0"]
    assert rows[0]["std_hz"] < rows[2]["std_hz"]


def test_sweep_multiplier_range_from_csv(tmp_path):
    write_prosody_csv(tmp_path / "p.csv", [PhonemeProsody(f"p{k}", 1.0, 1.0, 2) for k in range(500)])
    out = tmp_path / "m.csv"
    assert run("sweep", "--multiplier-range", "0.6:1.4,1:1", "--input", tmp_path / "p.csv", "--output", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "parameter,value,pitch_std"
    assert lines[2] == "multiplier_range,1:1,0"
    assert str(MultiplierRange(0.6, 1.4)) in lines[1]


@pytest.mark.parametrize("grid", [["--alpha", "0.5,x"], ["--alpha", ""], ["--multiplier-range", "0.6-1.4"],
                                  ["--alpha", "0.5", "--snr-db", "10"], []])
def test_sweep_malformed_grid(tmp_path, capsys, grid):
    out = tmp_path / "g.csv"
    assert run("sweep", *grid, "--output", out) == 1
    assert not out.exists()


def test_sweep_alpha_out_of_range(tmp_path, capsys):
    assert run("sweep", "--alpha", "0.5,2", "--output", tmp_path / "g.csv") == 1
    assert not (tmp_path / "g.csv").exists()


def test_extract_f0(tmp_path):
    write_wav(tmp_path / "a.wav", sine_wave(220.0, 0.5))
    assert run("extract-f0", "--input", tmp_path / "a.wav", "--output", tmp_path / "f0.json") == 0
    track = loads_track((tmp_path / "f0.json").read_text())
    assert track.n_voiced > 0


def test_extract_f0_bad_wav(tmp_path, capsys):
    (tmp_path / "bad.wav").write_bytes(b"RIFF....")
    assert run("extract-f0", "--input", tmp_path / "bad.wav", "--output", tmp_path / "f0.json") == 2
    assert "bad.wav" in capsys.readouterr().err


def test_bad_seed_is_usage_error(tmp_path, capsys):
    assert run("sweep", "--alpha", "0.5", "--seed", "-3", "--output", tmp_path / "g.csv") == 1
