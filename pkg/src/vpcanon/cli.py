"""Command-line entry point.

Every subcommand is a pure function of its input files, flags, and ``--seed``;
stochastic stages get their own seed via ``derive_seed(seed, <stage label>)``.
Outputs are written through a temp file and renamed into place only after all
processing succeeded.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import statistics
import sys
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .audio import extract_f0_autocorr, read_wav
from .embedding import (
    AnonymizationSpec,
    FarthestPoolConfig,
    RejectionConfig,
    anonymize_utterance,
    dumps_pool,
    read_pool,
)
from .evaluation import (
    SyntheticPopulationConfig,
    compute_eer,
    dumps_report,
    dumps_scores,
    dumps_trials,
    generate_population,
    loads_scores,
    read_trials,
    run_attack_experiment,
    score_trials,
    split_scores,
    target_pool,
)
from .f0 import (
    F0NoiseConfig,
    F0Track,
    MeanReversionConfig,
    awgn_f0,
    dumps_track,
    dumps_track_csv,
    f0_summary,
    mean_reversion_f0,
    read_track,
    vibrato_track,
)
from .fileio import atomic_write_text, dumps_json, fmt_float
from .prosody import MultiplierRange, PhonemeProsody, randomize_prosody, read_prosody_csv
from .rng import SEED_MAX, derive_seed

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

STRATEGY_FLAGS = {
    "random": "random_speaker",
    "farthest": "farthest_pool_average",
    "rejection": "rejection",
    "identity": "identity",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value <= SEED_MAX:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64 - 1]")
    return value


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed grid {text!r}: expected comma-separated numbers") from None
    return values


def _range_list(text: str) -> list[MultiplierRange]:
    try:
        return [MultiplierRange.parse(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"malformed grid {text!r}: {exc}") from None


def _config(factory: Callable, *args, **kwargs):
    try:
        return factory(*args, **kwargs)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None


def _sibling(path: str, suffix: str) -> Path:
    p = Path(path)
    return p.with_name(p.stem + suffix)


# --- subcommands -------------------------------------------------------------

def cmd_f0_transform(args) -> int:
    mr = _config(MeanReversionConfig, args.alpha, args.window)
    noise = None
    if args.snr_db is not None:
        noise = _config(F0NoiseConfig, args.snr_db, args.floor_hz, derive_seed(args.seed, "f0-awgn"))
    track = read_track(args.input)
    out = mean_reversion_f0(track, mr)
    if noise is not None:
        out = awgn_f0(out, noise)
    text = dumps_track_csv(out) if args.format == "csv" else dumps_track(out)
    summary = dumps_json({"before": f0_summary(track), "after": f0_summary(out)})
    atomic_write_text(args.output, text)
    atomic_write_text(args.summary or _sibling(args.output, ".summary.json"), summary)
    return EXIT_OK


def _anon_spec(args) -> AnonymizationSpec:
    return _config(
        AnonymizationSpec,
        STRATEGY_FLAGS[args.strategy],
        cross_gender=args.cross_gender,
        noise_scale=args.noise_scale,
        farthest=_config(FarthestPoolConfig, args.k_far, args.k_select, not args.no_renormalize),
        rejection=_config(RejectionConfig, args.threshold, args.max_attempts, args.accept_when),
    )


def cmd_anon_embed(args) -> int:
    spec = _anon_spec(args)
    pool = read_pool(args.pool)
    sources = read_pool(args.input)
    if sources.dimension != pool.dimension:
        raise ValueError(f"dimension mismatch: input {sources.dimension} vs pool {pool.dimension}")
    out = []
    for k, src in enumerate(sources):
        key = src.utterance_id if src.utterance_id is not None else f"{src.speaker_id}#{k}"
        vec = anonymize_utterance(src, pool, spec, derive_seed(args.seed, "anon-embed", key))
        out.append(src.with_vector(vec))
    atomic_write_text(args.output, dumps_pool(out, pool.dimension))
    return EXIT_OK


def cmd_eval_eer(args) -> int:
    trials = read_trials(args.trials)
    if args.scores_input:
        with open(args.scores_input, encoding="utf-8", newline="") as fh:
            rows = loads_scores(fh.read())
        labels = {(t.enrol_id, t.test_id): t for t in trials}
        scored = []
        for enrol_id, test_id, score in rows:
            if (enrol_id, test_id) not in labels:
                raise ValueError(f"score row {enrol_id},{test_id} has no matching trial")
            scored.append((labels[(enrol_id, test_id)], score))
        genuine = [s for t, s in scored if t.is_genuine]
        impostor = [s for t, s in scored if not t.is_genuine]
        scores_text = None
    else:
        if not (args.enrol and args.test):
            raise UsageError("--enrol and --test are required unless --scores-input is given")
        scored_trials = score_trials(trials, read_pool(args.enrol), read_pool(args.test))
        genuine, impostor = split_scores(scored_trials)
        scores_text = dumps_scores(scored_trials)
    report = dumps_report(compute_eer(genuine, impostor))
    if scores_text is not None:
        atomic_write_text(args.scores or _sibling(args.output, ".scores.csv"), scores_text)
    atomic_write_text(args.output, report)
    return EXIT_OK


def _sweep_rows(args) -> tuple[str, str, list[tuple[str, float]]]:
    if args.noise_scale is not None:
        rows = []
        strategy = STRATEGY_FLAGS[args.strategy]
        for scale in args.noise_scale:
            spec = _config(AnonymizationSpec, strategy, cross_gender=args.cross_gender, noise_scale=scale)
            eers = []
            for r in range(args.repeats):
                run_seed = derive_seed(args.seed, "sweep", r)
                cfg = _config(SyntheticPopulationConfig, args.speakers, args.utterances, args.dim,
                              args.within_std, derive_seed(run_seed, "population"))
                eers.append(run_attack_experiment(cfg, spec, run_seed).eer_percent)
            rows.append((fmt_float(scale), statistics.median(eers)))
        return "noise_scale", "eer_percent", rows

    if args.multiplier_range is not None:
        if args.input:
            seq = read_prosody_csv(args.input)
        else:
            seq = [PhonemeProsody(f"p{k}", 1.0, 1.0, 1) for k in range(1000)]
        rows = []
        for rng_range in args.multiplier_range:
            out = randomize_prosody(seq, rng_range, derive_seed(args.seed, "prosody"))
            pitches = [p.pitch for p in out]
            rows.append((str(rng_range), statistics.pstdev(pitches) if pitches else 0.0))
        return "multiplier_range", "pitch_std", rows

    track: F0Track = read_track(args.input) if args.input else vibrato_track()
    rows = []
    if args.alpha is not None:
        for alpha in args.alpha:
            out = mean_reversion_f0(track, _config(MeanReversionConfig, alpha, args.window))
            rows.append((fmt_float(alpha), f0_summary(out)["std_hz"]))
        return "alpha", "std_hz", rows
    base = mean_reversion_f0(track, _config(MeanReversionConfig, args.base_alpha, args.window))
    for snr in args.snr_db:
        cfg = _config(F0NoiseConfig, snr, args.floor_hz, derive_seed(args.seed, "f0-awgn"))
        rows.append((fmt_float(snr), f0_summary(awgn_f0(base, cfg))["std_hz"]))
    return "snr_db", "std_hz", rows


def cmd_sweep(args) -> int:
    parameter, metric, rows = _sweep_rows(args)
    if args.format == "json":
        text = dumps_json([{"parameter": parameter, "value": v, metric: m} for v, m in rows])
    else:
        lines = [f"parameter,value,{metric}"]
        lines += [f"{parameter},{v},{'' if m is None else fmt_float(m)}" for v, m in rows]
        text = "\n".join(lines) + "\n"
    atomic_write_text(args.output, text)
    return EXIT_OK


def cmd_gen_population(args) -> int:
    cfg = _config(SyntheticPopulationConfig, args.speakers, args.utterances, args.dim,
                  args.within_std, derive_seed(args.seed, "population"), args.gender_split)
    pop = generate_population(cfg)
    files = {
        "enrol.jsonl": dumps_pool(pop.enrol.entries, cfg.dimension),
        "test.jsonl": dumps_pool(pop.test.entries, cfg.dimension),
        "trials.csv": dumps_trials(pop.trials),
    }
    if args.pool_speakers > 0:
        pool = target_pool(cfg.dimension, derive_seed(args.seed, "target-pool"),
                           n_speakers=args.pool_speakers, within_speaker_std=cfg.within_speaker_std)
        files["pool.jsonl"] = dumps_pool(pool.entries, cfg.dimension)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        atomic_write_text(out_dir / name, text)
    return EXIT_OK


def cmd_extract_f0(args) -> int:
    wave_ = read_wav(args.input)
    track = extract_f0_autocorr(wave_, args.frame_ms, args.hop_ms, args.fmin, args.fmax, args.threshold)
    atomic_write_text(args.output, dumps_track_csv(track) if args.format == "csv" else dumps_track(track))
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=0, help="global 64-bit seed (default 0)")

    parser = _Parser(prog="vpcanon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("f0-transform", parents=[common], help="mean reversion F0, optional AWGN")
    p.add_argument("--input", required=True, help="F0 track JSON")
    p.add_argument("--output", required=True)
    p.add_argument("--summary", help="summary JSON path (default: <output stem>.summary.json)")
    p.add_argument("--alpha", type=float, default=0.75)
    p.add_argument("--window", type=int, default=32, help="moving-average length in voiced frames")
    p.add_argument("--snr-db", type=float, help="add white Gaussian noise at this SNR")
    p.add_argument("--floor-hz", type=float, default=10.0)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_f0_transform)

    p = sub.add_parser("anon-embed", parents=[common], help="anonymize speaker embeddings")
    p.add_argument("--input", required=True, help="source embeddings (JSONL)")
    p.add_argument("--pool", required=True, help="target pool (JSONL)")
    p.add_argument("--output", required=True)
    p.add_argument("--strategy", choices=tuple(STRATEGY_FLAGS), default="random")
    p.add_argument("--cross-gender", action="store_true")
    p.add_argument("--noise-scale", type=float)
    p.add_argument("--k-far", type=int, default=200)
    p.add_argument("--k-select", type=int, default=100)
    p.add_argument("--no-renormalize", action="store_true")
    p.add_argument("--threshold", type=float, default=0.3, help="rejection distance threshold")
    p.add_argument("--max-attempts", type=int, default=30)
    p.add_argument("--accept-when", choices=("distance_below", "distance_above"), default="distance_below")
    p.add_argument("--format", choices=("jsonl",), default="jsonl")
    p.set_defaults(func=cmd_anon_embed)

    p = sub.add_parser("eval-eer", parents=[common], help="score trials and report the EER")
    p.add_argument("--trials", required=True)
    p.add_argument("--enrol")
    p.add_argument("--test")
    p.add_argument("--scores-input", help="precomputed scores CSV instead of embedding pools")
    p.add_argument("--output", required=True, help="EER report JSON")
    p.add_argument("--scores", help="scores CSV path (default: <output stem>.scores.csv)")
    p.add_argument("--format", choices=("json",), default="json")
    p.set_defaults(func=cmd_eval_eer)

    p = sub.add_parser("sweep", parents=[common], help="plot-ready grid over one parameter")
    grid = p.add_mutually_exclusive_group(required=True)
    grid.add_argument("--alpha", type=_float_list)
    grid.add_argument("--snr-db", type=_float_list)
    grid.add_argument("--noise-scale", type=_float_list)
    grid.add_argument("--multiplier-range", type=_range_list, help="e.g. 0.6:1.4,0.9:1.1")
    p.add_argument("--input", help="F0 track JSON or prosody CSV (default: synthetic)")
    p.add_argument("--output", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--window", type=int, default=32)
    p.add_argument("--base-alpha", type=float, default=0.75, help="mean reversion applied before --snr-db noise")
    p.add_argument("--floor-hz", type=float, default=10.0)
    p.add_argument("--strategy", choices=tuple(STRATEGY_FLAGS), default="identity")
    p.add_argument("--cross-gender", action="store_true")
    p.add_argument("--speakers", type=int, default=50)
    p.add_argument("--utterances", type=int, default=10)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--within-std", type=float, default=0.05)
    p.add_argument("--repeats", type=int, default=5, help="seeds per grid point (median EER)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-population", parents=[common], help="write a synthetic population")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--speakers", type=int, default=50)
    p.add_argument("--utterances", type=int, default=10)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--within-std", type=float, default=0.05)
    p.add_argument("--gender-split", type=float, default=0.5)
    p.add_argument("--pool-speakers", type=int, default=200, help="target pool speakers (0 to skip)")
    p.set_defaults(func=cmd_gen_population)

    p = sub.add_parser("extract-f0", parents=[common], help="autocorrelation F0 from a WAV file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--frame-ms", type=float, default=25.0)
    p.add_argument("--hop-ms", type=float, default=10.0)
    p.add_argument("--fmin", type=float, default=60.0)
    p.add_argument("--fmax", type=float, default=400.0)
    p.add_argument("--threshold", type=float, default=0.45)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_extract_f0)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    prog = f"vpcanon {args.command}"
    if getattr(args, "repeats", 1) < 1:
        print(f"{prog}: error: --repeats must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"{prog}: error: no such file: {exc.filename}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"{prog}: error: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
