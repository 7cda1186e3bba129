#!/usr/bin/env python3
"""
Command-line interface for the viseme recognition toolkit
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .analysis import (
    compare_declines,
    compare_features,
    correlation_table,
    decline_curve,
    feature_table,
    fold_stats,
    rank_visemes,
    viseme_probabilities,
)
from .config import config
from .corpus import Corpus, generate_corpus, load_corpus, load_folds, make_folds, write_corpus
from .decoding import ViterbiDecoder, force_align, segments_to_transcript
from .errors import InputFileError, VisemeToolkitError
from .features import load_observations, load_segments, read_text, save_frames, save_segments
from .formatters import ReportFormatter
from .hmm import load_model_set, save_model_set
from .language_model import build_network, estimate_bigram, load_network, save_network
from .linear_model import (
    procrustes_align,
    project_all,
    residual_fraction,
    save_model,
    train_linear_model,
)
from .models import RecipeConfig, ScoreReport, SyntheticSpec, load_key_value_model
from .recipe import FoldRunner, format_trace, run_recipe
from .scoring import (
    ConfusionMatrix,
    align_labels,
    confusion,
    format_report,
    score,
    strip_labels,
)
from .viseme_map import (
    SHORT_PAUSE,
    Transcript,
    VisemeMap,
    apply_garbage_threshold,
    count_visemes,
    load_dictionary,
    load_inventory,
    load_viseme_map,
    load_word_transcripts,
    save_viseme_map,
    standard_map,
    viseme_dictionary,
    words_to_visemes,
)

logger = logging.getLogger(__name__)

# Top-k length of the decline curves
DECLINE_LENGTH = 10


def setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, config.LOG_LEVEL, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def resolve_config(args: argparse.Namespace) -> RecipeConfig:
    text = read_text(args.config) if args.config else ""
    return load_key_value_model(RecipeConfig, text, seed=args.seed, threshold=args.threshold)


def output_dir(args: argparse.Namespace) -> Path:
    path = Path(config.output_dir(args.out))
    path.mkdir(parents=True, exist_ok=True)
    return path


def write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.debug("Wrote %s", path)


def load_map(args: argparse.Namespace) -> VisemeMap:
    inventory = load_inventory(read_text(args.inventory)) if args.inventory else None
    if args.viseme_map:
        return load_viseme_map(read_text(args.viseme_map), inventory)
    return standard_map()


def load_corpus_arg(args: argparse.Namespace) -> Corpus:
    if not args.corpus:
        raise InputFileError("--corpus", "corpus manifest is required")
    corpus = load_corpus(args.corpus)
    if args.viseme_map:
        corpus.vmap = load_map(args)
    if args.dict:
        corpus.dictionary = load_dictionary(read_text(args.dict), corpus.vmap.inventory)
    return corpus


def cmd_map(args: argparse.Namespace, out: Path) -> None:
    if not args.dict:
        raise InputFileError("--dict", "pronunciation dictionary is required")
    vmap = load_map(args)
    pdict = load_dictionary(read_text(args.dict), vmap.inventory)
    lines = load_word_transcripts(read_text(args.transcripts))
    transcripts = [(uid, words_to_visemes(pdict, vmap, words)) for uid, words in lines]
    counts = count_visemes([t for _, t in transcripts], vmap)

    write(out / "visemes.lab", save_segments(transcripts))
    write(out / "viseme_counts.csv", ReportFormatter.format_counts(counts))
    print(f"✓ {len(transcripts)} transcripts, {sum(counts.values())} viseme tokens")
    if args.threshold is not None:
        merged = apply_garbage_threshold(vmap, counts, args.threshold)
        write(out / "merged_map.txt", save_viseme_map(merged))
        print(f"✓ Merged map has {len(merged.ids)} classes (threshold {args.threshold})")


def cmd_features(args: argparse.Namespace, out: Path, recipe: RecipeConfig) -> None:
    data = load_observations(read_text(args.observations), str(args.observations))
    fraction = args.fraction if args.fraction is not None else recipe.fraction
    if args.normalize:
        data, _ = procrustes_align(data)
    model = train_linear_model(data, fraction, args.domain or "")
    write(out / "linear_model.txt", save_model(model))
    write(out / "parameters.frames", save_frames(project_all(model, data), args.rate))
    print(f"✓ {model.n_modes} modes retain {model.explained_fraction:.4f} of the variance")
    print(f"  Training residual: {residual_fraction(model, data):.4f} of the centred energy")


def cmd_synth(args: argparse.Namespace, out: Path) -> None:
    text = read_text(args.spec) if args.spec else ""
    spec = load_key_value_model(SyntheticSpec, text, seed=args.seed, n_lines=args.lines)
    vmap = load_map(args) if args.viseme_map else None
    corpus = generate_corpus(spec, vmap)
    manifest = write_corpus(corpus, out)
    write(out / "synthetic_spec.txt", spec.to_key_value_text())
    print(f"✓ Synthetic corpus of {len(corpus.lines)} lines written to {manifest}")


def cmd_train(args: argparse.Namespace, out: Path, recipe: RecipeConfig) -> None:
    corpus = load_corpus_arg(args)
    runner = FoldRunner(recipe, corpus, 0, [], list(range(len(corpus.lines))))
    trained = runner.train_models()
    write(out / "trace.log", format_trace(runner.result.trace))
    if not trained:
        raise VisemeToolkitError(f"Training aborted: {runner.result.reason}")
    assert runner.result.models is not None and runner.result.vmap is not None
    write(out / "models.txt", save_model_set(runner.result.models))
    write(out / "viseme_map.txt", save_viseme_map(runner.result.vmap))
    aligned = [(uid, segments_to_transcript(s)) for uid, s in runner.result.aligned.items()]
    write(out / "aligned.lab", save_segments(aligned))
    print(f"✓ Trained {len(runner.result.models.labels)} models on {len(corpus.lines)} lines")


def _silence_labels(vmap: VisemeMap) -> Tuple[str, str]:
    if vmap.silence_id is None:
        raise VisemeToolkitError("Viseme map has no silence class")
    return vmap.silence_id, vmap.short_pause_id or SHORT_PAUSE


def cmd_align(args: argparse.Namespace, out: Path, recipe: RecipeConfig) -> None:
    corpus = load_corpus_arg(args)
    models = load_model_set(read_text(args.models))
    silence, short_pause = _silence_labels(corpus.vmap)
    vdict = viseme_dictionary(corpus.dictionary, corpus.vmap)
    aligned = []
    for uid, words in corpus.lines:
        segments = force_align(
            models, corpus.frames[uid], words, vdict,
            sp_optional=recipe.sp_optional,
            boundary_silence=recipe.boundary_silence,
            sil_label=silence,
            sp_label=short_pause,
        )
        aligned.append((uid, segments_to_transcript(segments)))
    write(out / "aligned.lab", save_segments(aligned))
    print(f"✓ Aligned {len(aligned)} lines")


def cmd_decode(args: argparse.Namespace, out: Path, recipe: RecipeConfig) -> None:
    corpus = load_corpus_arg(args)
    models = load_model_set(read_text(args.models))
    silence, short_pause = _silence_labels(corpus.vmap)
    if args.network:
        network = load_network(read_text(args.network))
    else:
        lm = estimate_bigram([words for _, words in corpus.lines], recipe.lm_floor)
        vdict = viseme_dictionary(corpus.dictionary, corpus.vmap)
        network = build_network(lm, vdict, recipe.sp_optional, recipe.boundary_silence, silence, short_pause)
    write(out / "network.txt", save_network(network))

    decoder = ViterbiDecoder(models, network, recipe.lm_scale, recipe.insertion_penalty)
    hypotheses: List[Tuple[str, Transcript]] = []
    words: List[Tuple[str, List[str]]] = []
    for uid, _ in corpus.lines:
        result = decoder.decode(corpus.frames[uid])
        hypotheses.append((uid, result.transcript))
        words.append((uid, result.words))
    write(out / "hypotheses.lab", save_segments(hypotheses))
    write(out / "recognized.txt", "".join(" ".join([uid, *w]) + "\n" for uid, w in words))
    print(f"✓ Decoded {len(hypotheses)} lines")


def cmd_score(args: argparse.Namespace, out: Path) -> None:
    reference = dict(load_segments(read_text(args.reference), str(args.reference)))
    hypotheses = load_segments(read_text(args.hypothesis), str(args.hypothesis))
    drop = [SHORT_PAUSE] if not args.keep_sp else []
    alignments = []
    for uid, hypothesis in hypotheses:
        if uid not in reference:
            raise VisemeToolkitError(f"No reference for '{uid}'")
        alignments.append(
            align_labels(strip_labels(reference[uid].labels, drop), strip_labels(hypothesis.labels, drop))
        )
    report = score(alignments)
    labels = args.labels.split() if args.labels else sorted(
        {label for a in alignments for pair in a.pairs for label in pair[1:] if label is not None}
    )
    matrix = confusion(alignments, labels)
    write(out / "report.txt", format_report(report))
    write(out / "confusion.csv", matrix.to_csv())
    write(out / "scores.csv", ReportFormatter.format_scores([(1, report)]))
    print(format_report(report), end="")


def _report_from_matrix(matrix: ConfusionMatrix) -> ScoreReport:
    hits, substitutions = matrix.hits, matrix.substitutions
    deletions, insertions = int(matrix.deletions.sum()), int(matrix.insertions.sum())
    n = hits + substitutions + deletions
    return ScoreReport(
        N=n, H=hits, D=deletions, S=substitutions, I=insertions,
        correctness=100.0 * hits / n if n else 0.0,
        accuracy=100.0 * (hits - insertions) / n if n else 0.0,
    )


def analyze(
    features: Dict[str, List[ConfusionMatrix]],
    recipe: RecipeConfig,
    out: Path,
) -> List[str]:
    """Probabilities, rankings, decline curves, correlations and fold statistics per feature type"""
    summary: Dict[str, List[str]] = {}
    rankings = {}
    curves = {}
    probabilities = {}
    table_rows = []
    for name, matrices in features.items():
        probs = viseme_probabilities(matrices, recipe.prob_mode)
        probabilities[name] = probs
        ranking = rank_visemes(probs, recipe.tie_epsilon)
        rankings[name] = ranking
        defined = sum(1 for p in probs if p.p is not None)
        curve = decline_curve(probs, min(DECLINE_LENGTH, defined))
        curves[name] = curve
        write(out / f"probabilities_{name}.csv", ReportFormatter.format_probabilities(probs))
        write(out / f"ranking_{name}.csv", ReportFormatter.format_ranking(ranking))
        write(out / f"decline_{name}.csv", ReportFormatter.format_decline(curve))
        write(out / f"decline_{name}.dat", ReportFormatter.format_decline_dat(curve))
        summary[f"ranking {name}"] = [ReportFormatter.format_ranking_text(ranking)]
        if len(matrices) >= 2:
            accuracies = [_report_from_matrix(m).accuracy for m in matrices]
            table_rows.append((name, fold_stats(accuracies)))

    if table_rows:
        write(out / "fold_stats.csv", ReportFormatter.format_fold_stats(table_rows))
        write(out / "table.txt", feature_table(table_rows))
        summary["mean accuracy"] = feature_table(table_rows).splitlines()
    if len(rankings) >= 2:
        table = correlation_table(rankings)
        write(out / "correlations.csv", ReportFormatter.format_correlations(table))
        summary["correlations"] = [
            f"{a} vs {b}: r = {c.r:.2f}, p = {c.p_value:.4g}{' *' if c.significant else ''}"
            for (a, b), c in table.items()
        ]
        names = list(features)
        first, second = names[0], names[1]
        pairs = compare_features(probabilities[first], probabilities[second])
        write(out / f"comparison_{first}_{second}.dat", ReportFormatter.format_comparison_dat(pairs))
        declines = compare_declines(curves[first], curves[second])
        steeper = {"a": first, "b": second}.get(declines.steeper, "neither")
        summary["decline"] = [
            f"{first} slope {declines.slope_a:.4f}, {second} slope {declines.slope_b:.4f}, steeper: {steeper}"
        ]
    text = ReportFormatter.format_summary(summary)
    write(out / "summary.txt", text)
    return text.splitlines()


def _parse_feature_args(values: Sequence[Sequence[str]]) -> Dict[str, List[ConfusionMatrix]]:
    features: Dict[str, List[ConfusionMatrix]] = {}
    for name, *paths in values:
        if not paths:
            raise VisemeToolkitError(f"Feature '{name}' lists no confusion files")
        features[name] = [ConfusionMatrix.from_csv(read_text(Path(p))) for p in paths]
    return features


def cmd_analyze(args: argparse.Namespace, out: Path, recipe: RecipeConfig) -> None:
    features = _parse_feature_args(args.feature)
    for line in analyze(features, recipe, out):
        print(line)


def cmd_run(args: argparse.Namespace, out: Path, recipe: RecipeConfig) -> None:
    corpus = load_corpus_arg(args)
    if args.folds:
        folds = load_folds(read_text(args.folds))
    else:
        folds = make_folds(
            len(corpus.lines), recipe.test_size, recipe.n_folds, recipe.seed, recipe.fold_sampling
        )
    write(out / "folds.txt", folds.to_text())

    print(f"Running {len(folds.folds)} folds over {len(corpus.lines)} lines...")
    results = run_recipe(recipe, corpus, folds, jobs=args.jobs)
    reports = []
    matrices = []
    aborted = []
    for result in results:
        fold_dir = out / f"fold_{result.fold}"
        write(fold_dir / "trace.log", format_trace(result.trace))
        if result.aborted:
            print(f"  Fold {result.fold}: aborted ({result.reason})")
            aborted.append(result.fold)
            continue
        assert result.models is not None and result.report is not None and result.confusion is not None
        write(fold_dir / "models.txt", save_model_set(result.models))
        write(fold_dir / "confusion.csv", result.confusion.to_csv())
        write(fold_dir / "report.txt", format_report(result.report, f"Fold {result.fold}"))
        if result.word_report is not None:
            words = format_report(result.word_report, f"Fold {result.fold}", unit="WORD")
            write(fold_dir / "word_report.txt", words)
        write(fold_dir / "hypotheses.lab", save_segments(list(result.hypotheses.items())))
        reports.append((result.fold, result.report))
        matrices.append(result.confusion)
        print(f"  Fold {result.fold}: %Corr={result.report.correctness:.2f} Acc={result.report.accuracy:.2f}")

    write(out / "scores.csv", ReportFormatter.format_scores(reports))
    if not matrices:
        raise VisemeToolkitError("Every fold aborted")
    for line in analyze({args.name: matrices}, recipe, out / "analysis"):
        print(line)
    if aborted:
        logger.error("Folds %s aborted", aborted)
        raise VisemeToolkitError(f"{len(aborted)} of {len(results)} folds aborted: {aborted}")
    print(f"✓ Results written to {out}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Recipe configuration file (key = value)")
    common.add_argument("--seed", type=int, help="Seed for every random draw")
    common.add_argument("--out", help=f"Output directory (default: $VISEME_OUTPUT_DIR or '{config.OUTPUT_DIR}')")
    common.add_argument("--jobs", type=int, default=None, help="Folds run in parallel")
    common.add_argument("--viseme-map", type=Path, help="Viseme map file (default: built-in phone-to-viseme map)")
    common.add_argument("--dict", type=Path, help="Pronunciation dictionary")
    common.add_argument("--inventory", type=Path, help="Phoneme inventory file")
    common.add_argument("--threshold", type=int, help="Garbage-merge sample threshold")
    common.add_argument("--folds", type=Path, help="Fold specification file")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(
        description="Viseme recognition toolkit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Viseme transcripts and counts from word transcripts
  viseme-toolkit map --dict words.dict --transcripts lines.txt --threshold 150

  # Generate a synthetic corpus and run five-fold cross-validation on it
  viseme-toolkit synth --seed 7 --out corpus
  viseme-toolkit run --corpus corpus/manifest.txt --out results --jobs 4

  # Compare two feature types from their per-fold confusion matrices
  viseme-toolkit analyze --feature shape s1.csv s2.csv --feature appearance a1.csv a2.csv
        """,
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("map", parents=[common], help="Viseme transcripts and counts")
    p.add_argument("--transcripts", type=Path, required=True, help="Word transcripts (ID WORD ...)")

    p = commands.add_parser("features", parents=[common], help="Train a linear shape/appearance model")
    p.add_argument("--observations", type=Path, required=True, help="Observation matrix file")
    p.add_argument("--fraction", type=float, help="Retained variance fraction (default: recipe fraction)")
    p.add_argument("--domain", help="Free-text note stored with the model")
    p.add_argument("--normalize", action="store_true", help="Procrustes-align landmark vectors first")
    p.add_argument("--rate", type=float, default=60.0, help="Frame rate of the parameter file")

    p = commands.add_parser("synth", parents=[common], help="Generate a synthetic corpus")
    p.add_argument("--spec", type=Path, help="Synthetic corpus specification (key = value)")
    p.add_argument("--lines", type=int, help="Number of lines")

    for name, help_text in (
        ("train", "Train models on a whole corpus"),
        ("align", "Force-align a corpus"),
        ("decode", "Decode a corpus"),
        ("run", "Cross-validated train, decode and score"),
    ):
        p = commands.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--corpus", type=Path, required=True, help="Corpus manifest")
        if name in ("align", "decode"):
            p.add_argument("--models", type=Path, required=True, help="Model-set file")
        if name == "decode":
            p.add_argument("--network", type=Path, help="Network file (default: bigram of the corpus lines)")
        if name == "run":
            p.add_argument("--name", default="features", help="Feature-type name used in reports")

    p = commands.add_parser("score", parents=[common], help="Score hypotheses against references")
    p.add_argument("--reference", type=Path, required=True, help="Reference label file")
    p.add_argument("--hypothesis", type=Path, required=True, help="Hypothesis label file")
    p.add_argument("--labels", help="Space-separated confusion class list")
    p.add_argument("--keep-sp", action="store_true", help="Score short pauses too")

    p = commands.add_parser("analyze", parents=[common], help="Per-viseme analysis of confusion matrices")
    p.add_argument(
        "--feature", nargs="+", action="append", required=True, metavar=("NAME", "CSV"),
        help="Feature-type name followed by its per-fold confusion CSV files",
    )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)

    try:
        recipe = resolve_config(args)
        out = output_dir(args)
        resolved = recipe.to_key_value_text()
        print(resolved, end="")
        write(out / "resolved_config.txt", resolved)

        if args.command == "map":
            cmd_map(args, out)
        elif args.command == "features":
            cmd_features(args, out, recipe)
        elif args.command == "synth":
            cmd_synth(args, out)
        elif args.command == "train":
            cmd_train(args, out, recipe)
        elif args.command == "align":
            cmd_align(args, out, recipe)
        elif args.command == "decode":
            cmd_decode(args, out, recipe)
        elif args.command == "score":
            cmd_score(args, out)
        elif args.command == "analyze":
            cmd_analyze(args, out, recipe)
        elif args.command == "run":
            cmd_run(args, out, recipe)
    except VisemeToolkitError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
