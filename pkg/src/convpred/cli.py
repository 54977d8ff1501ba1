"""Command-line pipeline: generate/ingest runs, label them, induce the
missing-target scenario, export features, train and evaluate predictors, and
render report grids. Subcommands compose via files; every output embeds the
settings and seeds that produced it in a leading comment line, so any stage
can be re-run exactly.
"""

from __future__ import annotations

import argparse
import sys
from collections import defaultdict

from . import data_io, evaluation, features, scenario
from .core import ValidationError
from .evaluation import CLASSIFIERS, PREDICTORS, EvalSettings

FEATURE_CHOICES = ("ac", "wand", "rv", "apr", "score", "pooled", "top1")


def _settings_from_args(args) -> EvalSettings:
    return EvalSettings(
        top_n=args.top_n,
        ae_epochs=args.epochs,
        ae_learning_rate=args.lr,
        lasso_lambda=args.lasso_lambda,
        n_trees=args.n_trees,
    )


def cmd_gen(args) -> int:
    config = data_io.GenConfig(
        n_conversations=args.n,
        dim=args.dim,
        catalogue_size=args.catalogue,
        n_turns=args.turns,
        top_n=args.top_n,
        easy_fraction=args.easy_fraction,
        pull_rate_easy=args.pull_easy,
        pull_rate_hard=args.pull_hard,
        noise_sigma=args.sigma,
        pull_decay=args.pull_decay,
        seed=args.seed,
    )
    runs = data_io.generate_synthetic(config)
    header = (
        f"# convpred gen n={config.n_conversations} turns={config.n_turns} dim={config.dim} "
        f"catalogue={config.catalogue_size} top_n={config.top_n} easy_fraction={config.easy_fraction} "
        f"pull_easy={config.pull_rate_easy} pull_hard={config.pull_rate_hard} "
        f"sigma={config.noise_sigma} pull_decay={config.pull_decay} seed={config.seed}"
    )
    data_io.write_runs(runs, args.out, header_comment=header)
    print(f"wrote {args.out} ({len(runs)} conversations)")
    return 0


def cmd_label(args) -> int:
    runs = data_io.read_runs(args.runs)
    labels = scenario.label_runs(runs, cutoff=args.cutoff)
    header = f"# convpred label runs={args.runs} cutoff={args.cutoff}"
    scenario.write_labels(labels, args.out, header_comment=header)
    n_found = sum(labels.final_labels().values())
    print(f"wrote {args.out} ({len(labels.labels)} conversations, {n_found} found by final turn)")
    return 0


def cmd_scenario(args) -> int:
    runs = data_io.read_runs(args.runs)
    base = scenario.label_runs(runs, cutoff=args.cutoff)
    modified, missing = scenario.induce_missing(runs, base, fraction=args.fraction, seed=args.seed)
    header = (
        f"# convpred scenario runs={args.runs} cutoff={args.cutoff} "
        f"fraction={args.fraction} seed={args.seed}"
    )
    data_io.write_runs(modified, args.out, header_comment=header)
    scenario.write_labels(missing, args.labels, header_comment=header)
    print(
        f"wrote {args.out} and {args.labels} "
        f"({len(missing.forced)} of {len(runs)} conversations forced to missing-target)"
    )
    return 0


def cmd_features(args) -> int:
    runs = data_io.read_runs(args.runs)
    matrix = features.build_feature_matrix(
        runs, args.predictor, args.upto_turn, top_n=args.top_n, mode=args.mode
    )
    header = (
        f"# convpred features runs={args.runs} predictor={args.predictor} "
        f"upto_turn={args.upto_turn} top_n={args.top_n} mode={args.mode}"
    )
    features.write_features(matrix, args.out, header_comment=header)
    print(f"wrote {args.out} ({matrix.values.shape[0]} rows x {matrix.values.shape[1]} columns)")
    return 0


def _parse_pairs(text: str):
    lo, _, hi = text.partition("-")
    start, end = int(lo), int(hi or lo)
    if start < 1 or end < start:
        raise ValidationError(f"bad --pairs range {text!r}")
    return tuple((t, t + 1) for t in range(start, end + 1))


def cmd_eval(args) -> int:
    runs = data_io.read_runs(args.runs)
    settings = _settings_from_args(args)
    header = (
        f"# convpred eval runs={args.runs} labels={args.labels} predictor={args.predictor} "
        f"classifier={args.classifier} mode={args.mode} pairs={args.pairs} seed={args.seed} "
        f"split_ratio={args.split_ratio} stratified={not args.no_stratify} top_n={args.top_n} "
        f"epochs={args.epochs} lr={args.lr} lasso_lambda={args.lasso_lambda} n_trees={args.n_trees}"
    )
    if args.mode == "cutoff":
        cutoffs = tuple(int(c) for c in args.cutoffs.split(","))
        base = scenario.label_runs(runs, cutoff=max(cutoffs))
        split = evaluation.split_conversations(
            [r.conversation_id for r in runs],
            base.final_labels(),
            ratio=args.split_ratio,
            seed=args.seed,
            stratified=not args.no_stratify,
        )
        pair = (args.pair, args.pair + 1)
        report = evaluation.cutoff_sensitivity(
            runs, split, cutoffs=cutoffs, pair=pair, settings=settings, seed=args.seed
        )
    else:
        if args.labels is None:
            raise ValidationError("--labels is required for multi/single evaluation")
        labels = scenario.read_labels(args.labels)
        classifier = args.classifier
        if args.predictor == "ae":
            classifier = "ae-head"
        split = evaluation.split_conversations(
            [r.conversation_id for r in runs],
            labels.final_labels(),
            ratio=args.split_ratio,
            seed=args.seed,
            stratified=not args.no_stratify,
        )
        report = evaluation.run_turn_pair(
            runs,
            labels,
            args.predictor,
            classifier,
            split,
            pairs=_parse_pairs(args.pairs),
            settings=settings,
            seed=args.seed,
            mode=args.mode,
        )
    evaluation.write_report(report, args.report, header_comment=header)
    evaluation.write_predictions(report, args.predictions, header_comment=header)
    for row in report.rows:
        print(
            f"{row.predictor}/{row.classifier} {row.scenario} {row.mode} "
            f"pair {row.turn_train},{row.turn_eval} cutoff {row.cutoff}: "
            f"accuracy {row.accuracy:.4f} (n={row.n_test})"
        )
    return 0


def _group_key(cell_id: str) -> tuple:
    parts = cell_id.split("|")
    return tuple(parts[2:])  # scenario, mode, pair, cutoff


def cmd_compare(args) -> int:
    preds_a = evaluation.read_predictions(args.a)
    preds_b = evaluation.read_predictions(args.b)

    def grouped(records):
        groups = defaultdict(dict)
        for rec in records:
            groups[_group_key(rec.cell_id)][rec.conversation_id] = rec
        return groups

    ga, gb = grouped(preds_a), grouped(preds_b)
    shared = [key for key in ga if key in gb]
    if not shared:
        raise ValidationError("prediction files share no evaluation cells")

    lines = []
    results = []
    for key in shared:
        ra, rb = ga[key], gb[key]
        if set(ra) != set(rb):
            raise ValidationError(f"cell {'|'.join(key)}: test conversations differ between files")
        cids = sorted(ra)
        pa = [ra[c].predicted for c in cids]
        pb = [rb[c].predicted for c in cids]
        actual = [ra[c].actual for c in cids]
        for c in cids:
            if ra[c].actual != rb[c].actual:
                raise ValidationError(f"cell {'|'.join(key)}: ground truth differs for {c!r}")
        results.append((key, pa, pb, actual))

    if args.pooled:
        pa = [p for _, ps, _, _ in results for p in ps]
        pb = [p for _, _, ps, _ in results for p in ps]
        actual = [a for _, _, _, acts in results for a in acts]
        results = [(("pooled",), pa, pb, actual)]

    out_rows = []
    for key, pa, pb, actual in results:
        chi2, significant = evaluation.mcnemar(pa, pb, actual)
        acc_a = evaluation.accuracy(pa, actual)
        acc_b = evaluation.accuracy(pb, actual)
        label = "|".join(key)
        lines.append(
            f"{label}: acc_a={acc_a:.4f} acc_b={acc_b:.4f} chi2={chi2:.4f} "
            f"significant={'yes' if significant else 'no'}"
        )
        out_rows.append([label, repr(acc_a), repr(acc_b), repr(chi2), int(significant)])

    print("\n".join(lines))
    if args.out:
        import csv

        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# convpred compare a={args.a} b={args.b} pooled={args.pooled}\n")
            writer = csv.writer(fh)
            writer.writerow(["cell", "accuracy_a", "accuracy_b", "chi2", "significant"])
            writer.writerows(out_rows)
        print(f"wrote {args.out}")
    return 0


def _render_grid(rows):
    pair_cols = sorted({(r.turn_train, r.turn_eval) for r in rows})
    scenarios = sorted({r.scenario for r in rows})
    grid_csv = [["scenario", "predictor", "classifier", "mode", "cutoff"]
                + [f"{t},{e}" for t, e in pair_cols]]
    text_blocks = []
    for scen in scenarios:
        scen_rows = [r for r in rows if r.scenario == scen]
        keys = sorted({(r.predictor, r.classifier, r.mode, r.cutoff) for r in scen_rows})
        cells = {}
        for r in scen_rows:
            cells[(r.predictor, r.classifier, r.mode, r.cutoff, r.turn_train, r.turn_eval)] = r.accuracy
        label_width = max(
            [len(f"{p}/{c} [{m}] @cutoff{k}") for p, c, m, k in keys] + [len("predictor/classifier")]
        )
        header = f"== scenario: {scen} =="
        lines = [header, "predictor/classifier".ljust(label_width) + "".join(f"{f'{t},{e}':>8}" for t, e in pair_cols)]
        for p, c, m, k in keys:
            label = f"{p}/{c} [{m}] @cutoff{k}"
            row_csv = [scen, p, c, m, k]
            line = label.ljust(label_width)
            for t, e in pair_cols:
                acc = cells.get((p, c, m, k, t, e))
                row_csv.append("" if acc is None else repr(acc))
                line += f"{'' if acc is None else format(acc, '.3f'):>8}"
            grid_csv.append(row_csv)
            lines.append(line)
        text_blocks.append("\n".join(lines))
    return grid_csv, "\n\n".join(text_blocks)


def cmd_report(args) -> int:
    rows = []
    for path in args.inputs:
        rows.extend(evaluation.read_report(path))
    if not rows:
        raise ValidationError("no report rows found in the input files")
    grid_csv, text = _render_grid(rows)
    if args.out_csv:
        import csv

        with open(args.out_csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# convpred report inputs={','.join(args.inputs)}\n")
            writer = csv.writer(fh)
            writer.writerows(grid_csv)
    if args.out_text:
        with open(args.out_text, "w", encoding="utf-8") as fh:
            fh.write(f"# convpred report inputs={','.join(args.inputs)}\n")
            fh.write(text)
            fh.write("\n")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convpred",
        description="Predict conversational recommendation failures from multi-turn retrieval runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic run file")
    p.add_argument("--n", type=int, default=200, help="number of conversations")
    p.add_argument("--turns", type=int, default=10)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--catalogue", type=int, default=2000)
    p.add_argument("--top-n", type=int, default=100, dest="top_n")
    p.add_argument("--easy-fraction", type=float, default=0.7, dest="easy_fraction")
    p.add_argument("--pull-easy", type=float, default=0.35, dest="pull_easy")
    p.add_argument("--pull-hard", type=float, default=0.02, dest="pull_hard")
    p.add_argument("--sigma", type=float, default=0.15)
    p.add_argument("--pull-decay", type=float, default=1.0, dest="pull_decay")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("label", help="compute base-scenario labels from a run file")
    p.add_argument("--runs", required=True)
    p.add_argument("--cutoff", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("scenario", help="induce the missing-target scenario")
    p.add_argument("--runs", required=True)
    p.add_argument("--cutoff", type=int, default=100)
    p.add_argument("--fraction", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="modified run file")
    p.add_argument("--labels", required=True, help="missing-target labels CSV")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("features", help="export a feature matrix CSV")
    p.add_argument("--runs", required=True)
    p.add_argument("--predictor", choices=FEATURE_CHOICES, required=True)
    p.add_argument("--upto-turn", type=int, required=True, dest="upto_turn")
    p.add_argument("--top-n", type=int, default=100, dest="top_n")
    p.add_argument("--mode", choices=("multi", "single"), default="multi")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("eval", help="train and evaluate per turn pair")
    p.add_argument("--runs", required=True)
    p.add_argument("--labels", help="labels CSV (required for multi/single modes)")
    p.add_argument("--predictor", choices=PREDICTORS, default="ae")
    p.add_argument("--classifier", choices=CLASSIFIERS, default="ae-head")
    p.add_argument("--mode", choices=("multi", "single", "cutoff"), default="multi")
    p.add_argument("--pairs", default="2-9", help="train-turn range, e.g. 2-9")
    p.add_argument("--pair", type=int, default=5, help="train turn for cutoff mode")
    p.add_argument("--cutoffs", default="1,20,100", help="cutoff grid for cutoff mode")
    p.add_argument("--split-ratio", type=float, default=0.7, dest="split_ratio")
    p.add_argument("--no-stratify", action="store_true", dest="no_stratify")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--top-n", type=int, default=100, dest="top_n")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--lasso-lambda", type=float, default=0.1, dest="lasso_lambda")
    p.add_argument("--n-trees", type=int, default=100, dest="n_trees")
    p.add_argument("--report", required=True)
    p.add_argument("--predictions", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="McNemar test between two prediction files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--pooled", action="store_true", help="pool all shared cells before testing")
    p.add_argument("--out", help="optional CSV output")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="render report CSVs as a turn-pair grid")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out-csv", dest="out_csv")
    p.add_argument("--out-text", dest="out_text")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
