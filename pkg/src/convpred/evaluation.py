"""The experimental protocol: conversation-level splits, per-turn-pair
training and evaluation, a single-turn ablation, rank-cutoff sensitivity,
accuracy, and McNemar significance between paired predictors.

A turn pair (T, T+1) trains a fresh classifier on features from turns 1..T
(or turn T alone in single mode) against the found-by-turn-(T+1) label, and
scores it on the held-out conversations. Reports are pure functions of
(runs, labels, settings, seeds): train/test sets never overlap and no test
statistics leak into training (standardization happens inside each trainer
on the train rows only).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autoencoder, classifiers
from .core import ValidationError, round_half_up
from .features import FEATURE_KINDS, turn_features
from .scenario import LabelSet, label_runs

__all__ = [
    "Split",
    "ReportRow",
    "PredictionRecord",
    "EvalReport",
    "EvalSettings",
    "PREDICTORS",
    "CLASSIFIERS",
    "split_conversations",
    "run_turn_pair",
    "run_single_turn",
    "cutoff_sensitivity",
    "accuracy",
    "mcnemar",
    "MCNEMAR_CRITICAL",
    "write_report",
    "read_report",
    "write_predictions",
    "read_predictions",
]

PREDICTORS = ("ae", "ac", "wand", "rv", "apr", "score")
CLASSIFIERS = ("ae-head", "logreg", "lasso", "forest")
DEFAULT_PAIRS = tuple((t, t + 1) for t in range(2, 10))
MCNEMAR_CRITICAL = 3.841459  # chi-squared, 1 dof, p = 0.05


@dataclass(frozen=True)
class Split:
    """Disjoint train/test conversation ids covering the full set."""

    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int
    stratified: bool
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class ReportRow:
    predictor: str
    classifier: str
    scenario: str
    mode: str
    turn_train: int
    turn_eval: int
    cutoff: int
    accuracy: float
    n_test: int


@dataclass(frozen=True)
class PredictionRecord:
    cell_id: str
    conversation_id: str
    predicted: int
    actual: int


@dataclass(eq=False)
class EvalReport:
    rows: list[ReportRow] = field(default_factory=list)
    predictions: list[PredictionRecord] = field(default_factory=list)

    def extend(self, other: "EvalReport") -> None:
        self.rows.extend(other.rows)
        self.predictions.extend(other.predictions)


@dataclass(frozen=True)
class EvalSettings:
    """Per-cell hyperparameters; defaults mirror the shipped protocol."""

    top_n: int = 100
    ae_epochs: int = 100
    ae_learning_rate: float = 0.01
    ae_hidden_dim: int | None = None
    ae_bottleneck_dim: int | None = None
    ae_rec_weight: float = 1.0
    ae_cls_weight: float = 1.0
    lasso_lambda: float = 0.1
    lasso_iters: int = 1000
    logistic_lr: float = 0.1
    logistic_iters: int = 500
    n_trees: int = 100


def split_conversations(
    ids,
    final_labels: dict[str, int],
    ratio: float = 0.7,
    seed: int = 0,
    stratified: bool = True,
) -> Split:
    """Seeded conversation-level split with |train| = round(ratio * n).

    When stratified, the ratio holds within each label class up to rounding
    (largest-remainder allocation keeps the total exact). A class with fewer
    than 2 members falls back to an unstratified shuffle with a warning.
    """
    ids = list(ids)
    n = len(ids)
    if n < 2:
        raise ValueError("need at least 2 conversations to split")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(n)]
    n_train = round_half_up(ratio * n)
    warnings: tuple[str, ...] = ()

    if stratified:
        by_class: dict[int, list[str]] = {}
        for cid in shuffled:
            by_class.setdefault(final_labels[cid], []).append(cid)
        if any(len(members) < 2 for members in by_class.values()):
            warnings = ("stratification fell back to plain shuffling: a class has < 2 members",)
            stratified = False
        else:
            quotas = {label: ratio * len(members) for label, members in by_class.items()}
            take = {label: int(np.floor(q)) for label, q in quotas.items()}
            leftover = n_train - sum(take.values())
            for label in sorted(quotas, key=lambda c: (-(quotas[c] - take[c]), c)):
                if leftover <= 0:
                    break
                take[label] += 1
                leftover -= 1
            train: list[str] = []
            test: list[str] = []
            for label in sorted(by_class):
                members = by_class[label]
                train.extend(members[: take[label]])
                test.extend(members[take[label] :])
            return Split(tuple(train), tuple(test), seed, True, warnings)

    return Split(tuple(shuffled[:n_train]), tuple(shuffled[n_train:]), seed, stratified, warnings)


def _cell_seed(seed: int, turn_train: int, cutoff: int) -> int:
    return int(np.random.SeedSequence((seed, turn_train, cutoff)).generate_state(1)[0])


def _fit_predict(classifier, X_train, y_train, X_test, settings: EvalSettings, cell_seed: int):
    if classifier == "ae-head":
        config = autoencoder.AEConfig(
            input_dim=X_train.shape[1],
            hidden_dim=settings.ae_hidden_dim,
            bottleneck_dim=settings.ae_bottleneck_dim,
            learning_rate=settings.ae_learning_rate,
            epochs=settings.ae_epochs,
            seed=cell_seed,
            rec_weight=settings.ae_rec_weight,
            cls_weight=settings.ae_cls_weight,
        )
        model, _ = autoencoder.train(X_train, y_train, config)
        return autoencoder.predict(model, X_test)
    if classifier == "logreg":
        model = classifiers.train_logistic(
            X_train, y_train, lr=settings.logistic_lr, iters=settings.logistic_iters
        )
    elif classifier == "lasso":
        model = classifiers.train_lasso(
            X_train, y_train, lam=settings.lasso_lambda, iters=settings.lasso_iters
        )
    elif classifier == "forest":
        model = classifiers.train_forest(X_train, y_train, n_trees=settings.n_trees, seed=cell_seed)
    else:
        raise ValueError(f"unknown classifier {classifier!r}; valid: {CLASSIFIERS}")
    return classifiers.predict_cls(model, X_test)


def _feature_kind(predictor: str) -> str:
    if predictor == "ae":
        return "pooled"
    if predictor in FEATURE_KINDS:
        return predictor
    raise ValueError(f"unknown predictor {predictor!r}; valid: {PREDICTORS}")


def _clip_pairs(pairs, n_turns: int):
    usable = [(t, e) for t, e in pairs if e == t + 1 and 1 <= t and e <= n_turns]
    if not usable:
        raise ValueError(f"no usable turn pairs for runs with {n_turns} turns")
    return usable


def _per_turn_blocks(runs, kind: str, turns, top_n: int) -> dict[int, np.ndarray]:
    return {
        t: np.vstack([turn_features(run, kind, t, top_n) for run in runs]) for t in turns
    }


def _align(runs, labels: LabelSet, split: Split):
    by_id = {run.conversation_id: i for i, run in enumerate(runs)}
    for cid in split.train_ids + split.test_ids:
        if cid not in by_id:
            raise ValidationError(f"split references unknown conversation {cid!r}")
        if cid not in labels.labels:
            raise ValidationError(f"labels missing conversation {cid!r}")
    return by_id


def run_turn_pair(
    runs,
    labels: LabelSet,
    predictor: str,
    classifier: str,
    split: Split,
    pairs=DEFAULT_PAIRS,
    settings: EvalSettings = EvalSettings(),
    seed: int = 0,
    mode: str = "multi",
) -> EvalReport:
    """Train and evaluate one classifier per turn pair (T, T+1).

    Multi mode feeds features of turns 1..T; single mode feeds turn T alone.
    Both fit on the train split against the found-by-turn-(T+1) label and
    score the test split on the same label. One report row per pair, plus
    per-instance prediction records for significance testing.
    """
    if mode not in ("multi", "single"):
        raise ValueError(f"mode must be 'multi' or 'single', got {mode!r}")
    if predictor == "ae" and classifier != "ae-head":
        raise ValueError("the ae predictor implies the ae-head classifier")
    kind = _feature_kind(predictor)
    n_turns = min(run.n_turns for run in runs)
    pairs = _clip_pairs(pairs, n_turns)
    by_id = _align(runs, labels, split)
    for cid, vec in labels.labels.items():
        if cid in by_id and len(vec) < max(e for _, e in pairs):
            raise ValidationError(f"labels for {cid!r} stop before the last evaluation turn")

    needed_turns = sorted({t for pair in pairs for t in (range(1, pair[0] + 1) if mode == "multi" else [pair[0]])})
    blocks = _per_turn_blocks(runs, kind, needed_turns, settings.top_n)

    report = EvalReport()
    for turn_train, turn_eval in pairs:
        if mode == "multi":
            X = np.hstack([blocks[t] for t in range(1, turn_train + 1)])
        else:
            X = blocks[turn_train]
        row_of = {cid: X[i] for cid, i in by_id.items()}
        X_train = np.vstack([row_of[cid] for cid in split.train_ids])
        y_train = np.array([labels.label_at(cid, turn_eval) for cid in split.train_ids])
        X_test = np.vstack([row_of[cid] for cid in split.test_ids])
        y_test = np.array([labels.label_at(cid, turn_eval) for cid in split.test_ids])

        preds = _fit_predict(
            classifier, X_train, y_train, X_test, settings, _cell_seed(seed, turn_train, labels.cutoff)
        )
        cell = f"{predictor}|{classifier}|{labels.scenario}|{mode}|{turn_train},{turn_eval}|cutoff{labels.cutoff}"
        report.rows.append(
            ReportRow(
                predictor=predictor,
                classifier=classifier,
                scenario=labels.scenario,
                mode=mode,
                turn_train=turn_train,
                turn_eval=turn_eval,
                cutoff=labels.cutoff,
                accuracy=accuracy(preds, y_test),
                n_test=len(y_test),
            )
        )
        report.predictions.extend(
            PredictionRecord(cell, cid, int(p), int(a))
            for cid, p, a in zip(split.test_ids, preds, y_test)
        )
    return report


def run_single_turn(
    runs,
    labels: LabelSet,
    predictor: str,
    classifier: str,
    split: Split,
    pairs=DEFAULT_PAIRS,
    settings: EvalSettings = EvalSettings(),
    seed: int = 0,
) -> EvalReport:
    """The single-turn ablation: features come from turn T only."""
    return run_turn_pair(
        runs, labels, predictor, classifier, split, pairs, settings, seed, mode="single"
    )


def cutoff_sensitivity(
    runs,
    split: Split,
    cutoffs=(1, 20, 100),
    pair: tuple[int, int] = (5, 6),
    settings: EvalSettings = EvalSettings(),
    seed: int = 0,
) -> EvalReport:
    """Rank-cutoff sensitivity of the predictor fed only the top-ranked item.

    For each cutoff the ground truth is recomputed at that cutoff and a fresh
    model is trained on the train turn's top-1 item embedding (single-turn
    protocol). One report row per cutoff.
    """
    turn_train, turn_eval = pair
    report = EvalReport()
    for cutoff in cutoffs:
        labels = label_runs(runs, cutoff=cutoff)
        by_id = _align(runs, labels, split)
        X = np.vstack([turn_features(run, "top1", turn_train, settings.top_n) for run in runs])
        row_of = {cid: X[i] for cid, i in by_id.items()}
        X_train = np.vstack([row_of[cid] for cid in split.train_ids])
        y_train = np.array([labels.label_at(cid, turn_eval) for cid in split.train_ids])
        X_test = np.vstack([row_of[cid] for cid in split.test_ids])
        y_test = np.array([labels.label_at(cid, turn_eval) for cid in split.test_ids])
        preds = _fit_predict(
            "ae-head", X_train, y_train, X_test, settings, _cell_seed(seed, turn_train, cutoff)
        )
        cell = f"ae-top1|ae-head|base|single|{turn_train},{turn_eval}|cutoff{cutoff}"
        report.rows.append(
            ReportRow(
                predictor="ae-top1",
                classifier="ae-head",
                scenario="base",
                mode="single",
                turn_train=turn_train,
                turn_eval=turn_eval,
                cutoff=cutoff,
                accuracy=accuracy(preds, y_test),
                n_test=len(y_test),
            )
        )
        report.predictions.extend(
            PredictionRecord(cell, cid, int(p), int(a))
            for cid, p, a in zip(split.test_ids, preds, y_test)
        )
    return report


def accuracy(preds, actuals) -> float:
    preds = np.asarray(preds)
    actuals = np.asarray(actuals)
    if preds.shape != actuals.shape or preds.size == 0:
        raise ValueError("prediction and actual vectors must align and be non-empty")
    return float(np.mean(preds == actuals))


def mcnemar(preds_a, preds_b, actuals) -> tuple[float, bool]:
    """Continuity-corrected McNemar statistic over the discordant pairs.

    b counts instances a gets right and b wrong, c the reverse; the statistic
    is (|b - c| - 1)^2 / (b + c), defined as 0 when b + c = 0. Significance is
    chi2 >= 3.841459 (p < 0.05, 1 dof). Symmetric in the two predictors.
    """
    preds_a = np.asarray(preds_a)
    preds_b = np.asarray(preds_b)
    actuals = np.asarray(actuals)
    if not (preds_a.shape == preds_b.shape == actuals.shape):
        raise ValueError("prediction vectors and actuals must have equal length")
    correct_a = preds_a == actuals
    correct_b = preds_b == actuals
    b = int(np.sum(correct_a & ~correct_b))
    c = int(np.sum(~correct_a & correct_b))
    if b + c == 0:
        return 0.0, False
    chi2 = (abs(b - c) - 1) ** 2 / (b + c)
    return float(chi2), chi2 >= MCNEMAR_CRITICAL


def write_report(report: EvalReport, path, header_comment: str | None = None) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if header_comment:
            for line in header_comment.splitlines():
                fh.write(line if line.startswith("#") else f"# {line}")
                fh.write("\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["predictor", "classifier", "scenario", "mode", "turn_train", "turn_eval",
             "cutoff", "accuracy", "n_test"]
        )
        for row in report.rows:
            writer.writerow(
                [row.predictor, row.classifier, row.scenario, row.mode, row.turn_train,
                 row.turn_eval, row.cutoff, repr(row.accuracy), row.n_test]
            )


def read_report(path) -> list[ReportRow]:
    path = Path(path)
    rows = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path.name}: empty report file")
        for record in reader:
            rows.append(
                ReportRow(
                    predictor=record[0],
                    classifier=record[1],
                    scenario=record[2],
                    mode=record[3],
                    turn_train=int(record[4]),
                    turn_eval=int(record[5]),
                    cutoff=int(record[6]),
                    accuracy=float(record[7]),
                    n_test=int(record[8]),
                )
            )
    return rows


def write_predictions(report: EvalReport, path, header_comment: str | None = None) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if header_comment:
            for line in header_comment.splitlines():
                fh.write(line if line.startswith("#") else f"# {line}")
                fh.write("\n")
        writer = csv.writer(fh)
        writer.writerow(["cell_id", "conversation_id", "predicted", "actual"])
        for rec in report.predictions:
            writer.writerow([rec.cell_id, rec.conversation_id, rec.predicted, rec.actual])


def read_predictions(path) -> list[PredictionRecord]:
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path.name}: empty predictions file")
        for record in reader:
            records.append(PredictionRecord(record[0], record[1], int(record[2]), int(record[3])))
    return records
