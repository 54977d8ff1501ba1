"""Ground-truth labeling and missing-target induction.

The base scenario labels a conversation "found by turn k" (cumulatively) when
the target reaches the rank cutoff at any turn up to k; conversations never
reaching the cutoff by the final turn are system failures. Catalogue failures
are induced from that ground truth: a seeded sample of the easy conversations
has the target deleted from every ranking and its labels forced to 0, after
which features must be recomputed from the modified runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    ConversationRun,
    RankedItem,
    TurnRanking,
    ValidationError,
    round_half_up,
    stored_rank,
)

__all__ = [
    "LabelSet",
    "label_runs",
    "identify_easy",
    "induce_missing",
    "write_labels",
    "read_labels",
]


@dataclass(frozen=True, eq=False)
class LabelSet:
    """Per-conversation cumulative found/not-found labels plus scenario tag."""

    labels: dict[str, tuple[int, ...]]
    scenario: str = "base"
    cutoff: int = 100
    forced: frozenset[str] = field(default_factory=frozenset)

    def label_at(self, conversation_id: str, turn: int) -> int:
        return self.labels[conversation_id][turn - 1]

    def final_label(self, conversation_id: str) -> int:
        return self.labels[conversation_id][-1]

    def final_labels(self) -> dict[str, int]:
        return {cid: vec[-1] for cid, vec in self.labels.items()}


def _turn_found(run: ConversationRun, turn_index: int, cutoff: int) -> bool:
    ranking = run.turns[turn_index]
    pos = stored_rank(ranking, run.target_id)
    if pos is not None:
        return pos <= cutoff
    if len(ranking.items) >= cutoff:
        return False
    full_rank = run.target_ranks[turn_index] if run.target_ranks is not None else None
    if full_rank is None:
        raise ValidationError(
            f"{run.conversation_id} turn {ranking.turn}: insufficient depth for cutoff "
            f"{cutoff} (stored depth {len(ranking.items)}, no target rank recorded)"
        )
    return full_rank <= cutoff


def label_runs(runs, cutoff: int = 100) -> LabelSet:
    """Base-scenario labels: label(C, k) = 1 iff the target reached the cutoff by turn k.

    The rank comes from the stored ranking, falling back to the recorded
    full-catalogue target rank when the stored depth is shallower than the
    cutoff. Labels are monotone non-decreasing in k by construction.
    """
    if cutoff < 1:
        raise ValueError(f"cutoff must be >= 1, got {cutoff}")
    labels: dict[str, tuple[int, ...]] = {}
    for run in runs:
        found = False
        vec = []
        for turn_index in range(run.n_turns):
            found = found or _turn_found(run, turn_index, cutoff)
            vec.append(int(found))
        labels[run.conversation_id] = tuple(vec)
    return LabelSet(labels=labels, scenario="base", cutoff=cutoff)


def identify_easy(labels: LabelSet) -> set[str]:
    """Conversations found by the cutoff by their final turn."""
    if labels.scenario != "base":
        raise ValueError("easy items are identified on base-scenario labels")
    return {cid for cid, vec in labels.labels.items() if vec[-1] == 1}


def _delete_target(run: ConversationRun) -> ConversationRun:
    turns = tuple(
        TurnRanking(
            turn=ranking.turn,
            items=tuple(item for item in ranking.items if item.item_id != run.target_id),
            query_embedding=ranking.query_embedding,
            critique=ranking.critique,
        )
        for ranking in run.turns
    )
    return ConversationRun(
        conversation_id=run.conversation_id,
        target_id=run.target_id,
        turns=turns,
        target_ranks=None,  # the target no longer exists in the catalogue
    )


def induce_missing(
    runs, labels: LabelSet, fraction: float = 0.3, seed: int = 0
) -> tuple[list[ConversationRun], LabelSet]:
    """Convert a seeded sample of easy conversations into catalogue failures.

    Samples round(fraction * |easy|) conversations uniformly without
    replacement, deletes the target from every turn's ranking (remaining items
    shift up, depth shrinks by at most 1), and forces their labels to 0.
    Unselected runs are returned as the same objects, byte-identical on write.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    easy = identify_easy(labels)
    if not easy:
        raise ValueError("no easy conversations: nothing to induce from")
    n_forced = round_half_up(fraction * len(easy))
    rng = np.random.default_rng(seed)
    selected = frozenset(rng.choice(sorted(easy), size=n_forced, replace=False).tolist())

    modified = [_delete_target(run) if run.conversation_id in selected else run for run in runs]
    new_labels = {
        cid: (0,) * len(vec) if cid in selected else vec for cid, vec in labels.labels.items()
    }
    return modified, LabelSet(
        labels=new_labels,
        scenario="missing_target",
        cutoff=labels.cutoff,
        forced=selected,
    )


def write_labels(labels: LabelSet, path, header_comment: str | None = None) -> None:
    lengths = {len(vec) for vec in labels.labels.values()}
    if len(lengths) != 1:
        raise ValidationError("label vectors must cover the same number of turns")
    n_turns = lengths.pop()
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if header_comment:
            for line in header_comment.splitlines():
                fh.write(line if line.startswith("#") else f"# {line}")
                fh.write("\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["conversation_id", "scenario", "cutoff", "forced"]
            + [f"k{t}" for t in range(1, n_turns + 1)]
        )
        for cid, vec in labels.labels.items():
            writer.writerow([cid, labels.scenario, labels.cutoff, int(cid in labels.forced)] + list(vec))


def read_labels(path) -> LabelSet:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path.name}: empty labels file") from None
        if header[:4] != ["conversation_id", "scenario", "cutoff", "forced"]:
            raise ValidationError(f"{path.name}: unexpected labels header {header[:4]}")
        labels: dict[str, tuple[int, ...]] = {}
        scenarios, cutoffs = set(), set()
        forced = set()
        for record in reader:
            cid = record[0]
            scenarios.add(record[1])
            cutoffs.add(int(record[2]))
            if record[3] == "1":
                forced.add(cid)
            labels[cid] = tuple(int(v) for v in record[4:])
    if not labels or len(scenarios) != 1 or len(cutoffs) != 1:
        raise ValidationError(f"{path.name}: labels file must hold one scenario/cutoff block")
    return LabelSet(
        labels=labels,
        scenario=scenarios.pop(),
        cutoff=cutoffs.pop(),
        forced=frozenset(forced),
    )
