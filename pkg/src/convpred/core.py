"""Core domain types and elementary ranking/geometry operations.

A conversation run is the unit every other module consumes: one target item,
one ranked list of retrieved items per turn, an embedding for every item.
Scores are "higher is better" throughout and rank 1 is the top of a ranking.
All types are immutable after construction and all operations are pure, so
conversations can be processed concurrently without coordination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ValidationError",
    "RankedItem",
    "TurnRanking",
    "ConversationRun",
    "as_embedding",
    "cosine_similarity",
    "reciprocal_rank",
    "found_by",
    "stored_rank",
    "round_half_up",
    "validate_run",
    "validate_runs",
    "runs_equal",
]


class ValidationError(ValueError):
    """A run, ranking, or config violates a structural invariant."""


def as_embedding(values) -> np.ndarray:
    """Coerce ``values`` to a finite, non-empty 1-D float64 vector."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("embedding must be a non-empty 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("embedding has non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class RankedItem:
    """One retrieved item: opaque id, retrieval score, embedding."""

    item_id: str
    score: float
    embedding: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "score", float(self.score))
        object.__setattr__(self, "embedding", as_embedding(self.embedding))


@dataclass(frozen=True, eq=False)
class TurnRanking:
    """The ranked list retrieved at one turn.

    Items must be sorted by score, non-increasing, with exact score ties
    broken by item_id ascending (checked by :func:`validate_run`).
    ``query_embedding`` is optional: externally produced runs may supply the
    live query vector; otherwise features fall back to a centroid surrogate.
    """

    turn: int
    items: tuple[RankedItem, ...]
    query_embedding: np.ndarray | None = None
    critique: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if self.query_embedding is not None:
            object.__setattr__(self, "query_embedding", as_embedding(self.query_embedding))


@dataclass(frozen=True, eq=False)
class ConversationRun:
    """One conversation: a target item and consecutive per-turn rankings.

    ``target_ranks`` optionally records the full-catalogue rank of the target
    at each turn (1-based), even when it falls outside the stored ranking
    depth; ``None`` entries mean the rank is unknown at that turn.
    """

    conversation_id: str
    target_id: str
    turns: tuple[TurnRanking, ...]
    target_ranks: tuple[int | None, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if self.target_ranks is not None:
            ranks = tuple(self.target_ranks)
            if all(r is None for r in ranks):
                ranks = None
            object.__setattr__(self, "target_ranks", ranks)

    @property
    def n_turns(self) -> int:
        return len(self.turns)


def cosine_similarity(a, b) -> float:
    """Standard cosine similarity in [-1, 1]; symmetric in its arguments."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise ValueError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm vector")
    return float(np.clip(float(va @ vb) / (na * nb), -1.0, 1.0))


def stored_rank(ranking: TurnRanking, target_id: str) -> int | None:
    """1-based position of ``target_id`` in the stored items, None if absent."""
    for pos, item in enumerate(ranking.items, start=1):
        if item.item_id == target_id:
            return pos
    return None


def reciprocal_rank(ranking: TurnRanking, target_id: str) -> float:
    """1/rank of the target within the ranking; 0.0 when absent."""
    pos = stored_rank(ranking, target_id)
    return 0.0 if pos is None else 1.0 / pos


def found_by(ranking: TurnRanking, target_id: str, cutoff: int) -> bool:
    """True iff the target sits at rank <= cutoff in the stored ranking (inclusive)."""
    if cutoff < 1:
        raise ValueError(f"cutoff must be >= 1, got {cutoff}")
    pos = stored_rank(ranking, target_id)
    return pos is not None and pos <= cutoff


def round_half_up(x: float) -> int:
    """Round a non-negative quantity to the nearest integer, halves away from zero."""
    return int(math.floor(x + 0.5))


def _check_embedding(vec: np.ndarray, dim: int | None, where: str, what: str) -> int:
    if dim is not None and vec.size != dim:
        raise ValidationError(f"{where}: dimension mismatch for {what} ({vec.size} vs {dim})")
    if float(np.linalg.norm(vec)) == 0.0:
        raise ValidationError(f"{where}: zero-norm embedding for {what}")
    return int(vec.size)


def validate_run(run: ConversationRun) -> int | None:
    """Check every structural invariant of one run; return the embedding dim.

    Raises ValidationError naming the conversation and turn on the first
    violation. Returns None only when the run holds no embeddings at all.
    """
    cid = run.conversation_id
    if not cid:
        raise ValidationError("conversation_id must be non-empty")
    if not run.target_id:
        raise ValidationError(f"{cid}: target_id must be non-empty")
    k = len(run.turns)
    if k < 2:
        raise ValidationError(f"{cid}: conversation needs at least 2 turns, got {k}")
    dim: int | None = None
    for expected, ranking in enumerate(run.turns, start=1):
        where = f"{cid} turn {ranking.turn}"
        if ranking.turn != expected:
            raise ValidationError(
                f"{cid}: non-consecutive turns (expected {expected}, got {ranking.turn})"
            )
        seen: set[str] = set()
        prev: RankedItem | None = None
        for item in ranking.items:
            if item.item_id in seen:
                raise ValidationError(f"{where}: duplicate item_id {item.item_id!r}")
            seen.add(item.item_id)
            if not math.isfinite(item.score):
                raise ValidationError(f"{where}: non-finite score for item {item.item_id!r}")
            dim = _check_embedding(item.embedding, dim, where, f"item {item.item_id!r}")
            if prev is not None:
                if prev.score < item.score:
                    raise ValidationError(f"{where}: items not sorted by score")
                if prev.score == item.score and prev.item_id >= item.item_id:
                    raise ValidationError(
                        f"{where}: items not sorted (score tie must break by item_id ascending)"
                    )
            prev = item
        if ranking.query_embedding is not None:
            dim = _check_embedding(ranking.query_embedding, dim, where, "query_embedding")
    if run.target_ranks is not None:
        if len(run.target_ranks) != k:
            raise ValidationError(
                f"{cid}: target_ranks length {len(run.target_ranks)} != number of turns {k}"
            )
        for t, rank in enumerate(run.target_ranks, start=1):
            if rank is not None and (not isinstance(rank, int) or rank < 1):
                raise ValidationError(f"{cid} turn {t}: target rank must be a positive int or null")
    return dim


def validate_runs(runs) -> int | None:
    """Validate every run and enforce one embedding dimension across them all."""
    dim: int | None = None
    seen_ids: set[str] = set()
    for run in runs:
        if run.conversation_id in seen_ids:
            raise ValidationError(f"duplicate conversation_id {run.conversation_id!r}")
        seen_ids.add(run.conversation_id)
        run_dim = validate_run(run)
        if run_dim is None:
            continue
        if dim is None:
            dim = run_dim
        elif run_dim != dim:
            raise ValidationError(
                f"{run.conversation_id}: dimension mismatch across runs ({run_dim} vs {dim})"
            )
    return dim


def _optional_vec_equal(a: np.ndarray | None, b: np.ndarray | None) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.shape == b.shape and bool(np.array_equal(a, b))


def runs_equal(a: ConversationRun, b: ConversationRun) -> bool:
    """Exact structural equality (ids, scores, embeddings, ranks, critiques)."""
    if (
        a.conversation_id != b.conversation_id
        or a.target_id != b.target_id
        or a.target_ranks != b.target_ranks
        or len(a.turns) != len(b.turns)
    ):
        return False
    for ta, tb in zip(a.turns, b.turns):
        if ta.turn != tb.turn or ta.critique != tb.critique:
            return False
        if not _optional_vec_equal(ta.query_embedding, tb.query_embedding):
            return False
        if len(ta.items) != len(tb.items):
            return False
        for ia, ib in zip(ta.items, tb.items):
            if ia.item_id != ib.item_id or ia.score != ib.score:
                return False
            if not np.array_equal(ia.embedding, ib.embedding):
                return False
    return True
