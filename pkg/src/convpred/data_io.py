"""Run-file serialization plus a seeded synthetic conversation generator.

Run file format (JSON Lines, UTF-8, one conversation object per line; lines
starting with '#' are header comments and are skipped on read):

    {"conversation_id": str, "target_id": str,
     "target_ranks": [int|null, ...],
     "turns": [{"turn": int, "query_embedding": [num]|null, "critique": str|null,
                "items": [{"id": str, "score": num, "embedding": [num]}]}]}

``target_ranks[t-1]`` is the full-catalogue rank of the target at turn t when
known, null otherwise. Floats are emitted with Python's shortest round-trip
repr, so write -> read is value-exact.

The generator stands in for a trained retrieval model plus user simulator at
desk scale: a latent query vector is pulled toward the target item each turn,
with the pull rate controlling conversation difficulty, and the full ranked
catalogue is scored by cosine against that query.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    ConversationRun,
    RankedItem,
    TurnRanking,
    ValidationError,
    validate_runs,
)

__all__ = [
    "GenConfig",
    "calibration_config",
    "generate_synthetic",
    "write_runs",
    "read_runs",
    "run_to_dict",
    "run_from_dict",
]


@dataclass(frozen=True)
class GenConfig:
    """Synthetic generator settings.

    Difficulty is induced by the pull rate: "easy" conversations move the
    latent query toward the target embedding quickly, "hard" ones barely at
    all. ``pull_decay`` optionally shrinks the pull rate geometrically per
    turn (1.0 keeps it constant), which concentrates the informative signal
    in early turns.
    """

    n_conversations: int
    dim: int
    catalogue_size: int
    n_turns: int = 10
    top_n: int = 100
    easy_fraction: float = 0.7
    pull_rate_easy: float = 0.35
    pull_rate_hard: float = 0.02
    noise_sigma: float = 0.15
    pull_decay: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_conversations < 1:
            raise ValidationError("n_conversations must be >= 1")
        if self.dim < 1:
            raise ValidationError("dim must be >= 1")
        if self.catalogue_size < 1:
            raise ValidationError("catalogue_size must be >= 1")
        if self.n_turns < 2:
            raise ValidationError("n_turns must be >= 2")
        if not 1 <= self.top_n <= self.catalogue_size:
            raise ValidationError("top_n must satisfy 1 <= top_n <= catalogue_size")
        if not 0.0 <= self.easy_fraction <= 1.0:
            raise ValidationError("easy_fraction must be in [0, 1]")
        if not 0.0 < self.pull_rate_easy <= 1.0:
            raise ValidationError("pull_rate_easy must be in (0, 1]")
        if not 0.0 <= self.pull_rate_hard < 1.0:
            raise ValidationError("pull_rate_hard must be in [0, 1)")
        if self.noise_sigma < 0.0:
            raise ValidationError("noise_sigma must be >= 0")
        if not 0.0 < self.pull_decay <= 1.0:
            raise ValidationError("pull_decay must be in (0, 1]")
        if self.seed < 0:
            raise ValidationError("seed must be a non-negative integer")


def calibration_config(seed: int = 0) -> GenConfig:
    """The shipped default generator: 200 conversations, 10 turns, mixed difficulty."""
    return GenConfig(n_conversations=200, dim=32, catalogue_size=2000, seed=seed)


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return mat / norms


def generate_synthetic(config: GenConfig) -> list[ConversationRun]:
    """Generate conversation runs; a pure function of the config (seed included).

    Catalogue embeddings are i.i.d. standard normal per coordinate, normalized
    to unit length. Per conversation a target is drawn, the latent query q
    starts at a random unit vector, and each turn updates

        q_t = normalize((1 - a_t) * q_{t-1} + a_t * e_target + sigma * g_t)

    with a_t the conversation's pull rate (optionally decayed per turn) and
    g_t i.i.d. standard normal. Turn scores are cosine(q_t, e_i) over the
    whole catalogue; the ranking stores the top_n items and the target's
    full-catalogue rank is kept per turn. Per-conversation substreams make
    generation order-independent and reproducible.
    """
    root = np.random.SeedSequence(config.seed)
    cat_ss, order_ss, conv_root = root.spawn(3)

    catalogue = _unit_rows(
        np.random.default_rng(cat_ss).standard_normal((config.catalogue_size, config.dim))
    )
    item_ids = [f"item_{i:06d}" for i in range(config.catalogue_size)]

    n = config.n_conversations
    perm = np.random.default_rng(order_ss).permutation(n)
    is_easy = np.zeros(n, dtype=bool)
    is_easy[perm[: math.ceil(config.easy_fraction * n)]] = True

    tie_break = np.arange(config.catalogue_size)
    runs: list[ConversationRun] = []
    for i, child in enumerate(conv_root.spawn(n)):
        rng = np.random.default_rng(child)
        target = int(rng.integers(config.catalogue_size))
        q = rng.standard_normal(config.dim)
        q /= np.linalg.norm(q) or 1.0
        base_rate = config.pull_rate_easy if is_easy[i] else config.pull_rate_hard

        turns = []
        target_ranks = []
        for t in range(1, config.n_turns + 1):
            rate = base_rate * config.pull_decay ** (t - 1)
            g = rng.standard_normal(config.dim)
            q = (1.0 - rate) * q + rate * catalogue[target] + config.noise_sigma * g
            q /= np.linalg.norm(q) or 1.0
            scores = catalogue @ q
            order = np.lexsort((tie_break, -scores))
            target_ranks.append(1 + int(np.nonzero(order == target)[0][0]))
            top = order[: config.top_n]
            items = tuple(
                RankedItem(item_ids[j], float(scores[j]), catalogue[j]) for j in top
            )
            turns.append(TurnRanking(turn=t, items=items, query_embedding=q.copy()))
        runs.append(
            ConversationRun(
                conversation_id=f"conv_{i:05d}",
                target_id=item_ids[target],
                turns=tuple(turns),
                target_ranks=tuple(target_ranks),
            )
        )
    return runs


def run_to_dict(run: ConversationRun) -> dict:
    ranks = run.target_ranks
    return {
        "conversation_id": run.conversation_id,
        "target_id": run.target_id,
        "target_ranks": [None] * run.n_turns if ranks is None else list(ranks),
        "turns": [
            {
                "turn": ranking.turn,
                "query_embedding": None
                if ranking.query_embedding is None
                else ranking.query_embedding.tolist(),
                "critique": ranking.critique,
                "items": [
                    {
                        "id": item.item_id,
                        "score": item.score,
                        "embedding": item.embedding.tolist(),
                    }
                    for item in ranking.items
                ],
            }
            for ranking in run.turns
        ],
    }


def run_from_dict(obj: dict, where: str = "run") -> ConversationRun:
    try:
        turns = tuple(
            TurnRanking(
                turn=int(tr["turn"]),
                items=tuple(
                    RankedItem(str(it["id"]), it["score"], it["embedding"])
                    for it in tr["items"]
                ),
                query_embedding=tr.get("query_embedding"),
                critique=tr.get("critique"),
            )
            for tr in obj["turns"]
        )
        return ConversationRun(
            conversation_id=str(obj["conversation_id"]),
            target_id=str(obj["target_id"]),
            turns=turns,
            target_ranks=obj.get("target_ranks"),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{where}: malformed run record ({exc})") from exc
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def write_runs(runs, path, header_comment: str | None = None) -> None:
    """Write validated runs as JSON Lines; refuses structurally invalid input."""
    validate_runs(runs)
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        if header_comment:
            for line in header_comment.splitlines():
                fh.write(line if line.startswith("#") else f"# {line}")
                fh.write("\n")
        for run in runs:
            fh.write(json.dumps(run_to_dict(run), separators=(",", ":"), allow_nan=False))
            fh.write("\n")


def read_runs(path) -> list[ConversationRun]:
    """Read and validate a run file; raises ValidationError with context."""
    path = Path(path)
    runs: list[ConversationRun] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path.name} line {lineno}: invalid JSON ({exc})") from exc
            runs.append(run_from_dict(obj, where=f"{path.name} line {lineno}"))
    validate_runs(runs)
    return runs
