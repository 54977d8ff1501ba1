"""Builders for toy rankings and runs used across the test modules."""

import numpy as np

from convpred.core import ConversationRun, RankedItem, TurnRanking


def make_ranking(scores, embeddings, turn=1, query=None, ids=None, critique=None):
    """Items get ascending ids in list order, so sorted score order is valid."""
    ids = ids if ids is not None else [f"i{k:03d}" for k in range(len(scores))]
    items = tuple(
        RankedItem(i, s, np.asarray(e, dtype=float))
        for i, s, e in zip(ids, scores, embeddings)
    )
    return TurnRanking(turn=turn, items=items, query_embedding=query, critique=critique)


def make_run(turn_rankings, cid="c0", target="i000", target_ranks=None):
    return ConversationRun(cid, target, tuple(turn_rankings), target_ranks)


def random_ranking(rng, n_items, dim, turn=1, with_query=False):
    emb = rng.standard_normal((n_items, dim))
    scores = np.sort(rng.standard_normal(n_items))[::-1]
    query = rng.standard_normal(dim) if with_query else None
    return make_ranking(scores.tolist(), emb, turn=turn, query=query)


def random_run(seed, n_turns=3, n_items=4, dim=3, cid="c0", with_query=False,
               with_ranks=False, with_critique=False):
    rng = np.random.default_rng(seed)
    turns = []
    for t in range(1, n_turns + 1):
        ranking = random_ranking(rng, n_items, dim, turn=t, with_query=with_query)
        if with_critique and t % 2 == 0:
            ranking = TurnRanking(
                turn=ranking.turn,
                items=ranking.items,
                query_embedding=ranking.query_embedding,
                critique=f"more like item {t}",
            )
        turns.append(ranking)
    ranks = None
    if with_ranks:
        ranks = tuple(int(rng.integers(1, 50)) if rng.random() < 0.8 else None for _ in range(n_turns))
    return make_run(turns, cid=cid, target="i001", target_ranks=ranks)
