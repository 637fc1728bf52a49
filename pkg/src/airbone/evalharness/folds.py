"""Deterministic cross-user fold splits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_user_ids: tuple
    test_user_ids: tuple


def kfold_split(user_ids, k: int, seed: int) -> list[FoldSplit]:
    """Shuffle users by seed and partition test sets as evenly as possible;
    the test sets across folds partition the whole population."""
    users = list(user_ids)
    if len(set(users)) != len(users):
        raise ValueError("duplicate user ids")
    if not 2 <= k <= len(users):
        raise ValueError(f"k={k} must be in [2, {len(users)}]")
    order = np.random.default_rng(seed).permutation(len(users))
    shuffled = [users[i] for i in order]
    base, extra = divmod(len(users), k)
    folds = []
    pos = 0
    for f in range(k):
        size = base + (1 if f < extra else 0)
        test = tuple(sorted(shuffled[pos:pos + size]))
        train = tuple(sorted(set(users) - set(test)))
        folds.append(FoldSplit(f, train, test))
        pos += size
    return folds
