"""Likert means, exact-agreement percentage and pairwise majority votes."""

from __future__ import annotations

import csv
import enum
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

LIKERT = range(1, 6)
UNNAMED = "(unnamed)"


@dataclass(frozen=True)
class RatingTable:
    items: tuple[str, ...]
    annotators: tuple[str, ...]
    ratings: np.ndarray  # (items, annotators) int

    def __post_init__(self) -> None:
        r = np.asarray(self.ratings)
        if r.shape != (len(self.items), len(self.annotators)):
            raise ValueError(f"ratings shape {r.shape} does not match items x annotators")
        if r.size and (r.min() < 1 or r.max() > 5):
            raise ValueError("ratings must be integers in 1..5")


def rating_table(rows: Sequence[Sequence[int]]) -> RatingTable:
    """Table from a nested list, one inner list of annotator ratings per item."""
    arr = np.asarray(rows, dtype=np.int64)
    if arr.ndim != 2:
        raise ValueError("ratings must form a rectangular items x annotators grid")
    return RatingTable(
        tuple(str(i) for i in range(arr.shape[0])),
        tuple(str(j) for j in range(arr.shape[1])),
        arr,
    )


def likert_mean(t: RatingTable) -> float:
    if t.ratings.size == 0:
        raise ValueError("empty rating table")
    return float(np.mean(t.ratings))


def iaa_percent(t: RatingTable) -> float:
    """Percentage of items on which every annotator gave the same rating."""
    if len(t.annotators) < 2:
        raise ValueError("agreement needs at least 2 annotators")
    if len(t.items) == 0:
        raise ValueError("empty rating table")
    agree = np.all(t.ratings == t.ratings[:, :1], axis=1)
    return 100.0 * float(agree.sum()) / len(t.items)


class Outcome(enum.Enum):
    TIE = "tie"


@dataclass(frozen=True)
class PairwiseVotes:
    candidate_a: str
    candidate_b: str
    votes: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.votes:
            raise ValueError("no votes")
        allowed = {self.candidate_a, self.candidate_b}
        stray = set(self.votes) - allowed
        if stray:
            raise ValueError(f"votes for unknown candidates: {sorted(stray)}")


def majority_vote(v: PairwiseVotes) -> str | Outcome:
    """The candidate with strictly more votes, or ``Outcome.TIE``."""
    c = Counter(v.votes)
    a, b = c[v.candidate_a], c[v.candidate_b]
    if a == b:
        return Outcome.TIE
    return v.candidate_a if a > b else v.candidate_b


# ---------------------------------------------------------------------------
# CSV input


def read_ratings_csv(path: str | Path) -> RatingTable:
    """Long-format ``item_id, annotator_id, rating`` CSV; every cell must be present."""
    cells: dict[tuple[str, str], int] = {}
    items: dict[str, None] = {}
    annotators: dict[str, None] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"item_id", "annotator_id", "rating"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValueError(f"{path}: header must contain {sorted(need)}")
        for row in reader:
            key = (row["item_id"], row["annotator_id"])
            if key in cells:
                raise ValueError(f"{path}: duplicate rating for {key}")
            try:
                value = int(row["rating"])
            except ValueError:
                raise ValueError(f"{path}: non-integer rating {row['rating']!r}") from None
            if value not in LIKERT:
                raise ValueError(f"{path}: rating {value} outside 1..5")
            cells[key] = value
            items.setdefault(row["item_id"])
            annotators.setdefault(row["annotator_id"])
    grid = np.zeros((len(items), len(annotators)), dtype=np.int64)
    for i, item in enumerate(items):
        for j, ann in enumerate(annotators):
            if (item, ann) not in cells:
                raise ValueError(f"{path}: missing rating for item {item!r} by {ann!r}")
            grid[i, j] = cells[(item, ann)]
    return RatingTable(tuple(items), tuple(annotators), grid)


def read_votes_csv(path: str | Path) -> dict[str, PairwiseVotes]:
    """``pair_id, candidate, voter_id`` CSV grouped into one vote set per pair."""
    by_pair: dict[str, list[str]] = defaultdict(list)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"pair_id", "candidate", "voter_id"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValueError(f"{path}: header must contain {sorted(need)}")
        for row in reader:
            by_pair[row["pair_id"]].append(row["candidate"])
    out = {}
    for pair, votes in by_pair.items():
        cands = sorted(set(votes))
        if len(cands) > 2:
            raise ValueError(f"{path}: pair {pair!r} has more than two candidates")
        # a unanimous pair never names the losing candidate
        b = cands[1] if len(cands) == 2 else UNNAMED
        out[pair] = PairwiseVotes(cands[0], b, tuple(votes))
    return out
