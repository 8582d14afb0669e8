import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from motionzs.qualstats import (
    Outcome,
    PairwiseVotes,
    iaa_percent,
    likert_mean,
    majority_vote,
    rating_table,
    read_ratings_csv,
    read_votes_csv,
)

grids = st.integers(1, 12).flatmap(
    lambda n: st.integers(2, 5).flatmap(
        lambda k: st.lists(st.lists(st.integers(1, 5), min_size=k, max_size=k), min_size=n, max_size=n)
    )
)


def test_all_ones_table():
    t = rating_table([[1, 1]] * 31)
    assert likert_mean(t) == 1.0
    assert iaa_percent(t) == 100.0


def test_small_tables():
    assert likert_mean(rating_table([[3, 4]])) == 3.5
    assert iaa_percent(rating_table([[3, 3], [4, 5]])) == 50.0
    assert iaa_percent(rating_table([[1, 2], [4, 5]])) == 0.0


def test_invalid_tables():
    with pytest.raises(ValueError):
        rating_table([[3, 6]])
    with pytest.raises(ValueError):
        iaa_percent(rating_table([[3], [4]]))
    with pytest.raises(ValueError):
        likert_mean(rating_table(np.zeros((0, 2), dtype=int)))


@given(grids, st.randoms())
def test_table_properties(rows, rnd):
    t = rating_table(rows)
    assert 1.0 <= likert_mean(t) <= 5.0
    cols = list(range(len(rows[0])))
    rnd.shuffle(cols)
    permuted = rating_table([[r[c] for c in cols] for r in rows])
    assert iaa_percent(permuted) == iaa_percent(t)


def test_majority_examples():
    assert majority_vote(PairwiseVotes("A", "B", ("A", "B", "A", "B", "A"))) == "A"
    assert majority_vote(PairwiseVotes("A", "B", ("A", "B"))) is Outcome.TIE
    assert majority_vote(PairwiseVotes("A", "B", ("B",) * 5)) == "B"
    with pytest.raises(ValueError):
        PairwiseVotes("A", "B", ())
    with pytest.raises(ValueError):
        PairwiseVotes("A", "B", ("C",))


@given(st.lists(st.sampled_from("ab"), min_size=1, max_size=9), st.randoms())
def test_majority_properties(votes, rnd):
    v = PairwiseVotes("a", "b", tuple(votes))
    shuffled = list(votes)
    rnd.shuffle(shuffled)
    assert majority_vote(PairwiseVotes("a", "b", tuple(shuffled))) == majority_vote(v)
    swap = {"a": "b", "b": "a"}
    flipped = majority_vote(PairwiseVotes("b", "a", tuple(swap[x] for x in votes)))
    original = majority_vote(v)
    assert flipped == (original if original is Outcome.TIE else swap[original])


def test_ratings_csv(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("item_id,annotator_id,rating\nd1,ann1,3\nd1,ann2,3\nd2,ann1,4\nd2,ann2,5\n")
    t = read_ratings_csv(p)
    assert t.items == ("d1", "d2") and t.annotators == ("ann1", "ann2")
    assert iaa_percent(t) == 50.0 and likert_mean(t) == 3.75
    p.write_text("item_id,annotator_id,rating\nd1,ann1,3\nd1,ann2,3\nd2,ann1,4\n")
    with pytest.raises(ValueError, match="missing"):
        read_ratings_csv(p)
    p.write_text("item_id,annotator_id,rating\nd1,ann1,0\n")
    with pytest.raises(ValueError, match="outside"):
        read_ratings_csv(p)


def test_votes_csv(tmp_path):
    p = tmp_path / "v.csv"
    p.write_text("pair_id,candidate,voter_id\n"
                 "p1,x,1\np1,y,2\np1,x,3\np1,y,4\np1,x,5\n"
                 "p2,u,1\np2,v,2\n"
                 "p3,w,1\n")
    res = {k: majority_vote(v) for k, v in read_votes_csv(p).items()}
    assert res == {"p1": "x", "p2": Outcome.TIE, "p3": "w"}
