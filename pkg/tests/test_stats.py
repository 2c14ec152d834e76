import numpy as np
import pytest

from fairpost.errors import (
    CommunityOutOfRange,
    DegenerateGroup,
    EmptyCommunity,
    EmptyDataset,
    LengthMismatch,
)
from fairpost.stats import (
    GroupStatistics,
    Record,
    estimate_community_weights,
    estimate_joint_statistics,
    estimate_multiclass_statistics,
    from_group_statistics,
    to_group_statistics,
)

from conftest import random_group_statistics


def _eight_records():
    # (sensitive, community, label) laid out so every cell count is easy to
    # tally by eye; features are irrelevant to the counting
    rows = [
        (0, 1, 1), (0, 1, 1), (0, 1, 0),
        (0, 2, 0),
        (1, 1, 1),
        (1, 2, 0), (1, 2, 1), (1, 2, 0),
    ]
    return [Record(features=(float(i),), sensitive=a, community=c, label=y)
            for i, (a, c, y) in enumerate(rows)]


def test_joint_statistics_hand_tally():
    records = _eight_records()
    preds = [1, 0, 0, 1, 1, 0, 1, 1]
    gs = estimate_joint_statistics(preds, records, k=2)

    # community sizes 4 and 4 out of 8
    assert np.allclose(gs.p, [0.5, 0.5])
    # male, community 1: rows 0-2 -> (y=1,yh=1), (y=1,yh=0), (y=0,yh=0)
    assert gs.tp[0, 0] == pytest.approx(1 / 8)
    assert gs.fn[0, 0] == pytest.approx(1 / 8)
    assert gs.tn[0, 0] == pytest.approx(1 / 8)
    assert gs.fp[0, 0] == 0.0
    # male, community 2: row 3 -> (y=0,yh=1)
    assert gs.fp[0, 1] == pytest.approx(1 / 8)
    assert gs.tp[0, 1] == gs.fn[0, 1] == gs.tn[0, 1] == 0.0
    # female, community 1: row 4 -> (y=1,yh=1)
    assert gs.tp[1, 0] == pytest.approx(1 / 8)
    # female, community 2: rows 5-7 -> (0,0), (1,1), (0,1)
    assert gs.tn[1, 1] == pytest.approx(1 / 8)
    assert gs.tp[1, 1] == pytest.approx(1 / 8)
    assert gs.fp[1, 1] == pytest.approx(1 / 8)
    # qualified masses: males with y=1 are rows 0,1 -> 2/8; females rows 4,6 -> 2/8
    assert gs.alpha == pytest.approx(2 / 8)
    assert gs.beta == pytest.approx(2 / 8)
    gs.validate()
    # base error: rows 1, 3, 7 are wrong -> 3/8
    assert gs.base_error() == pytest.approx(3 / 8)


def test_community_weights_recount():
    records = _eight_records()
    p = estimate_community_weights(records)
    counts = [0, 0]
    for r in records:
        counts[r.community - 1] += 1
    assert np.allclose(p, np.array(counts) / len(records))


def test_empty_dataset_rejected():
    with pytest.raises(EmptyDataset):
        estimate_community_weights([])


def test_empty_community_rejected():
    records = [r for r in _eight_records() if r.community == 1]
    with pytest.raises(EmptyCommunity):
        estimate_joint_statistics([1] * len(records), records, k=2)


def test_community_out_of_range():
    records = _eight_records()
    with pytest.raises(CommunityOutOfRange):
        estimate_joint_statistics([1] * 8, records, k=1)


def test_prediction_length_mismatch():
    records = _eight_records()
    with pytest.raises(LengthMismatch):
        estimate_joint_statistics([1, 0], records, k=2)


def test_all_negative_group_is_degenerate():
    records = [Record(features=(0.0,), sensitive=a, community=1, label=y)
               for a, y in [(0, 1), (0, 0), (1, 0), (1, 0)]]  # no qualified females
    with pytest.raises(DegenerateGroup):
        estimate_joint_statistics([1, 0, 0, 1], records, k=1)


def test_record_validation():
    with pytest.raises(ValueError):
        Record(features=(0.0,), sensitive=2, community=1, label=1)
    with pytest.raises(ValueError):
        Record(features=(0.0,), sensitive=0, community=0, label=1)


def test_group_statistics_json_round_trip(rng):
    gs = random_group_statistics(rng, 3)
    back = GroupStatistics.from_json_dict(gs.to_json_dict())
    assert back.k == gs.k
    assert np.array_equal(back.p, gs.p)
    assert np.array_equal(back.tp, gs.tp)
    assert np.array_equal(back.fn, gs.fn)
    assert back.alpha == gs.alpha and back.beta == gs.beta


def _twelve_multiclass_records():
    rows = [
        (0, 1, 1), (0, 1, 2), (0, 1, 3),
        (0, 2, 1), (0, 2, 2),
        (1, 1, 1), (1, 1, 3),
        (1, 2, 1), (1, 2, 2), (1, 2, 3), (1, 2, 1), (1, 2, 2),
    ]
    return [Record(features=(0.0,), sensitive=a, community=c, label=y)
            for a, c, y in rows]


def test_multiclass_hand_tally():
    records = _twelve_multiclass_records()
    preds = [1, 2, 1, 3, 2, 1, 3, 2, 2, 3, 1, 1]
    ms = estimate_multiclass_statistics(preds, records, eo_label=1)
    assert ms.labels == (1, 2, 3)
    assert ms.n == 3 and ms.k == 2
    # (true=1, pred=1, a=0, c=1): row 0 only
    assert ms.joint[0, 0, 0, 0] == pytest.approx(1 / 12)
    # (true=3, pred=1, a=0, c=1): row 2
    assert ms.joint[2, 0, 0, 0] == pytest.approx(1 / 12)
    # (true=1, pred=3, a=0, c=2): row 3
    assert ms.joint[0, 2, 0, 1] == pytest.approx(1 / 12)
    # (true=1, pred=2, a=1, c=2): rows 7
    assert ms.joint[0, 1, 1, 1] == pytest.approx(1 / 12)
    # (true=1, pred=1, a=1, c=2): row 10
    assert ms.joint[0, 0, 1, 1] == pytest.approx(1 / 12)
    # qualified class-1 masses by sensitive group: rows 0,3,5 have y=1,a=0... rows (a=0,y=1) = 0,3; (a=1,y=1) = 5? no:
    # y=1 rows are 0, 3, 5, 7, 10 -> a=0: rows 0,3; a=1: rows 5,7,10
    assert ms.alpha == pytest.approx(2 / 12)
    assert ms.beta == pytest.approx(3 / 12)
    # correct predictions: rows 0, 1, 4, 5, 6, 8, 9, 10
    assert ms.accuracy() == pytest.approx(8 / 12)
    ms.validate()


def test_binary_multiclass_collapse_round_trip(rng):
    gs = random_group_statistics(rng, 3)
    ms = from_group_statistics(gs)
    back = to_group_statistics(ms)
    assert np.allclose(back.tp, gs.tp, atol=0)
    assert np.allclose(back.fn, gs.fn, atol=0)
    assert np.allclose(back.fp, gs.fp, atol=0)
    assert np.allclose(back.tn, gs.tn, atol=0)
    assert back.alpha == pytest.approx(gs.alpha, abs=1e-15)
    assert back.beta == pytest.approx(gs.beta, abs=1e-15)


def test_community_error_matches_cell_sums(rng):
    gs = random_group_statistics(rng, 4)
    for c in range(1, 5):
        wrong = gs.fn[0, c - 1] + gs.fp[0, c - 1] + gs.fn[1, c - 1] + gs.fp[1, c - 1]
        assert gs.community_error(c) == pytest.approx(wrong / gs.p[c - 1])
