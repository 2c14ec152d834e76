import numpy as np
import pytest

from fairpost.stats import GroupStatistics, MulticlassStats


def random_group_statistics(rng: np.random.Generator, k: int,
                            min_rate_mass: float = 0.02,
                            min_community: float = 0.03) -> GroupStatistics:
    """A valid random instance: community weights and per-group confusion
    masses drawn from Dirichlet distributions, resampled until the qualified
    masses for both sensitive groups clear a floor (the LP divides by them)."""
    while True:
        p = rng.dirichlet(np.ones(k) * 2.0)
        if p.min() < min_community:
            continue
        cells = rng.dirichlet(np.ones(8), size=k)  # per community: (a, tp fp tn fn)
        tp = np.empty((2, k)); fp = np.empty((2, k))
        tn = np.empty((2, k)); fn = np.empty((2, k))
        for c in range(k):
            tp[0, c], fp[0, c], tn[0, c], fn[0, c] = cells[c, 0:4] * p[c]
            tp[1, c], fp[1, c], tn[1, c], fn[1, c] = cells[c, 4:8] * p[c]
        alpha = float(tp[0].sum() + fn[0].sum())
        beta = float(tp[1].sum() + fn[1].sum())
        if alpha < min_rate_mass or beta < min_rate_mass:
            continue
        gs = GroupStatistics(k=k, p=p, tp=tp, fp=fp, tn=tn, fn=fn,
                             alpha=alpha, beta=beta)
        gs.validate()
        return gs


def random_multiclass_stats(rng: np.random.Generator, n: int, k: int,
                            min_eo_mass: float = 0.01) -> MulticlassStats:
    """Random joint distribution over (true, predicted, sensitive, community)
    with every community and both sensitive slices of the EO class populated."""
    labels = tuple(range(1, n + 1))
    while True:
        p = rng.dirichlet(np.ones(k) * 2.0)
        if p.min() < 0.05:
            continue
        joint = np.zeros((n, n, 2, k))
        for c in range(k):
            joint[:, :, :, c] = rng.dirichlet(np.ones(n * n * 2)).reshape(n, n, 2) * p[c]
        eo_label = labels[0]
        eo = 0
        if joint[eo, :, 0, :].sum() < min_eo_mass or joint[eo, :, 1, :].sum() < min_eo_mass:
            continue
        ms = MulticlassStats(k=k, n=n, labels=labels, p=p, joint=joint,
                             alpha=float(joint[eo, :, 0, :].sum()),
                             beta=float(joint[eo, :, 1, :].sum()),
                             eo_label=eo_label)
        ms.validate()
        return ms


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
