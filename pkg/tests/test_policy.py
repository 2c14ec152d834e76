import numpy as np
import pytest

from fairpost.errors import NonStochasticColumn, UnpackDimensionMismatch
from fairpost.policy import (
    FairPolicy,
    MulticlassPolicy,
    RngStream,
    apply_policy,
    apply_policy_multiclass,
    fair_decide,
    fair_decide_multiclass,
    policy_from_solution,
    read_policy,
    write_policy,
)


class _FakeSolution:
    def __init__(self, z):
        self.z = np.asarray(z, dtype=float)


def test_stream_single_draws_match_batch():
    stream = RngStream(seed=11, stream=5)
    batch = RngStream(seed=11, stream=5).uniforms(40)
    singles = np.array([RngStream(seed=11, stream=5).uniform(i) for i in range(40)])
    assert np.array_equal(batch, singles)
    assert np.array_equal(stream.uniforms(40), batch)


def test_stream_random_access_is_stateless():
    s = RngStream(seed=3, stream=9)
    u17 = s.uniform(17)
    _ = s.uniform(2)
    assert s.uniform(17) == u17
    # a different stream index decorrelates
    assert RngStream(seed=3, stream=10).uniform(17) != u17


def test_stream_cursor_walks_forward():
    s = RngStream(seed=1, stream=1)
    first, second = s.next_uniform(), s.next_uniform()
    fresh = RngStream(seed=1, stream=1)
    assert [first, second] == [fresh.uniform(0), fresh.uniform(1)]


def test_binary_unpack_layout():
    # distinct entries expose the variable ordering: per community block
    # [keep-0 | a=0, keep-1 | a=0, keep-0 | a=1, keep-1 | a=1]
    z = np.arange(8, dtype=float) / 8.0
    pol = policy_from_solution(_FakeSolution(z), k=2)
    assert pol.keep0[0, 0] == 0 / 8 and pol.keep1[0, 0] == 1 / 8
    assert pol.keep0[1, 0] == 2 / 8 and pol.keep1[1, 0] == 3 / 8
    assert pol.keep0[0, 1] == 4 / 8 and pol.keep1[0, 1] == 5 / 8
    assert pol.keep0[1, 1] == 6 / 8 and pol.keep1[1, 1] == 7 / 8


def test_unpack_clips_solver_jitter():
    z = np.array([1.0 + 1e-12, -1e-12, 0.5, 0.5])
    pol = policy_from_solution(_FakeSolution(z), k=1)
    assert pol.keep0[0, 0] == 1.0
    assert pol.keep1[0, 0] == 0.0


def test_unpack_dimension_mismatch():
    with pytest.raises(UnpackDimensionMismatch):
        policy_from_solution(_FakeSolution(np.zeros(6)), k=2)


def test_keep_probability_selects_cell():
    pol = FairPolicy(k=2,
                     keep0=np.array([[0.1, 0.2], [0.3, 0.4]]),
                     keep1=np.array([[0.5, 0.6], [0.7, 0.8]]))
    assert pol.keep_probability(base=0, sensitive=1, community=2) == 0.4
    assert pol.keep_probability(base=1, sensitive=0, community=1) == 0.5


def test_deterministic_edges_never_flip():
    pol = FairPolicy(k=1,
                     keep0=np.array([[0.0], [1.0]]),
                     keep1=np.array([[1.0], [0.0]]))
    stream = RngStream(seed=0, stream=0)
    for i in range(2000):
        # a=0: keep-0 prob 0 -> base 0 always flipped to 1; keep-1 prob 1 -> 1 stays
        assert fair_decide(0, 0, 1, pol, stream, index=i) == 1
        assert fair_decide(1, 0, 1, pol, stream, index=2000 + i) == 1
        # a=1: mirrored
        assert fair_decide(0, 1, 1, pol, stream, index=4000 + i) == 0
        assert fair_decide(1, 1, 1, pol, stream, index=6000 + i) == 0


def test_vectorised_application_matches_scalar_loop():
    rng = np.random.default_rng(5)
    k = 3
    pol = FairPolicy(k=k, keep0=rng.random((2, k)), keep1=rng.random((2, k)))
    n = 500
    base = rng.integers(0, 2, size=n)
    sens = rng.integers(0, 2, size=n)
    comm = rng.integers(1, k + 1, size=n)
    stream = RngStream(seed=77, stream=4)
    vec = apply_policy(base, sens, comm, pol, stream)
    scalar = np.array([
        fair_decide(int(base[i]), int(sens[i]), int(comm[i]), pol,
                    RngStream(seed=77, stream=4), index=i)
        for i in range(n)
    ])
    assert np.array_equal(vec, scalar)


def test_acceptance_frequencies_converge():
    pol = FairPolicy(k=1, keep0=np.array([[0.3], [0.6]]),
                     keep1=np.array([[0.8], [0.45]]))
    n = 100_000
    stream = RngStream(seed=13, stream=2)
    base = np.tile([0, 1], n // 2)
    sens = np.repeat([0, 1], n // 2)
    comm = np.ones(n, dtype=int)
    out = apply_policy(base, sens, comm, pol, stream)
    for a in (0, 1):
        for j in (0, 1):
            mask = (sens == a) & (base == j)
            keep_rate = float(np.mean(out[mask] == j))
            p = pol.keep_probability(j, a, 1)
            sigma = np.sqrt(p * (1 - p) / mask.sum())
            assert abs(keep_rate - p) < 4 * sigma


def test_binary_policy_file_round_trip(tmp_path, rng):
    pol = FairPolicy(k=3, keep0=rng.random((2, 3)), keep1=rng.random((2, 3)))
    path = tmp_path / "policy.txt"
    write_policy(pol, path, comments=["round trip"])
    back = read_policy(path)
    assert isinstance(back, FairPolicy)
    assert back.k == 3
    assert np.array_equal(back.keep0, pol.keep0)
    assert np.array_equal(back.keep1, pol.keep1)


def test_multiclass_unpack_layout():
    n, k = 3, 1
    z = np.zeros(2 * k * n * n)
    # column (c=1, a=0, j=0) gets distribution (0.2, 0.5, 0.3) over outputs
    from fairpost.lp import MulticlassLp
    for out, mass in [(0, 0.2), (1, 0.5), (2, 0.3)]:
        z[MulticlassLp.var_index(n, 1, 0, 0, out)] = mass
    # remaining columns: identity
    for a in (0, 1):
        for j in range(n):
            if (a, j) == (0, 0):
                continue
            z[MulticlassLp.var_index(n, 1, a, j, j)] = 1.0
    pol = policy_from_solution(_FakeSolution(z), k=1, n=3, labels=(1, 2, 3))
    assert isinstance(pol, MulticlassPolicy)
    assert np.allclose(pol.column(base_label=1, sensitive=0, community=1),
                       [0.2, 0.5, 0.3])
    assert np.allclose(pol.column(base_label=2, sensitive=0, community=1),
                       [0.0, 1.0, 0.0])


def test_multiclass_rejects_non_stochastic_column():
    z = np.zeros(2 * 1 * 4)  # n=2, k=1: column sums 0
    with pytest.raises(NonStochasticColumn):
        policy_from_solution(_FakeSolution(z), k=1, n=2, labels=(0, 1))


def test_multiclass_decide_inverse_cdf():
    mats = np.zeros((1, 2, 3, 3))
    mats[0, :, :, :] = np.array([[0.2, 0.0, 1.0],
                                 [0.3, 0.5, 0.0],
                                 [0.5, 0.5, 0.0]])[None, :, :]
    pol = MulticlassPolicy(k=1, n=3, labels=(10, 20, 30), matrices=mats)

    class _Fixed:
        def __init__(self, u):
            self.u = u
        def uniform(self, index):
            return self.u

    # base label 10 (column 0): thresholds at 0.2 and 0.5
    assert fair_decide_multiclass(10, 0, 1, pol, _Fixed(0.1), 0) == 10
    assert fair_decide_multiclass(10, 0, 1, pol, _Fixed(0.2), 0) == 20
    assert fair_decide_multiclass(10, 0, 1, pol, _Fixed(0.49), 0) == 20
    assert fair_decide_multiclass(10, 0, 1, pol, _Fixed(0.5), 0) == 30
    assert fair_decide_multiclass(10, 0, 1, pol, _Fixed(0.999), 0) == 30
    # base label 30 (column 2) is deterministic
    assert fair_decide_multiclass(30, 1, 1, pol, _Fixed(0.9999), 0) == 10


def test_multiclass_policy_file_round_trip(tmp_path, rng):
    raw = rng.random((2, 2, 3, 3))
    mats = raw / raw.sum(axis=2, keepdims=True)
    pol = MulticlassPolicy(k=2, n=3, labels=(1, 2, 3), matrices=mats)
    path = tmp_path / "mpolicy.txt"
    write_policy(pol, path)
    back = read_policy(path)
    assert isinstance(back, MulticlassPolicy)
    assert back.labels == (1, 2, 3)
    assert np.array_equal(back.matrices, pol.matrices)


def test_multiclass_application_distributes(rng):
    mats = np.zeros((1, 2, 2, 2))
    mats[0, :, :, 0] = [0.25, 0.75]  # base index 0 -> (0.25, 0.75)
    mats[0, :, :, 1] = [0.0, 1.0]
    pol = MulticlassPolicy(k=1, n=2, labels=(5, 9), matrices=mats)
    n = 40_000
    base = np.full(n, 5)
    out = apply_policy_multiclass(base, np.zeros(n, dtype=int),
                                  np.ones(n, dtype=int), pol,
                                  RngStream(seed=21, stream=8))
    share = float(np.mean(out == 9))
    sigma = np.sqrt(0.75 * 0.25 / n)
    assert abs(share - 0.75) < 4 * sigma
