import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from affectfusion import recurrence
from affectfusion.recurrence import RecurrenceError, RecurrencePlot
from affectfusion.windowing import FeatureWindowSeries

# 4x4 plot with recurrences (0,1) and (2,3); black pixels (0) mark recurrences
PGM_FIXTURE = (b"P5\n4 4\n255\n"
               + bytes([0, 0, 255, 255, 0, 0, 255, 255,
                        255, 255, 0, 0, 255, 255, 0, 0]))

state_arrays = st.integers(2, 30).flatmap(
    lambda n: arrays(np.float64, (n, 3), elements=st.floats(-10, 10)))


def brute_distance(a, b):
    return sum(abs(x - y) for x, y in zip(a, b))


def test_embed_counts():
    traj = recurrence.embed(np.arange(100.0), m=3, tau=1)
    assert traj.states.shape == (98, 3)
    assert traj.n_states == 98


def test_embed_identity():
    x = np.random.default_rng(0).normal(size=(20, 4))
    traj = recurrence.embed(x, m=1, standardize_features=False)
    assert np.array_equal(traj.states, x)


def test_embed_too_short():
    with pytest.raises(RecurrenceError, match="too short"):
        recurrence.embed(np.arange(5.0), m=3, tau=3)


def test_embed_bad_parameters():
    with pytest.raises(RecurrenceError):
        recurrence.embed(np.arange(10.0), m=0)
    with pytest.raises(RecurrenceError):
        recurrence.embed(np.arange(10.0), tau=0)


def test_embed_state_layout():
    x = np.arange(12.0).reshape(6, 2)
    traj = recurrence.embed(x, m=3, tau=2, standardize_features=False)
    assert traj.states.shape == (2, 6)
    assert np.array_equal(traj.states[1], np.concatenate([x[1], x[3], x[5]]))


def test_embed_standardizes_per_feature():
    rng = np.random.default_rng(1)
    x = np.column_stack([rng.normal(800, 50, 40), rng.normal(2, 0.01, 40)])
    traj = recurrence.embed(x, m=1)
    assert np.allclose(traj.states.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(traj.states.std(axis=0), 1.0)


def test_embed_series_object():
    x = np.random.default_rng(2).normal(size=(30, 6))
    series = FeatureWindowSeries("face", 5.0, 2.5, x, tuple("abcdef"),
                                 2.5 * np.arange(30), np.arange(30))
    traj = recurrence.embed(series)
    assert traj.source_modality == "face"
    assert traj.states.shape == (28, 18)
    per = recurrence.embed_per_feature(series)
    assert len(per) == 6 and per[0].states.shape == (28, 3)


def test_constant_feature_standardizes_to_zero():
    x = np.column_stack([np.ones(10), np.arange(10.0)])
    assert np.all(recurrence.standardize(x)[:, 0] == 0)


def test_two_states_below_threshold():
    rp = recurrence.recurrence_plot(np.array([[0.0], [1.0]]), epsilon=0.5)
    assert np.array_equal(rp.matrix, np.eye(2, dtype=bool))


def test_boundary_counts_as_recurrent():
    rp = recurrence.recurrence_plot(np.array([[0.0], [1.0]]), epsilon=1.0)
    assert rp.matrix.all()


def test_degenerate_plot_flagged():
    rp = recurrence.recurrence_plot(np.zeros((5, 2)), epsilon=0.0)
    assert rp.matrix.all()
    assert rp.degenerate


def test_threshold_arguments():
    x = np.zeros((5, 2))
    with pytest.raises(RecurrenceError):
        recurrence.recurrence_plot(x)
    with pytest.raises(RecurrenceError):
        recurrence.recurrence_plot(x, epsilon=1.0, rate=0.1)
    with pytest.raises(RecurrenceError):
        recurrence.recurrence_plot(x, rate=0.0)
    with pytest.raises(RecurrenceError):
        recurrence.recurrence_plot(x[:1], epsilon=1.0)


def test_rate_threshold_matches_brute_force():
    states = np.random.default_rng(3).normal(size=(50, 3))
    rp = recurrence.recurrence_plot(states, rate=0.1)
    d = [[brute_distance(a, b) for b in states] for a in states]
    count = sum(d[i][j] <= rp.epsilon for i in range(50) for j in range(50) if i != j)
    assert count == np.count_nonzero(rp.matrix) - 50
    assert 0.08 <= rp.rate <= 0.12


@settings(max_examples=40, deadline=None)
@given(states=state_arrays, eps=st.floats(0, 30))
def test_plot_invariants(states, eps):
    rp = recurrence.recurrence_plot(states, epsilon=eps)
    assert np.all(np.diag(rp.matrix))
    assert np.array_equal(rp.matrix, rp.matrix.T)


@settings(max_examples=40, deadline=None)
@given(states=state_arrays, e1=st.floats(0, 30), e2=st.floats(0, 30))
def test_threshold_monotone(states, e1, e2):
    lo, hi = sorted((e1, e2))
    a = recurrence.recurrence_plot(states, epsilon=lo).matrix
    b = recurrence.recurrence_plot(states, epsilon=hi).matrix
    assert np.all(a <= b)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**20), n=st.integers(5, 40), k=st.integers(2, 5))
def test_joint_plot_rate_bounded(seed, n, k):
    rng = np.random.default_rng(seed)
    plots = [recurrence.recurrence_plot(rng.normal(size=(n, 2)), rate=0.3) for _ in range(k)]
    joint = recurrence.joint_recurrence_plot(plots)
    assert joint.rate <= min(p.rate for p in plots) + 1e-15
    assert np.array_equal(joint.matrix, joint.matrix.T)


def test_joint_plot_identities():
    rp = recurrence.recurrence_plot(np.random.default_rng(4).normal(size=(20, 2)), rate=0.2)
    ones = RecurrencePlot(np.ones((20, 20), dtype=bool), np.inf)
    assert np.array_equal(recurrence.joint_recurrence_plot([rp, rp]).matrix, rp.matrix)
    assert np.array_equal(recurrence.joint_recurrence_plot([rp, ones]).matrix, rp.matrix)


def test_joint_plot_nested_products():
    rng = np.random.default_rng(5)
    plots = [recurrence.recurrence_plot(rng.normal(size=(15, 2)), rate=0.4) for _ in range(3)]
    joint = recurrence.joint_recurrence_plot(plots)
    pair = recurrence.joint_recurrence_plot(
        [recurrence.joint_recurrence_plot(plots[:2]), plots[2]])
    for i in range(15):
        for j in range(15):
            expected = plots[0].matrix[i, j] and plots[1].matrix[i, j] and plots[2].matrix[i, j]
            assert joint.matrix[i, j] == expected == pair.matrix[i, j]


def test_joint_plot_errors():
    a = recurrence.recurrence_plot(np.zeros((4, 1)), epsilon=0)
    b = recurrence.recurrence_plot(np.zeros((5, 1)), epsilon=0)
    with pytest.raises(RecurrenceError, match="size mismatch"):
        recurrence.joint_recurrence_plot([a, b])
    with pytest.raises(RecurrenceError):
        recurrence.joint_recurrence_plot([a])


def test_network_examples():
    full = RecurrencePlot(np.ones((6, 6), dtype=bool), 1.0)
    net = recurrence.to_network(full)
    assert np.array_equal(net.adjacency, 1 - np.eye(6, dtype=np.uint8))
    empty = recurrence.to_network(RecurrencePlot(np.eye(6, dtype=bool), 0.0))
    assert not empty.adjacency.any()


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**20), n=st.integers(3, 30))
def test_network_plus_identity_is_plot(seed, n):
    rng = np.random.default_rng(seed)
    plots = [recurrence.recurrence_plot(rng.normal(size=(n, 2)), rate=0.3) for _ in range(2)]
    joint = recurrence.joint_recurrence_plot(plots)
    a = recurrence.to_network(joint).adjacency
    assert np.all(np.diag(a) == 0)
    assert np.array_equal(a + np.eye(n, dtype=np.uint8), joint.matrix.astype(np.uint8))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**20), n=st.integers(4, 25))
def test_permutation_equivariance(seed, n):
    rng = np.random.default_rng(seed)
    series = [rng.normal(size=(n, 3)) for _ in range(3)]
    perm = rng.permutation(n)

    def network(xs):
        plots = [recurrence.recurrence_plot(x, epsilon=2.0) for x in xs]
        return recurrence.to_network(recurrence.joint_recurrence_plot(plots)).adjacency

    a = network(series)
    b = network([x[perm] for x in series])
    assert np.array_equal(b, a[np.ix_(perm, perm)])


def test_pgm_fixture_bytes():
    m = np.zeros((4, 4), dtype=bool)
    m[:2, :2] = True
    m[2:, 2:] = True
    assert recurrence.pgm_bytes(m) == PGM_FIXTURE


def test_pgm_round_trip_with_comment(tmp_path):
    m = np.random.default_rng(6).random((7, 7)) < 0.3
    m = m | m.T
    path = tmp_path / "rp.pgm"
    recurrence.write_pgm(m, path, comment="config abc123")
    assert path.read_bytes().startswith(b"P5\n# config abc123\n7 7\n255\n")
    assert np.array_equal(recurrence.read_pgm(path), m)


def test_pgm_fixture_read(tmp_path):
    path = tmp_path / "fixture.pgm"
    path.write_bytes(PGM_FIXTURE)
    m = recurrence.read_pgm(path)
    assert m.sum() == 8 and m[0, 1] and not m[1, 2]


def test_pgm_truncated(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(PGM_FIXTURE[:-1])
    with pytest.raises(RecurrenceError):
        recurrence.read_pgm(path)
    path.write_bytes(b"P2\n1 1\n255\n\x00")
    with pytest.raises(RecurrenceError):
        recurrence.read_pgm(path)


def test_sparse_round_trip(tmp_path):
    rp = recurrence.recurrence_plot(np.random.default_rng(7).normal(size=(25, 2)), rate=0.1)
    path = tmp_path / "rp.txt"
    recurrence.write_sparse(rp, path, {"config_hash": "abc"})
    assert np.array_equal(recurrence.read_sparse(path), rp.matrix)
    text = path.read_text()
    assert "# config_hash: abc" in text and "# size: 25" in text
    import json
    meta = json.loads((tmp_path / "rp.txt.json").read_text())
    assert meta["epsilon"] == rp.epsilon
    assert meta["achieved_rate"] == rp.rate
    assert meta["target_rate"] == 0.1


def test_sparse_requires_size(tmp_path):
    path = tmp_path / "rp.txt"
    path.write_text("0 1\n")
    with pytest.raises(RecurrenceError):
        recurrence.read_sparse(path)


def test_plot_matrix_read_only():
    rp = recurrence.recurrence_plot(np.zeros((3, 1)), epsilon=0)
    with pytest.raises(ValueError):
        rp.matrix[0, 1] = False
