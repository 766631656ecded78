import numpy as np
import pytest

from nbmkl.data import (DataError, MultiTaskDataset, SplitPlan, Task, load_csv, split,
                        synth_related_tasks, write_csv)


def write_task(tmp_path, text, name="t0.csv"):
    (tmp_path / name).write_text(text)
    man = tmp_path / "manifest.txt"
    with open(man, "a") as fh:
        fh.write(name + "\n")
    return man


def test_two_row_file(tmp_path):
    data = load_csv(write_task(tmp_path, "1,0.5,0.2\n-1,0.1,0.9\n"))
    assert data.T == 1 and data.sizes == [2] and data.kind == "classification"
    np.testing.assert_array_equal(data.tasks[0].features, [[0.5, 0.2], [0.1, 0.9]])


def test_zero_one_remap_and_header(tmp_path):
    data = load_csv(write_task(tmp_path, "y,a\n0,1\n1,2\n0,3\n"))
    np.testing.assert_array_equal(data.targets[0], [-1, 1, -1])


def test_regression_detection(tmp_path):
    data = load_csv(write_task(tmp_path, "0.5,1\n-2.25,2\n"))
    assert data.kind == "regression"


def test_parse_errors(tmp_path):
    with pytest.raises(DataError, match="row 2"):
        load_csv(write_task(tmp_path, "1,2,3\n1,2\n", "a.csv"))
    with pytest.raises(DataError, match="row 2, column 3"):
        load_csv(_fresh(tmp_path, "b", "1,2,3\n1,2,x\n"))


def _fresh(tmp_path, sub, text):
    d = tmp_path / sub
    d.mkdir()
    return write_task(d, text)


def test_inconsistent_dimension(tmp_path):
    d = tmp_path / "m"
    d.mkdir()
    write_task(d, "1,2\n-1,3\n", "a.csv")
    man = write_task(d, "1,2,3\n-1,3,4\n", "b.csv")
    with pytest.raises(DataError, match="inconsistent"):
        load_csv(man)


def test_task_invariants():
    with pytest.raises(DataError):
        Task("x", [[1.0], [2.0]], [1.0, 0.5], "classification")
    with pytest.raises(DataError):
        Task("x", [[np.nan]], [1.0], "regression")
    with pytest.raises(DataError):
        MultiTaskDataset([Task("a", [[1.0]], [1.0], "regression"),
                          Task("b", [[1.0, 2.0]], [1.0], "regression")])


def test_csv_round_trip(tmp_path):
    data = synth_related_tasks(4, 3, 12, 4, kind="regression")
    back = load_csv(write_csv(data, tmp_path))
    for a, b in zip(data.tasks, back.tasks):
        assert np.max(np.abs(a.features - b.features)) <= 1e-12
        assert np.max(np.abs(a.targets - b.targets)) <= 1e-12


def test_default_split_sizes():
    data = synth_related_tasks(0, 2, 100, 3, kind="regression")
    tr, va, te = split(data)
    assert tr.sizes == [20, 20] and va.sizes == [40, 40] and te.sizes == [40, 40]


def test_stratified_counts():
    y = np.repeat([-1.0, 1.0], 50)
    data = MultiTaskDataset([Task("a", np.arange(100.0)[:, None], y, "classification")])
    tr, va, te = split(data, SplitPlan(seed=3))
    assert np.sum(tr.targets[0] == 1) == 10 and np.sum(tr.targets[0] == -1) == 10
    assert np.sum(va.targets[0] == 1) == 20


def test_split_partition_and_determinism():
    data = synth_related_tasks(1, 3, 50, 2)
    ids = MultiTaskDataset([Task(t.id, np.arange(t.n, dtype=float)[:, None], t.targets, t.kind)
                            for t in data.tasks])
    a = split(ids, SplitPlan(seed=9))
    b = split(ids, SplitPlan(seed=9))
    for t in range(3):
        parts = [p.tasks[t].features.ravel() for p in a]
        allidx = np.concatenate(parts)
        assert sorted(allidx) == list(range(50))
        for p, q in zip(a, b):
            np.testing.assert_array_equal(p.tasks[t].features, q.tasks[t].features)


def test_split_plan_and_small_task():
    with pytest.raises(ValueError):
        SplitPlan(train=0.5, validation=0.5, test=0.5)
    y = np.array([1.0, 1, 1, 1, -1, -1, -1, -1, -1, -1])
    data = MultiTaskDataset([Task("tiny", np.zeros((10, 1)), y, "classification")])
    with pytest.raises(DataError, match="tiny"):
        split(data)


def test_synth_deterministic():
    a = synth_related_tasks(5, 2, 10, 3)
    b = synth_related_tasks(5, 2, 10, 3)
    for s, t in zip(a.tasks, b.tasks):
        assert s.features.tobytes() == t.features.tobytes()
        assert s.targets.tobytes() == t.targets.tobytes()
    with pytest.raises(ValueError):
        synth_related_tasks(0, 0, 10, 3)


def test_synth_fully_related_is_separable():
    from nbmkl.kernels import KernelSpec, gram
    from nbmkl.svm import predict, solve_svc

    data = synth_related_tasks(2, 3, 30, 3, relatedness=1.0, noise=0.0)
    X = np.vstack(data.features)
    y = np.concatenate(data.targets)
    K = gram(KernelSpec("linear"), X)
    s = solve_svc(K, y, 1e4, tol=1e-6)
    assert np.mean(predict(s, K) == y) == 1.0
