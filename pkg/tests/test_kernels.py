import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nbmkl.kernels import (KernelBank, KernelSpec, alignment, build_bank, default_specs,
                           evaluate_kernel, gram, load_bank, normalize_gram, save_bank)

finite = st.floats(-5, 5, allow_nan=False)


def test_evaluate_kernel_examples():
    g = KernelSpec("gaussian", spread=3.7)
    assert evaluate_kernel(g, [0.3, -1.0], [0.3, -1.0]) == 1.0
    assert evaluate_kernel(KernelSpec("linear"), [1, 0], [0, 1]) == 0.0
    assert evaluate_kernel(KernelSpec("polynomial", degree=2, offset=1), [1, 1], [1, 1]) == 9.0


def test_gaussian_width_modes():
    x, y = np.array([0.0]), np.array([2.0])
    assert evaluate_kernel(KernelSpec("gaussian", spread=2.0), x, y) == pytest.approx(np.exp(-0.5))
    spec = KernelSpec("gaussian", spread=2.0, width_mode="spread")
    assert evaluate_kernel(spec, x, y) == pytest.approx(np.exp(-2.0))


def test_evaluate_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        evaluate_kernel(KernelSpec("linear"), [1, 2], [1, 2, 3])


def test_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("polynomial", degree=0)
    with pytest.raises(ValueError):
        KernelSpec("gaussian", spread=0.0)
    with pytest.raises(ValueError):
        KernelSpec("sigmoid")


@settings(max_examples=50, deadline=None)
@given(arrays(float, 4, elements=finite), arrays(float, 4, elements=finite))
def test_evaluate_symmetric(x, y):
    for spec in (KernelSpec("linear"), KernelSpec("polynomial", degree=3)):
        assert evaluate_kernel(spec, x, y) == evaluate_kernel(spec, y, x)
    g = KernelSpec("gaussian", spread=1.5)
    assert abs(evaluate_kernel(g, x, y) - evaluate_kernel(g, y, x)) <= 1e-15


def test_gram_agrees_with_pointwise(rng):
    X = rng.standard_normal((5, 3))
    Y = rng.standard_normal((4, 3))
    for spec in default_specs()[:4]:
        G = gram(spec, X, Y)
        ref = np.array([[evaluate_kernel(spec, a, b) for b in Y] for a in X])
        np.testing.assert_allclose(G, ref, rtol=1e-12, atol=1e-14)


def test_normalize_examples():
    np.testing.assert_allclose(normalize_gram([[4.0, 2.0], [2.0, 1.0]]), np.ones((2, 2)))
    np.testing.assert_array_equal(normalize_gram(np.eye(3)), np.eye(3))


def test_normalize_reports_bad_diagonal():
    with pytest.raises(ValueError, match="index 1"):
        normalize_gram([[1.0, 0.0], [0.0, 0.0]])


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**31 - 1), st.sampled_from(range(10)))
def test_normalized_psd_unit_diagonal(n, seed, k):
    X = np.random.default_rng(seed).standard_normal((n, 3))
    K = normalize_gram(gram(default_specs()[k], X))
    assert np.max(np.abs(np.diag(K) - 1.0)) <= 1e-12
    assert np.max(np.abs(K - K.T)) <= 1e-12
    assert np.linalg.eigvalsh(K).min() >= -1e-8


def test_default_bank_shape():
    specs = default_specs()
    assert len(specs) == 10
    assert [s.spread for s in specs if s.kind == "gaussian"] == [2.0**k for k in range(1, 9)]
    bank = build_bank([np.arange(1.0, 7.0).reshape(3, 2), np.ones((4, 2))])
    assert bank.tasks == 2 and bank.bases == 10 and bank.sizes == [3, 4]


def test_single_linear_example():
    bank = build_bank([np.array([[1.0], [-1.0]])], [KernelSpec("linear")])
    np.testing.assert_array_equal(bank.gram[0][0], [[1.0, -1.0], [-1.0, 1.0]])


def test_build_bank_deterministic(rng):
    feats = [rng.standard_normal((6, 3)) for _ in range(2)]
    a, b = build_bank(feats), build_bank(feats)
    for Ga, Gb in zip(a.gram, b.gram):
        assert Ga.tobytes() == Gb.tobytes()


def test_cross_matches_training_block(rng):
    X = rng.standard_normal((6, 3))
    bank = build_bank([X], zscore=True)
    np.testing.assert_allclose(bank.cross(X, X), bank.gram[0], atol=1e-12)


def test_alignment_examples():
    K = np.array([[2.0, 1.0], [1.0, 3.0]])
    assert alignment(K, K) == pytest.approx(1.0)
    assert alignment(np.eye(2), np.ones((2, 2))) == pytest.approx(0.70711, abs=1e-5)
    assert alignment([[1.0, 0.0], [0.0, -1.0]], np.eye(2)) == 0.0
    with pytest.raises(ValueError):
        alignment(np.zeros((2, 2)), np.eye(2))


@settings(max_examples=40, deadline=None)
@given(arrays(float, (3, 3), elements=finite), arrays(float, (3, 3), elements=finite))
def test_alignment_range(A, B):
    if np.linalg.norm(A) == 0 or np.linalg.norm(B) == 0:
        return
    assert -1.0 <= alignment(A, B) <= 1.0


def test_bank_file_round_trip(tmp_path, rng):
    feats = [rng.standard_normal((4, 2)), rng.standard_normal((3, 2))]
    specs = [KernelSpec("linear"), KernelSpec("polynomial", degree=3, offset=0.5),
             KernelSpec("gaussian", spread=2.0, width_mode="spread")]
    bank = build_bank(feats, specs, zscore=True)
    path = tmp_path / "bank.nbkb"
    save_bank(bank, path)
    back = load_bank(path)
    assert back.specs == specs and back.sizes == bank.sizes
    np.testing.assert_array_equal(back.center, bank.center)
    for Ga, Gb in zip(bank.gram, back.gram):
        np.testing.assert_array_equal(Ga, Gb)
    raw = path.read_bytes()
    assert raw[:4] == b"NBKB"
    # header: magic, version, T, M, sizes, 3 spec records, stats block
    header = 16 + 4 * 2 + 3 * 22 + 1 + 4 + 2 * 8 * 2
    assert len(raw) == header + 8 * 3 * (16 + 9)


def test_load_bank_rejects_garbage(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_bank(p)


def test_bank_shape_check():
    with pytest.raises(ValueError):
        KernelBank([np.zeros((2, 3, 3))], [KernelSpec("linear")])
