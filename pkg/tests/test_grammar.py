import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdpcfg import (
    DensePcfg,
    TdPcfg,
    random_td_pcfg,
    reconstruct_tensor,
    validate_factored,
)
from tdpcfg.errors import ShapeError
from tdpcfg.symbols import SymbolTable, Vocabulary


def test_reconstruct_rank_one_example():
    g = TdPcfg(
        U=np.array([[1.0]]),
        V=np.array([[0.5], [0.5]]),
        W=np.array([[0.3], [0.7]]),
        Q=np.array([[1.0]]),
        r=np.array([1.0]),
    )
    dense = reconstruct_tensor(g)
    assert np.allclose(dense.T[0], [[0.15, 0.35], [0.15, 0.35]], atol=1e-15)
    assert np.array_equal(dense.Q, g.Q)
    assert np.array_equal(dense.r, g.r)


def test_reconstruct_one_hot_row_is_outer_product():
    # U row selects a single component: the slice is v (x) w
    U = np.array([[0.0, 1.0], [0.5, 0.5]])
    V = np.array([[0.2, 0.1], [0.3, 0.6], [0.5, 0.3]])
    W = np.array([[0.6, 0.2], [0.1, 0.5], [0.3, 0.3]])
    g = TdPcfg(U=U, V=V, W=W, Q=np.full((1, 2), 0.5), r=np.array([0.5, 0.5]))
    dense = reconstruct_tensor(g)
    assert np.allclose(dense.T[0], np.outer(V[:, 1], W[:, 1]), atol=1e-15)


def test_reconstruct_random_grammar_slices_are_stochastic():
    g = random_td_pcfg(n=3, p=3, q=6, d=8, seed=7)
    dense = reconstruct_tensor(g)
    assert np.abs(dense.T.sum(axis=(1, 2)) - 1.0).max() <= 1e-9
    dense.validate(tol=1e-9)


def test_reconstruct_rejects_bad_shapes():
    with pytest.raises(ShapeError):
        validate_factored(np.ones((2, 0)), np.ones((3, 0)), np.ones((3, 0)))
    with pytest.raises(ShapeError):
        validate_factored(np.ones((2, 3)), np.ones((4, 2)), np.ones((4, 3)))


def test_validator_reports_row_normalization():
    g = random_td_pcfg(n=2, p=2, q=4, d=3, seed=0)
    U = g.U.copy()
    U[0] *= 0.9
    report = validate_factored(U, g.V, g.W)
    assert not report.ok
    names = [name for name, _ in report.violations]
    assert names == ["U row-normalization"]
    assert report.violations[0][1] == pytest.approx(0.1, abs=1e-12)


def test_validator_reports_negativity():
    g = random_td_pcfg(n=2, p=2, q=4, d=3, seed=0)
    V = g.V.copy()
    V[0, 0] = -0.01
    report = validate_factored(g.U, V, g.W)
    names = [name for name, _ in report.violations]
    assert "non-negativity" in names
    dev = dict(report.violations)["non-negativity"]
    assert dev == pytest.approx(0.01, abs=1e-12)


def test_validator_accepts_valid_factors():
    g = random_td_pcfg(n=4, p=8, q=50, d=16, seed=3)
    assert validate_factored(g.U, g.V, g.W).ok


def test_random_grammar_smallest_instance():
    g = random_td_pcfg(n=1, p=1, q=2, d=1, seed=0)
    assert g.m == 2
    g.validate(tol=1e-9)


def test_random_grammar_is_deterministic():
    a = random_td_pcfg(n=2, p=3, q=5, d=4, seed=42)
    b = random_td_pcfg(n=2, p=3, q=5, d=4, seed=42)
    for x, y in ((a.U, b.U), (a.V, b.V), (a.W, b.W), (a.Q, b.Q), (a.r, b.r)):
        assert np.array_equal(x, y)


def test_random_grammar_rejects_zero_counts():
    with pytest.raises(ShapeError):
        random_td_pcfg(n=0, p=1, q=1, d=1, seed=0)


def test_slice_normalization_violation_detected():
    T = np.full((1, 2, 2), 0.3)  # sums to 1.2
    with pytest.raises(ShapeError):
        DensePcfg(T=T, Q=np.array([[1.0]]), r=np.array([1.0])).validate()


def test_normalization_theorem_over_many_random_grammars():
    # every valid factor triple reconstructs to slice-stochastic tensors
    rng = np.random.default_rng(123)
    for trial in range(100):
        n = int(rng.integers(1, 5))
        p = int(rng.integers(1, 5))
        d = int(rng.integers(1, 17))
        g = random_td_pcfg(n=n, p=p, q=3, d=d, seed=trial)
        T = np.einsum("il,jl,kl->ijk", g.U, g.V, g.W)
        assert np.abs(T.sum(axis=(1, 2)) - 1.0).max() <= 1e-9


def test_multilinearity_column_rescaling_cancels():
    g = random_td_pcfg(n=2, p=3, q=4, d=5, seed=9)
    T1 = np.einsum("il,jl,kl->ijk", g.U, g.V, g.W)
    scale = 3.7
    V2 = g.V.copy()
    W2 = g.W.copy()
    V2[:, 2] *= scale
    W2[:, 2] /= scale
    T2 = np.einsum("il,jl,kl->ijk", g.U, V2, W2)
    assert np.abs(T1 - T2).max() <= 1e-12


def test_grammar_arrays_are_immutable():
    g = random_td_pcfg(n=2, p=2, q=3, d=2, seed=1)
    with pytest.raises(ValueError):
        g.U[0, 0] = 0.5
    dense = reconstruct_tensor(g)
    with pytest.raises(ValueError):
        dense.T[0, 0, 0] = 0.5


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=1, max_value=50), st.integers(min_value=1, max_value=50),
       st.data())
def test_symbol_index_round_trip(n, p, data):
    table = SymbolTable(n=n, p=p, vocab=Vocabulary.synthetic(3))
    sym = data.draw(st.integers(min_value=0, max_value=table.m - 1))
    assert table.is_nonterminal(sym) != table.is_preterminal(sym)
    assert table.symbol_id(table.symbol_name(sym)) == sym


def test_vocabulary_round_trip():
    vocab = Vocabulary(words=("cat", "dog", "<unk>"), counts=(3, 2, 0), unk_id=2)
    assert vocab.id_of("cat") == 0
    assert vocab.id_of("mouse") == 2
    assert vocab.word_of(1) == "dog"
    assert vocab.encode(["dog", "cat", "xyz"]) == [1, 0, 2]
