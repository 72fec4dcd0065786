import numpy as np
import pytest

from tdpcfg import DensePcfg, TdPcfg


@pytest.fixture
def g2_dense() -> DensePcfg:
    """One nonterminal N, one preterminal T, words {a: 0, b: 1}.

    Rules: N->NN 0.2, N->NT 0.3, N->TN 0.1, N->TT 0.4;
    emissions T->a 0.6, T->b 0.4; start S->N 1.
    """
    T = np.zeros((1, 2, 2))
    T[0] = [[0.2, 0.3], [0.1, 0.4]]
    return DensePcfg(T=T, Q=np.array([[0.6, 0.4]]), r=np.array([1.0]))


@pytest.fixture
def g2_factored() -> TdPcfg:
    """Exact rank-2 factorization of the g2_dense rule tensor."""
    return TdPcfg(
        U=np.array([[0.5, 0.5]]),
        V=np.array([[1.0, 0.0], [0.0, 1.0]]),
        W=np.array([[0.4, 0.2], [0.6, 0.8]]),
        Q=np.array([[0.6, 0.4]]),
        r=np.array([1.0]),
    )


@pytest.fixture
def prob1_dense() -> DensePcfg:
    """Deterministic grammar: N->TT and T->a with probability one."""
    T = np.zeros((1, 2, 2))
    T[0, 1, 1] = 1.0
    return DensePcfg(T=T, Q=np.array([[1.0]]), r=np.array([1.0]))


@pytest.fixture
def prob1_factored() -> TdPcfg:
    return TdPcfg(
        U=np.array([[1.0]]),
        V=np.array([[0.0], [1.0]]),
        W=np.array([[0.0], [1.0]]),
        Q=np.array([[1.0]]),
        r=np.array([1.0]),
    )
