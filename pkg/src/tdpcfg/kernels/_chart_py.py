"""Pure-numpy chart kernels (fallback backend).

Both kernels fill a scaled inside chart: for span (i, j) the stored
vector satisfies  true_inside = scaled * exp(exponent)  with the max
entry of each live cell normalized to 1.  Dead cells (no derivation)
stay all-zero with alive=False and exponent 0.

Work at a given span width is batched across all spans/splits of that
width so the python overhead stays negligible next to the arithmetic.
"""

import numpy as np

NEG_INF = float("-inf")


def _leaf_cells(Q, ids, s, c, alive, n):
    emis = Q[:, ids].T  # (l, p)
    mu = emis.max(axis=1)
    live = mu > 0
    idx = np.nonzero(live)[0]
    s[idx, idx, n:] = emis[idx] / mu[idx, None]
    c[idx, idx] = np.log(mu[idx])
    alive[idx, idx] = live[idx]


def _split_indices(l, w):
    """Flat (left, right) cell coordinates for all width-w spans."""
    starts = np.arange(l - w + 1)
    off = np.arange(w - 1)
    i = np.repeat(starts, w - 1)
    o = np.tile(off, starts.size)
    return starts, i, i + o, i + o + 1, i + (w - 1)


def _split_weights(c, alive, li, lj, ri, rj, nspans, w):
    """Per-split rescaling factors aligned to each span's max exponent."""
    both = alive[li, lj] & alive[ri, rj]
    e = np.where(both, c[li, lj] + c[ri, rj], NEG_INF).reshape(nspans, w - 1)
    e_star = e.max(axis=1)
    shift = np.where(np.isfinite(e_star), e_star, 0.0)
    f = np.exp(np.where(np.isfinite(e), e - shift[:, None], NEG_INF))
    return f, e_star


def _store(s, c, alive, starts, ends, acc, e_star, n):
    mu = acc.max(axis=1)
    live = mu > 0
    idx = np.nonzero(live)[0]
    s[starts[idx], ends[idx], :n] = acc[idx] / mu[idx, None]
    c[starts[idx], ends[idx]] = e_star[idx] + np.log(mu[idx])
    alive[starts[idx], ends[idx]] = True


def inside_dense(T, Q, r, ids):
    n, m, _ = T.shape
    l = ids.shape[0]
    s = np.zeros((l, l, m))
    c = np.zeros((l, l))
    alive = np.zeros((l, l), dtype=bool)
    _leaf_cells(Q, ids, s, c, alive, n)
    T2 = np.ascontiguousarray(T.transpose(1, 0, 2).reshape(m, n * m))
    for w in range(2, l + 1):
        starts, i, lj, ri, rj = _split_indices(l, w)
        ends = starts + w - 1
        nspans = starts.size
        f, e_star = _split_weights(c, alive, i, lj, ri, rj, nspans, w)
        XL = s[i, lj]            # (nsplit, m)
        XR = s[ri, rj]
        M1 = (XL @ T2).reshape(-1, n, m)
        Z = np.matmul(M1, XR[:, :, None])[:, :, 0]          # (nsplit, n)
        acc = (Z.reshape(nspans, w - 1, n) * f[:, :, None]).sum(axis=1)
        _store(s, c, alive, starts, ends, acc, e_star, n)
    return s, c, alive, None, None


def inside_factored(U, V, W, Q, r, ids):
    n, d = U.shape
    m = V.shape[0]
    l = ids.shape[0]
    s = np.zeros((l, l, m))
    c = np.zeros((l, l))
    alive = np.zeros((l, l), dtype=bool)
    P = np.zeros((l, l, d))
    R = np.zeros((l, l, d))
    _leaf_cells(Q, ids, s, c, alive, n)
    diag = np.arange(l)
    P[diag, diag] = s[diag, diag, n:] @ V[n:]
    R[diag, diag] = s[diag, diag, n:] @ W[n:]
    Ut = U.T
    V_top = V[:n]
    W_top = W[:n]
    for w in range(2, l + 1):
        starts, i, lj, ri, rj = _split_indices(l, w)
        ends = starts + w - 1
        nspans = starts.size
        f, e_star = _split_weights(c, alive, i, lj, ri, rj, nspans, w)
        H = P[i, lj] * R[ri, rj]                            # (nsplit, d)
        accd = (H.reshape(nspans, w - 1, d) * f[:, :, None]).sum(axis=1)
        acc = accd @ Ut                                     # (nspans, n)
        _store(s, c, alive, starts, ends, acc, e_star, n)
        if w < l:
            top = s[starts, ends, :n]
            P[starts, ends] = top @ V_top
            R[starts, ends] = top @ W_top
    return s, c, alive, P, R
