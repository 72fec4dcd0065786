"""Grammar data model: dense and factored rule probabilities.

A dense grammar stores the binary-rule tensor T (n x m x m) explicitly;
a factored grammar stores only the three CP/Kruskal factor matrices
U (n x d), V and W (m x d).  Both carry the emission matrix Q (p x q)
and the start vector r (n).

Normalization conventions: T slices, Q rows and r sum to one; U is
row-stochastic while V and W are column-stochastic, which guarantees
that the reconstructed tensor is slice-stochastic without ever being
materialized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

# Tolerances: learned factors come out of single-precision softmax layers,
# hand-built doubles should be exact to roundoff.
TOL_LEARNED = 1e-6
TOL_EXACT = 1e-9


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FactorReport:
    """Validation outcome for a factor triple; empty means all good."""

    violations: tuple[tuple[str, float], ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(f"{name} (max deviation {dev:.3e})" for name, dev in self.violations)


def validate_factored(U: np.ndarray, V: np.ndarray, W: np.ndarray,
                      tol: float = TOL_LEARNED) -> FactorReport:
    """Check the stochasticity preconditions on a factor triple.

    U must be row-normalized, V and W column-normalized, all entries
    nonnegative.  Shape mismatches raise; every other problem is reported
    with its worst deviation rather than raised.
    """
    U, V, W = np.asarray(U), np.asarray(V), np.asarray(W)
    if U.ndim != 2 or V.ndim != 2 or W.ndim != 2:
        raise ShapeError("factors must be matrices")
    d = U.shape[1]
    if d == 0:
        raise ShapeError("decomposition rank is zero")
    if V.shape[1] != d or W.shape[1] != d:
        raise ShapeError(
            f"factor ranks differ: U has {d}, V has {V.shape[1]}, W has {W.shape[1]}"
        )
    if V.shape[0] != W.shape[0]:
        raise ShapeError("V and W must have the same number of rows")

    violations = []
    neg = min(U.min(initial=0.0), V.min(initial=0.0), W.min(initial=0.0))
    if neg < -tol:
        violations.append(("non-negativity", float(-neg)))
    dev_u = float(np.abs(U.sum(axis=1) - 1.0).max())
    if dev_u > tol:
        violations.append(("U row-normalization", dev_u))
    dev_v = float(np.abs(V.sum(axis=0) - 1.0).max())
    if dev_v > tol:
        violations.append(("V column-normalization", dev_v))
    dev_w = float(np.abs(W.sum(axis=0) - 1.0).max())
    if dev_w > tol:
        violations.append(("W column-normalization", dev_w))
    return FactorReport(tuple(violations))


@dataclass(frozen=True)
class DensePcfg:
    """Explicit binary-rule tensor plus emissions and start probabilities."""

    T: np.ndarray  # (n, m, m)
    Q: np.ndarray  # (p, q)
    r: np.ndarray  # (n,)

    def __post_init__(self):
        T, Q, r = np.asarray(self.T, float), np.asarray(self.Q, float), np.asarray(self.r, float)
        if T.ndim != 3 or T.shape[1] != T.shape[2]:
            raise ShapeError("T must be (n, m, m)")
        n, m, _ = T.shape
        if Q.ndim != 2 or r.ndim != 1 or r.shape[0] != n:
            raise ShapeError("Q must be (p, q) and r must be (n,)")
        if n + Q.shape[0] != m:
            raise ShapeError(f"m = {m} inconsistent with n = {n}, p = {Q.shape[0]}")
        object.__setattr__(self, "T", _freeze(T))
        object.__setattr__(self, "Q", _freeze(Q))
        object.__setattr__(self, "r", _freeze(r))

    @property
    def n(self) -> int:
        return self.T.shape[0]

    @property
    def m(self) -> int:
        return self.T.shape[1]

    @property
    def p(self) -> int:
        return self.Q.shape[0]

    @property
    def q(self) -> int:
        return self.Q.shape[1]

    def validate(self, tol: float = TOL_EXACT) -> None:
        """Raise if any probability constraint is violated beyond tol."""
        if self.T.min(initial=0.0) < -tol or self.Q.min(initial=0.0) < -tol \
                or self.r.min(initial=0.0) < -tol:
            raise ShapeError("negative probabilities")
        slice_dev = np.abs(self.T.sum(axis=(1, 2)) - 1.0).max()
        q_dev = np.abs(self.Q.sum(axis=1) - 1.0).max()
        r_dev = abs(self.r.sum() - 1.0)
        worst = max(slice_dev, q_dev, r_dev)
        if worst > tol:
            raise ShapeError(f"unnormalized grammar (max deviation {worst:.3e})")


@dataclass(frozen=True)
class TdPcfg:
    """Factored grammar: the rule tensor exists only through U, V, W."""

    U: np.ndarray  # (n, d)
    V: np.ndarray  # (m, d)
    W: np.ndarray  # (m, d)
    Q: np.ndarray  # (p, q)
    r: np.ndarray  # (n,)

    def __post_init__(self):
        U = np.asarray(self.U, float)
        V = np.asarray(self.V, float)
        W = np.asarray(self.W, float)
        Q = np.asarray(self.Q, float)
        r = np.asarray(self.r, float)
        validate_factored(U, V, W, tol=np.inf)  # shape checks only
        n, d = U.shape
        m = V.shape[0]
        if Q.ndim != 2 or Q.shape[0] != m - n:
            raise ShapeError("Q must be (p, q) with p = m - n")
        if r.shape != (n,):
            raise ShapeError("r must be (n,)")
        for name, a in (("U", U), ("V", V), ("W", W), ("Q", Q), ("r", r)):
            object.__setattr__(self, name, _freeze(a))

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def m(self) -> int:
        return self.V.shape[0]

    @property
    def p(self) -> int:
        return self.Q.shape[0]

    @property
    def q(self) -> int:
        return self.Q.shape[1]

    @property
    def d(self) -> int:
        return self.U.shape[1]

    def validate(self, tol: float = TOL_LEARNED) -> None:
        report = validate_factored(self.U, self.V, self.W, tol=tol)
        if not report.ok:
            raise ShapeError(f"invalid factors: {report}")
        if self.Q.min(initial=0.0) < -tol or self.r.min(initial=0.0) < -tol:
            raise ShapeError("negative emission/start probabilities")
        q_dev = np.abs(self.Q.sum(axis=1) - 1.0).max()
        r_dev = abs(self.r.sum() - 1.0)
        if max(q_dev, r_dev) > tol:
            raise ShapeError("unnormalized Q rows or r")


def reconstruct_tensor(g: TdPcfg) -> DensePcfg:
    """Materialize the rule tensor T[i, j, k] = sum_l U[i,l] V[j,l] W[k,l].

    Cubic in m; meant for oracles and small grammars, never for the
    production inside path.
    """
    report = validate_factored(g.U, g.V, g.W)
    if not report.ok:
        raise ShapeError(f"cannot reconstruct from invalid factors: {report}")
    T = np.einsum("il,jl,kl->ijk", g.U, g.V, g.W)
    return DensePcfg(T=T, Q=g.Q.copy(), r=g.r.copy())


def random_td_pcfg(n: int, p: int, q: int, d: int, seed: int,
                   alpha: float = 1.0) -> TdPcfg:
    """Deterministic random factored grammar for tests and synthetic data.

    Entries are drawn i.i.d. Gamma(alpha) and then normalized along the
    stochastic axis, i.e. each normalized slice is Dirichlet(alpha).
    alpha = 1 gives flat simplex samples; alpha < 1 gives peaked,
    low-entropy rule distributions (useful for learnable synthetic
    corpora).
    """
    if min(n, p, q, d) < 1:
        raise ShapeError("all counts must be >= 1")
    rng = np.random.default_rng(seed)
    m = n + p

    def simplex(shape, axis):
        x = rng.gamma(alpha, 1.0, size=shape)
        x = np.maximum(x, 1e-300)
        return x / x.sum(axis=axis, keepdims=True)

    U = simplex((n, d), axis=1)
    V = simplex((m, d), axis=0)
    W = simplex((m, d), axis=0)
    Q = simplex((p, q), axis=1)
    r = simplex((n,), axis=0)
    return TdPcfg(U=U, V=V, W=W, Q=Q, r=r)
