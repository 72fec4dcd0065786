import numpy as np
import pytest

from tdpcfg import autodiff as ad
from tdpcfg.errors import ShapeError


def leaf(data):
    return ad.parameter(np.asarray(data, dtype=np.float64))


def test_relu_definition():
    out = ad.relu(leaf([-1.0, 0.0, 2.0]))
    assert np.array_equal(out.data, [0.0, 0.0, 2.0])


def test_softmax_constant_row_is_uniform():
    out = ad.softmax_over_axis(leaf([[3.0, 3.0, 3.0, 3.0]]), axis=1)
    assert np.allclose(out.data, 0.25)


def test_matmul_matches_naive_triple_loop():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((2, 3))
    b = rng.standard_normal((3, 4))
    out = ad.matmul(leaf(a), leaf(b))
    expect = np.zeros((2, 4))
    for i in range(2):
        for j in range(4):
            for k in range(3):
                expect[i, j] += a[i, k] * b[k, j]
    assert out.shape == (2, 4)
    assert np.allclose(out.data, expect, atol=1e-12)


def test_backward_of_sum_is_ones():
    x = leaf([[1.0, -2.0], [0.5, 3.0]])
    with ad.Tape() as tape:
        out = ad.sum_over_axis(x)
    grads = ad.backward(tape, out)
    assert np.array_equal(grads[x], np.ones((2, 2)))


def test_logsumexp_gradient_is_softmax():
    vals = np.array([0.3, -1.0, 2.0])
    x = leaf(vals)
    with ad.Tape() as tape:
        out = ad.logsumexp_over_axis(x, axis=0)
    grads = ad.backward(tape, out)
    soft = np.exp(vals - vals.max())
    soft /= soft.sum()
    assert np.allclose(grads[x], soft, atol=1e-12)


def test_unreachable_leaf_gets_zero_gradient():
    x = leaf([1.0, 2.0])
    y = leaf([3.0, 4.0])
    with ad.Tape() as tape:
        _unused = ad.relu(y)
        out = ad.sum_over_axis(x)
    grads = ad.backward(tape, out)
    assert np.array_equal(grads[y], np.zeros(2))
    assert np.array_equal(grads[x], np.ones(2))


def test_backward_rejects_non_scalar():
    x = leaf([1.0, 2.0])
    with ad.Tape() as tape:
        out = ad.relu(x)
    with pytest.raises(ShapeError):
        ad.backward(tape, out)


def test_shape_mismatch_raises():
    with pytest.raises(ShapeError):
        ad.hadamard(leaf([1.0, 2.0]), leaf([1.0, 2.0, 3.0]))
    with pytest.raises(ShapeError):
        ad.matmul(leaf(np.ones((2, 3))), leaf(np.ones((4, 2))))
    with pytest.raises(ShapeError):
        ad.add(leaf(np.ones((2, 3))), leaf(np.ones((2,))))


def test_empty_axis_logsumexp_rejected():
    # zero-extent arrays cannot even be constructed
    with pytest.raises(ShapeError):
        leaf(np.ones((0, 2)))


def test_gate_scale_gradient():
    x = leaf([1.0, 2.0, 3.0])
    gate = ad.parameter(np.asarray(1.0))
    with ad.Tape() as tape:
        out = ad.sum_over_axis(ad.scale(x, gate))
    grads = ad.backward(tape, out)
    assert grads[gate] == pytest.approx(6.0)
    assert np.allclose(grads[x], 1.0)


def test_gradient_accumulates_across_backward_calls():
    x = leaf([1.0, 2.0])
    x.zero_grad()
    for _ in range(2):
        with ad.Tape() as tape:
            out = ad.sum_over_axis(x)
        ad.backward(tape, out)
    assert np.array_equal(x.grad, [2.0, 2.0])


def test_softmax_gradient_rows_sum_to_zero():
    rng = np.random.default_rng(3)
    x = leaf(rng.standard_normal((5, 7)))
    w = ad.constant(rng.standard_normal((5, 7)))
    with ad.Tape() as tape:
        out = ad.sum_over_axis(ad.hadamard(ad.softmax_over_axis(x, axis=1), w))
    grads = ad.backward(tape, out)
    assert np.abs(grads[x].sum(axis=1)).max() < 1e-10


def test_tape_replay_is_bit_deterministic():
    rng = np.random.default_rng(11)
    a_data = rng.standard_normal((4, 4))
    b_data = rng.standard_normal((4, 4))

    def run():
        a, b = leaf(a_data), leaf(b_data)
        with ad.Tape() as tape:
            out = ad.sum_over_axis(
                ad.log(ad.exp(ad.softmax_over_axis(ad.matmul(a, b), axis=0)))
            )
        grads = ad.backward(tape, out)
        return grads[a].copy(), grads[b].copy()

    ga1, gb1 = run()
    ga2, gb2 = run()
    assert np.array_equal(ga1, ga2)
    assert np.array_equal(gb1, gb2)


def test_finite_difference_quadratic_is_tight():
    x = leaf([1.0, 2.0])

    def fn(leaves):
        (v,) = leaves
        return ad.sum_over_axis(ad.hadamard(v, v))

    assert ad.finite_difference_check(fn, [x], eps=1e-5) < 1e-8


def test_finite_difference_relu_kink_excluded():
    x = leaf([-1.0, 0.0, 2.0])

    def fn(leaves):
        (v,) = leaves
        return ad.sum_over_axis(ad.relu(v))

    mask = x.data == 0.0
    err = ad.finite_difference_check(fn, [x], eps=1e-5, exclude=[mask])
    assert err < 1e-8
    # at the kink the two-sided difference sees slope 1/2, not the subgradient 0
    assert ad.finite_difference_check(fn, [x], eps=1e-5) > 0.4


# every primitive, many shapes/seeds, against central differences
_PRIMS = [
    ("matmul22", lambda rng: [rng.standard_normal((3, 4)), rng.standard_normal((4, 2))],
     lambda xs: ad.matmul(xs[0], xs[1])),
    ("matmul21", lambda rng: [rng.standard_normal((3, 4)), rng.standard_normal(4)],
     lambda xs: ad.matmul(xs[0], xs[1])),
    ("matmul11", lambda rng: [rng.standard_normal(5), rng.standard_normal(5)],
     lambda xs: ad.matmul(xs[0], xs[1])),
    ("hadamard", lambda rng: [rng.standard_normal((2, 5)), rng.standard_normal((2, 5))],
     lambda xs: ad.hadamard(xs[0], xs[1])),
    ("add", lambda rng: [rng.standard_normal((4, 3)), rng.standard_normal((4, 3))],
     lambda xs: ad.add(xs[0], xs[1])),
    ("add_bias", lambda rng: [rng.standard_normal((4, 3)), rng.standard_normal(3)],
     lambda xs: ad.add(xs[0], xs[1])),
    ("relu", lambda rng: [rng.standard_normal((3, 3)) + 0.2],
     lambda xs: ad.relu(xs[0])),
    ("softmax0", lambda rng: [rng.standard_normal((4, 3))],
     lambda xs: ad.softmax_over_axis(xs[0], axis=0)),
    ("softmax1", lambda rng: [rng.standard_normal((4, 3))],
     lambda xs: ad.softmax_over_axis(xs[0], axis=1)),
    ("log", lambda rng: [rng.random((3, 4)) + 0.5],
     lambda xs: ad.log(xs[0])),
    ("exp", lambda rng: [rng.standard_normal((3, 4))],
     lambda xs: ad.exp(xs[0])),
    ("logsumexp", lambda rng: [rng.standard_normal((4, 5))],
     lambda xs: ad.logsumexp_over_axis(xs[0], axis=1)),
    ("gather", lambda rng: [rng.standard_normal((6, 3))],
     lambda xs: ad.gather_rows(xs[0], [0, 2, 2, 5])),
    ("sum_axis", lambda rng: [rng.standard_normal((4, 5))],
     lambda xs: ad.sum_over_axis(xs[0], axis=1)),
    ("scale", lambda rng: [rng.standard_normal((2, 3))],
     lambda xs: ad.scale(xs[0], 0.37)),
    ("transpose", lambda rng: [rng.standard_normal((3, 5))],
     lambda xs: ad.transpose(xs[0])),
    ("reshape", lambda rng: [rng.standard_normal((3, 4))],
     lambda xs: ad.reshape(xs[0], (2, 6))),
]


@pytest.mark.parametrize("name,make,apply_op", _PRIMS, ids=[p[0] for p in _PRIMS])
def test_primitive_gradients_match_finite_differences(name, make, apply_op):
    # weighted sum composed on top so every output coordinate matters
    for seed in range(20):
        rng = np.random.default_rng(seed)
        xs = [leaf(a) for a in make(rng)]
        probe = apply_op(xs)
        wdata = np.random.default_rng(seed + 1000).standard_normal(probe.shape)
        w = ad.constant(wdata)

        def fn(leaves):
            out = apply_op(leaves)
            if out.shape == ():
                return out
            return ad.sum_over_axis(ad.hadamard(out, w))

        assert ad.finite_difference_check(fn, xs, eps=1e-5) < 1e-6, f"{name} seed {seed}"
