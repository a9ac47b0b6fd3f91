import numpy as np
import pytest

from fednest import (BilevelQuadraticSpec, CompositionalSpec, MinimaxQuadraticSpec, NoiseLevels,
                     RngStream, make_bilevel_quadratic, make_compositional, make_minimax_quadratic,
                     sample_hessvec, sample_inner_grad, sample_jacvec, sample_outer_grads)
from fednest.exceptions import ContractViolation, NumericFault

R = 100_000


def _mc_mean(fn, R=R):
    root = RngStream(2024, ("mc",))
    acc = None
    for r in range(R):
        v = fn(root.child(r))
        acc = v.copy() if acc is None else acc + v
    return acc / R


@pytest.fixture(scope="module")
def minimax():
    return make_minimax_quadratic(MinimaxQuadraticSpec(m=3, d=3))


def test_minimax_inner_grad_zero_at_inner_optimum(minimax):
    c = minimax.clients[0]
    x = np.zeros(3)
    g = sample_inner_grad(c, (x, minimax.b[0]), RngStream(0))
    np.testing.assert_allclose(g, 0.0, atol=1e-15)


def test_minimax_outer_grads_at_origin(minimax):
    for i, c in enumerate(minimax.clients):
        gx, gy = sample_outer_grads(c, (np.zeros(3), np.zeros(3)), RngStream(0))
        np.testing.assert_array_equal(gx, np.zeros(3))
        np.testing.assert_allclose(gy, minimax.b[i])


def test_minimax_hessvec_is_identity(minimax):
    v = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(sample_hessvec(minimax.clients[1], (np.ones(3), v), v, RngStream(0)), v)


def test_jacvec_linear_in_v(minimax):
    c = minimax.clients[0]
    p = (np.ones(3), np.ones(3))
    np.testing.assert_array_equal(sample_jacvec(c, p, np.zeros(3), RngStream(0)), np.zeros(3))


def test_compositional_blocks():
    inst = make_compositional(CompositionalSpec(m=3, d1=2, d2=3))
    c = inst.clients[0]
    x = np.array([0.3, -0.7])
    r = -(c.P @ x + c.c)  # r_i(x) = M x + v
    np.testing.assert_allclose(sample_inner_grad(c, (x, r), RngStream(0)), 0.0, atol=1e-14)
    gx, _ = sample_outer_grads(c, (x, np.ones(3)), RngStream(0))
    np.testing.assert_array_equal(gx, np.zeros(2))
    v = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(sample_hessvec(c, (x, r), v, RngStream(0)), v)
    np.testing.assert_allclose(sample_jacvec(c, (x, r), v, RngStream(0)), c.P.T @ v)


def test_bilevel_dense_columns():
    inst = make_bilevel_quadratic(BilevelQuadraticSpec(m=2, d1=3, d2=4))
    c = inst.clients[1]
    p = (np.zeros(3), np.zeros(4))
    e1 = np.eye(4)[0]
    np.testing.assert_allclose(sample_hessvec(c, p, e1, RngStream(0)), c.Q[:, 0])
    np.testing.assert_allclose(sample_jacvec(c, p, e1, RngStream(0)), c.P.T[:, 0])


def test_replay_same_stream_same_sample():
    inst = make_bilevel_quadratic(BilevelQuadraticSpec(m=2, sigma_g1=1.0, sigma_f=1.0))
    c = inst.clients[0]
    p = (np.ones(5), np.ones(5))
    a = c.sample_inner_grad(p, RngStream(3, ("s",)))
    b = c.sample_inner_grad(p, RngStream(3, ("s",)))
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c.sample_inner_grad(p, RngStream(3, ("t",))))


def test_noise_free_ignores_stream():
    inst = make_bilevel_quadratic(BilevelQuadraticSpec(m=2))
    c = inst.clients[0]
    p = (np.ones(5), np.zeros(5))
    np.testing.assert_array_equal(c.sample_inner_grad(p, RngStream(1)), c.sample_inner_grad(p, RngStream(2)))
    np.testing.assert_allclose(c.sample_inner_grad(p, RngStream(1)), c.inner_grad(*p))


def test_shape_and_finiteness_checks():
    inst = make_bilevel_quadratic(BilevelQuadraticSpec(m=2))
    c = inst.clients[0]
    with pytest.raises(ContractViolation):
        c.sample_inner_grad((np.ones(4), np.ones(5)), RngStream(0))
    with pytest.raises(NumericFault), np.errstate(invalid="ignore"):
        c.sample_inner_grad((np.full(5, np.inf), np.ones(5)), RngStream(0))
    with pytest.raises(ContractViolation):
        NoiseLevels(sigma_f=-1.0)


@pytest.mark.slow
def test_inner_grad_unbiased_monte_carlo():
    inst = make_minimax_quadratic(MinimaxQuadraticSpec(m=2, d=3, sigma=1.0))
    c = inst.clients[0]
    p = (np.array([0.2, -0.1, 0.4]), np.array([1.0, 0.0, -1.0]))
    mean = _mc_mean(lambda r: c.sample_inner_grad(p, r))
    assert np.max(np.abs(mean - c.inner_grad(*p))) <= 5 * 1.0 / np.sqrt(R)


@pytest.mark.slow
def test_outer_grads_unbiased_monte_carlo():
    inst = make_bilevel_quadratic(BilevelQuadraticSpec(m=2, d1=2, d2=2, sigma_f=1.0))
    c = inst.clients[0]
    p = (np.array([0.5, -0.5]), np.array([0.1, 0.2]))
    mean = _mc_mean(lambda r: np.concatenate(c.sample_outer_grads(p, r)))
    assert np.max(np.abs(mean - np.concatenate(c.outer_grads(*p)))) <= 5 * 1.0 / np.sqrt(R)


@pytest.mark.slow
def test_hessvec_and_jacvec_unbiased_monte_carlo():
    inst = make_bilevel_quadratic(BilevelQuadraticSpec(m=2, d1=2, d2=2, sigma_g2=1.0))
    c = inst.clients[0]
    p = (np.zeros(2), np.zeros(2))
    v = np.array([1.0, -1.0]) / np.sqrt(2)
    mean = _mc_mean(lambda r: np.concatenate([c.sample_hessvec(p, v, r.child("h")),
                                              c.sample_jacvec(p, v, r.child("j"))]))
    exact = np.concatenate([c.Q @ v, c.P.T @ v])
    assert np.max(np.abs(mean - exact)) <= 5 * 1.0 / np.sqrt(R)
