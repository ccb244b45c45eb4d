import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lqgames import certify
from lqgames.model import (LqGame, benchmark_game, benchmark_initial_gain,
                           build_compact, deterministic_noise, isotropic_noise,
                           lift_gain, scalar_demo_game, time_invariant_game,
                           zero_gain)


@pytest.fixture(scope="module")
def scalar():
    return scalar_demo_game()


@pytest.fixture(scope="module")
def bench_ops():
    return build_compact(benchmark_game())


def k_half():
    return lift_gain([np.array([[0.5]])], side="K")


def test_value_blocks_scalar(scalar):
    # backward recursion by hand: P1 = 1, P0 = 1 + 0.25 + 0.25 = 1.5
    P = certify.value_blocks(scalar, k_half(), zero_gain(scalar, "L"))
    assert P[0] == pytest.approx(np.array([[1.5]]))
    assert P[1] == pytest.approx(np.array([[1.0]]))


def test_value_blocks_zero_dynamics():
    g = time_invariant_game(np.zeros((2, 2)), np.eye(2), np.eye(2),
                            np.eye(2), np.eye(2), 5 * np.eye(2), horizon=2,
                            noise=isotropic_noise(2, 2))
    P = certify.value_blocks(g, zero_gain(g, "K"), zero_gain(g, "L"))
    for p in P:
        assert np.allclose(p, np.eye(2))


def test_covariance_scalar(scalar):
    S = certify.covariance_blocks(scalar, k_half(), zero_gain(scalar, "L"))
    assert S[0] == pytest.approx(np.array([[1.0]]))
    assert S[1] == pytest.approx(np.array([[1.25]]))


def test_objective_scalar(scalar):
    assert certify.objective(scalar, k_half(), zero_gain(scalar, "L")) == pytest.approx(2.5)


def test_objective_dual_identity(bench_ops):
    K = benchmark_initial_gain()
    L = zero_gain(bench_ops.game, "L")
    obj = certify.objective(bench_ops, K, L)
    M = certify.stage_cost_blocks(bench_ops, K, L)
    S = certify.covariance_blocks(bench_ops, K, L)
    dual = float(sum(np.trace(m @ s) for m, s in zip(M, S)))
    assert obj == pytest.approx(dual, rel=1e-8)


def test_natural_gradients_scalar(scalar):
    K, L = k_half(), zero_gain(scalar, "L")
    F, E = certify.natural_gradients(scalar, K, L)
    # k = 0.5 is the best response to l = 0: (1+1)*0.5 - 1*1*1 = 0
    assert F.blocks[0] == pytest.approx(np.array([[0.0]]))
    assert E.blocks[0] == pytest.approx(np.array([[-0.25]]))
    # raw gradient identity: grad_L = 2 E Sigma, stage 0 covariance = 1
    S = certify.covariance_blocks(scalar, K, L)
    assert 2 * E.blocks[0][0, 0] * S[0][0, 0] == pytest.approx(-0.5)


def test_best_response_scalar(scalar):
    br = certify.best_response_L(scalar, k_half())
    assert br.feasible
    assert br.H_blocks[0] == pytest.approx(np.array([[4.75]]))
    assert br.L.blocks[0][0, 0] == pytest.approx(-1.0 / 19.0)
    assert br.P_blocks[0][0, 0] == pytest.approx(1.5 + 0.25 ** 2 / 4.75)
    assert br.P_blocks[1] == pytest.approx(np.array([[1.0]]))


def test_best_response_dominates_any_L(scalar):
    K = k_half()
    br = certify.best_response_L(scalar, K)
    rng = np.random.default_rng(3)
    for _ in range(50):
        L = lift_gain([rng.uniform(-0.4, 0.4, (1, 1))], side="L")
        val = certify.objective(scalar, K, L)
        assert val <= certify.objective(scalar, K, br.L) + 1e-12


def test_best_response_no_disturbance_channel():
    g = time_invariant_game(np.eye(1), np.eye(1), np.zeros((1, 1)),
                            np.eye(1), np.eye(1), 5 * np.eye(1), horizon=2,
                            noise=isotropic_noise(1, 2))
    br = certify.best_response_L(g, zero_gain(g, "K"))
    assert br.feasible
    for b in br.L.blocks:
        assert np.allclose(b, 0.0)
    P = certify.value_blocks(g, zero_gain(g, "K"), zero_gain(g, "L"))
    for a, b in zip(br.P_blocks, P):
        assert np.allclose(a, b)


def test_infeasible_reported_without_exception():
    one = np.array([[1.0]])
    g = LqGame(A=(one,), B=(one,), D=(np.array([[0.5]]),),
               Q=(one, one), Ru=(one,), Rw=(np.array([[0.2]]),),
               noise=isotropic_noise(1, 1))
    br = certify.best_response_L(g, k_half())
    assert not br.feasible
    assert br.violating_stage == 0
    rep = certify.in_feasible_set(g, k_half())
    assert not rep.member and not rep.margin_pd
    with pytest.raises(certify.NashInfeasibleError):
        certify.primal_value(g, k_half())


def test_solve_nash_scalar(scalar):
    sol = certify.solve_nash(scalar)
    assert sol.Pstar_blocks[0][0, 0] == pytest.approx(1.0 + 1.0 / 1.95)
    assert sol.value == pytest.approx(2.5128205128205128)
    assert sol.margin == pytest.approx(4.75)
    F, E = certify.natural_gradients(scalar, sol.Kstar, sol.Lstar)
    assert F.frobenius_norm() <= 1e-10
    assert E.frobenius_norm() <= 1e-10


def test_solve_nash_benchmark(bench_ops):
    sol = certify.solve_nash(bench_ops)
    assert sol.value == pytest.approx(3.2330, abs=5e-4)
    assert sol.margin == pytest.approx(4.2860, abs=5e-4)


def test_solve_nash_saddle_point(bench_ops):
    sol = certify.solve_nash(bench_ops)
    rng = np.random.default_rng(7)
    g = bench_ops.game
    for _ in range(20):
        dK = lift_gain([1e-3 * rng.standard_normal((g.d, g.m))
                        for _ in range(g.horizon)], side="K")
        dL = lift_gain([1e-3 * rng.standard_normal((g.n, g.m))
                        for _ in range(g.horizon)], side="L")
        assert certify.objective(bench_ops, sol.Kstar + dK, sol.Lstar) >= sol.value - 1e-9
        assert certify.objective(bench_ops, sol.Kstar, sol.Lstar + dL) <= sol.value + 1e-9


def test_solve_nash_infeasible_instance():
    one = np.array([[1.0]])
    g = LqGame(A=(one,), B=(one,), D=(one,),
               Q=(one, one), Ru=(one,), Rw=(np.array([[0.5]]),),
               noise=isotropic_noise(1, 1))
    with pytest.raises(certify.NashInfeasibleError):
        certify.solve_nash(g)


def test_lqr_reduction():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((2, 2)) * 0.5
    B = rng.standard_normal((2, 2))
    g = time_invariant_game(A, B, np.zeros((2, 2)), np.eye(2), np.eye(2),
                            5 * np.eye(2), horizon=3, noise=isotropic_noise(2, 3))
    sol = certify.solve_nash(g)
    assert sol.value == pytest.approx(certify.lqr_cost_oracle(g), abs=1e-10)
    for b in sol.Lstar.blocks:
        assert np.allclose(b, 0.0, atol=1e-12)


def test_khat_set_membership(bench_ops):
    K0 = benchmark_initial_gain()
    anchor = certify.anchor_certificate(bench_ops, K0)
    assert certify.in_Khat_set(bench_ops, K0, anchor).member
    sol = certify.solve_nash(bench_ops)
    assert certify.in_Khat_set(bench_ops, sol.Kstar, anchor).member
    # inflate K far beyond the anchored sublevel bound
    far = K0.scale(6.0)
    assert not certify.in_Khat_set(bench_ops, far, anchor).member


def test_certificate_consistency(bench_ops):
    K = benchmark_initial_gain()
    L = zero_gain(bench_ops.game, "L")
    cert = certify.certificate(bench_ops, K, L)
    assert cert.objective == pytest.approx(certify.objective(bench_ops, K, L))
    doc = cert.to_dict()
    assert doc["objective"] == cert.objective
    assert len(doc["P_blocks"]) == bench_ops.game.horizon + 1
    assert len(doc["F_blocks"]) == bench_ops.game.horizon


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_primal_dominates_any_pair(seed):
    # G(K, L) <= G(K, L(K)) for random feasible pairs on the scalar game
    g = scalar_demo_game()
    rng = np.random.default_rng(seed)
    K = lift_gain([rng.uniform(-1.0, 1.5, (1, 1))], side="K")
    L = lift_gain([rng.uniform(-0.5, 0.5, (1, 1))], side="L")
    br = certify.best_response_L(g, K)
    if not br.feasible:
        return
    assert certify.objective(g, K, L) <= certify.primal_value(g, K) + 1e-10


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_covariance_floor(seed):
    # lambda_min(Sigma) >= phi: noise injection lower-bounds every stage
    g = scalar_demo_game()
    rng = np.random.default_rng(seed)
    K = lift_gain([rng.uniform(-1.0, 1.5, (1, 1))], side="K")
    L = lift_gain([rng.uniform(-0.5, 0.5, (1, 1))], side="L")
    S = certify.covariance_blocks(g, K, L)
    lam = min(float(np.linalg.eigvalsh(s).min()) for s in S)
    assert lam >= g.noise.phi - 1e-12
