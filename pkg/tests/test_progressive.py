from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pica.errors import ContractError, NumericError, ParameterError
from pica.ica import apply_whitening, fastica, fit_whitening, iterate, random_orthonormal, reconstruct
from pica.progressive import (
    ITERATION_CAP,
    LAST_NODE_CONVERGED,
    SLOW_GRADIENT,
    TOLERANCE_REACHED,
    PicaParams,
    initial_state,
    last_node_process,
    node_process,
    sample_columns,
    slow_gradient_check,
    update_step,
)
from pica.signal import generate_mixing_matrix, generate_sources, mix


def _trial(seed, m=40000):
    S = generate_sources(4, m, seed=seed)
    A = generate_mixing_matrix(4, seed=seed)
    return S, A, mix(A, S)


def _state(X, seed=0, **params):
    p = PicaParams(**params)
    return initial_state(random_orthonormal(X.shape[0], seed), p, fit_whitening(X)), p


def _run_chain(X, state, params, k):
    reports = []
    for _ in range(k):
        if update_step(state.mu, state.alpha) < 1:
            break
        state, report = node_process(X, state, params)
        reports.append(report)
    return state, reports


class TestUpdateStep:
    @pytest.mark.parametrize("mu, alpha, expected", [(500, 2, 250), (1, 2, 0.5), (4130, 2, 2065)])
    def test_examples(self, mu, alpha, expected):
        assert update_step(mu, alpha) == expected

    @pytest.mark.parametrize("mu, alpha", [(0, 2), (-1, 2), (10, 1.5)])
    def test_preconditions(self, mu, alpha):
        with pytest.raises(ParameterError):
            update_step(mu, alpha)

    @given(st.floats(1, 1e6), st.lists(st.floats(2, 64), min_size=1, max_size=20))
    def test_closed_form(self, mu0, alphas):
        mu = mu0
        for a in alphas:
            mu = update_step(mu, a)
        assert mu == pytest.approx(mu0 / np.prod(alphas), rel=1e-12)


class TestSampleColumns:
    def test_default_step(self):
        X = np.arange(2 * 160000, dtype=float).reshape(2, 160000)
        sub = sample_columns(X, 4130)
        assert sub.shape == (2, 39)
        assert sub[0, -1] == 156940

    def test_step_one_is_identity(self, rng):
        X = rng.standard_normal((3, 17))
        np.testing.assert_array_equal(sample_columns(X, 1), X)

    def test_enumeration(self):
        X = np.arange(10, dtype=float)[None, :].repeat(2, axis=0)
        np.testing.assert_array_equal(sample_columns(X, 3)[0], [0, 3, 6, 9])

    def test_fractional_step_rounds(self):
        X = np.arange(20, dtype=float)[None, :].repeat(2, axis=0)
        np.testing.assert_array_equal(sample_columns(X, 3.9)[0], [0, 4, 8, 12, 16])

    def test_below_one_is_contract_violation(self, rng):
        with pytest.raises(ContractError):
            sample_columns(rng.standard_normal((2, 5)), 0.5)

    @given(st.integers(1, 5000), st.floats(1, 6000))
    def test_column_count(self, m, mu):
        t = max(1, int(round(mu)))
        assert sample_columns(np.zeros((2, m)), mu).shape[1] == (m - 1) // t + 1


class TestSlowGradient:
    def test_flat_history_continues(self):
        # sum = 3.0, bound = 0.9 * 0.5 * (1 + 1) * 3 = 2.7
        assert slow_gradient_check([1.0, 1.0, 1.0], 0.9) is False

    def test_fast_drop_stops(self):
        # sum = 1.11, bound = 0.9 * 0.5 * (1.0 + 0.01) * 3 = 1.3635
        assert slow_gradient_check([1.0, 0.1, 0.01], 0.9) is True

    def test_warmup_guard(self):
        assert slow_gradient_check([0.5], 0.01) is False
        assert slow_gradient_check([1.0, 1e-9], 0.99) is False

    def test_empty(self):
        with pytest.raises(ParameterError):
            slow_gradient_check([], 0.5)

    @given(st.lists(st.floats(0, 10), min_size=3, max_size=30), st.floats(0.01, 0.99))
    def test_matches_formula(self, history, p_break):
        expected = sum(history) < p_break * 0.5 * (max(history) + history[-1]) * len(history)
        assert slow_gradient_check(history, p_break) == expected


class TestParams:
    @pytest.mark.parametrize("kwargs", [
        {"tol": 0}, {"grad_threshold": 0}, {"grad_threshold": 1}, {"max_local_iter": 0},
        {"mu0": 0.5}, {"alpha0": 1.9},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ParameterError):
            PicaParams(**kwargs)


class TestNodeProcess:
    def test_tolerance_exit_doubles_alpha(self):
        _, _, X = _trial(1)
        state, params = _state(X, mu0=20)
        # Converge W on exactly the subset node 1 will sample.
        Z = apply_whitening(state.whitening, sample_columns(X, update_step(20, 2)))
        W, _, _ = iterate(Z, state.W, 1e-12, 500)
        nxt, report = node_process(X, replace(state, W=W), params)
        assert report.exit_reason == TOLERANCE_REACHED
        assert report.iterations <= 2
        assert nxt.alpha == 4
        assert nxt.mu == 10
        assert nxt.hop == 1
        assert report.samples_used == 4000

    def test_slow_gradient_exit_keeps_floor(self):
        _, _, X = _trial(2)
        state, params = _state(X, mu0=20, tol=1e-300, grad_threshold=0.99)
        nxt, report = node_process(X, state, params)
        assert report.exit_reason == SLOW_GRADIENT
        assert report.iterations >= 3
        assert nxt.alpha == 2

    def test_slow_gradient_exit_halves_alpha(self):
        _, _, X = _trial(2)
        state, params = _state(X, mu0=80, alpha0=8, tol=1e-300, grad_threshold=0.99)
        nxt, report = node_process(X, state, params)
        assert report.exit_reason == SLOW_GRADIENT
        assert nxt.alpha == 4

    def test_iteration_cap(self):
        _, _, X = _trial(3)
        state, params = _state(X, mu0=20, tol=1e-300, max_local_iter=2)
        nxt, report = node_process(X, state, params)
        assert report.exit_reason == ITERATION_CAP
        assert report.iterations == 2
        assert nxt.alpha == 2

    def test_orthonormal_handoff_and_distance(self):
        S, A, X = _trial(4)
        state, params = _state(X, mu0=50)
        nxt, report = node_process(X, state, params, mixing=A)
        assert np.linalg.norm(nxt.W @ nxt.W.T - np.eye(4)) <= 1e-8
        assert 0 <= report.cosine_distance <= 2
        assert report.wall_time > 0

    def test_mu_below_one_is_routed_elsewhere(self):
        _, _, X = _trial(5, m=2000)
        state, params = _state(X, mu0=1)
        with pytest.raises(ContractError):
            node_process(X, state, params)

    def test_numeric_error_names_hop(self):
        _, _, X = _trial(5, m=2000)
        state, params = _state(X, mu0=4)
        X = X.copy()
        X[0, ::2] = np.inf
        with pytest.raises(NumericError) as info:
            node_process(X, replace(state, hop=6), params)
        assert info.value.hop == 7
        assert "hop 7" in str(info.value)


class TestChainInvariants:
    @pytest.mark.parametrize("seed", range(4))
    def test_invariants_along_chain(self, seed):
        S, A, X = _trial(seed)
        state, params = _state(X, seed=seed, mu0=500)
        mu_prev, samples_prev, product = state.mu, 0, 1.0
        for _ in range(15):
            if update_step(state.mu, state.alpha) < 1:
                break
            product *= state.alpha
            state, report = node_process(X, state, params)
            assert state.mu <= mu_prev
            assert state.mu == pytest.approx(params.mu0 / product, rel=1e-12)
            assert state.alpha >= 2
            assert report.samples_used >= samples_prev
            assert report.iterations <= params.max_local_iter
            assert report.samples_used <= X.shape[1]
            assert report.exit_reason in (TOLERANCE_REACHED, SLOW_GRADIENT, ITERATION_CAP)
            assert np.linalg.norm(state.W @ state.W.T - np.eye(4)) <= 1e-8
            mu_prev, samples_prev = state.mu, report.samples_used


class TestLastNode:
    def test_empty_chain_equals_fastica(self):
        _, _, X = _trial(7)
        state, params = _state(X, seed=7)
        W, S_hat, report = last_node_process(X, state, params)
        T, W_ref, iterations = fastica(X, tol=params.tol, max_iter=params.last_node_cap, seed=7)
        assert np.array_equal(W, W_ref)
        assert np.array_equal(S_hat, reconstruct(W_ref, T, X))
        assert report.iterations == iterations
        assert report.exit_reason == LAST_NODE_CONVERGED
        assert report.samples_used == X.shape[1]

    def test_converged_input_needs_one_iteration(self):
        _, _, X = _trial(8)
        state, params = _state(X)
        Z = apply_whitening(state.whitening, X)
        W, _, _ = iterate(Z, state.W, 1e-14, 500)
        W_out, S_hat, report = last_node_process(X, replace(state, W=W, mu=0.5), params)
        assert report.iterations <= 1
        assert S_hat.shape == X.shape

    def test_warm_start_beats_cold_start(self):
        warm, cold = [], []
        for seed in range(10):
            _, _, X = _trial(100 + seed)
            state, params = _state(X, seed=seed, mu0=X.shape[1] / 40)
            chained, _ = _run_chain(X, state, params, 15)
            warm.append(last_node_process(X, chained, params)[2].iterations)
            cold.append(last_node_process(X, state, params)[2].iterations)
        assert np.mean(warm) < np.mean(cold)

    def test_cap(self):
        _, _, X = _trial(9, m=4000)
        state, params = _state(X, tol=1e-300, max_local_iter=1)
        _, _, report = last_node_process(X, state, params)
        assert report.exit_reason == ITERATION_CAP
        assert report.iterations == params.last_node_cap == 10
