import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import random_batch
from lprestream import estimators as est
from lprestream import model, simulate
from lprestream.errors import DimensionMismatch, NotConverged, Singular


def dgp_batches(seed, n, count, **kwargs):
    cfg = simulate.DgpConfig(seed=seed, **kwargs)
    return cfg, [simulate.gen_batch(cfg, n, i + 1) for i in range(count)]


def golden_section_minimum(fun, lo, hi, width=1e-12):
    """Derivative-free 1-d minimizer of a unimodal function."""
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > width:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


class TestFitFull:
    def test_intercept_only_closed_form(self):
        batch = model.Batch(x=np.ones((2, 1)), y=np.array([np.e**2, np.e**2]))
        got = est.fit_full([batch])
        assert_allclose(got, [2.0], atol=1e-12)

    def test_perfect_fit_at_zero(self):
        batch = model.Batch(x=np.ones((3, 1)), y=np.ones(3))
        assert_allclose(est.fit_full([batch]), [0.0], atol=1e-12)

    def test_intercept_only_matches_golden_section(self, rng):
        for _ in range(10):
            y = np.exp(rng.uniform(-2, 2, size=int(rng.integers(2, 30))))
            batch = model.Batch(x=np.ones((y.size, 1)), y=y)
            closed = 0.5 * np.log(np.sum(y) / np.sum(1.0 / y))
            brute = golden_section_minimum(
                lambda b: model.lpre_loss(batch, np.array([b])), -3.0, 3.0
            )
            assert abs(closed - brute) <= 1e-6
            assert abs(est.fit_full([batch])[0] - closed) <= 1e-9

    def test_zero_noise_recovery(self):
        cfg, batches = dgp_batches(1, 80, 3, error_law=simulate.ErrorLaw.UNIT)
        got = est.fit_full(batches)
        assert np.max(np.abs(got - np.asarray(cfg.beta_true))) <= 1e-9

    def test_score_bound_contract(self, rng):
        _, batches = dgp_batches(2, 300, 2)
        beta = est.fit_full(batches)
        pooled_score = sum(model.score(b, beta) for b in batches)
        n = sum(b.n for b in batches)
        assert np.max(np.abs(pooled_score)) <= 1e-6 * (1 + n)

    def test_deterministic(self):
        _, batches = dgp_batches(3, 100, 2)
        assert np.array_equal(est.fit_full(batches), est.fit_full(batches))

    def test_not_converged(self):
        _, batches = dgp_batches(4, 100, 1)
        with pytest.raises(NotConverged):
            est.fit_full(batches, est.SolverConfig(tol=1e-10, max_iter=1))

    def test_singular_design(self):
        batch = model.Batch(x=np.array([[1.0, 2.0]]), y=np.array([1.5]))
        with pytest.raises(Singular):
            est.fit_full([batch])

    def test_width_mismatch(self):
        b1 = model.Batch(x=np.ones((2, 1)), y=np.ones(2))
        b2 = model.Batch(x=np.ones((2, 2)), y=np.ones(2))
        with pytest.raises(DimensionMismatch):
            est.fit_full([b1, b2])


class TestRenewable:
    def test_first_batch_equals_full_fit(self, rng):
        for seed in range(5):
            _, (batch,) = dgp_batches(seed, 200, 1)
            state = est.renew_update(est.RenewableState.initial(5), batch)
            assert np.max(np.abs(state.beta - est.fit_full([batch]))) <= 1e-8

    def test_defining_identity(self):
        _, batches = dgp_batches(7, 150, 6)
        state = est.RenewableState.initial(5)
        for batch in batches:
            prev_beta, prev_q = state.beta, state.q_agg
            state = est.renew_update(state, batch)
            resid = prev_q @ (state.beta - prev_beta) + model.score(batch, state.beta)
            assert np.max(np.abs(resid)) <= 1e-8 * (1 + state.n_total)

    def test_noiseless_batch_is_fixed_point(self):
        _, batches = dgp_batches(8, 100, 2)
        state = est.RenewableState.initial(5)
        for batch in batches:
            state = est.renew_update(state, batch)
        # Responses manufactured to sit exactly on the current estimate.
        x = batches[0].x
        quiet = model.Batch(x=x, y=np.exp(x @ state.beta), index=3)
        after = est.renew_update(state, quiet)
        assert np.max(np.abs(after.beta - state.beta)) <= 1e-10
        assert after.n_total == state.n_total + quiet.n

    def test_tracks_pooled_fit(self):
        _, batches = dgp_batches(9, 250, 8)
        state = est.RenewableState.initial(5)
        for batch in batches:
            state = est.renew_update(state, batch)
        pooled = est.fit_full(batches)
        assert np.max(np.abs(state.beta - pooled)) <= 1e-3

    def test_batch_order_barely_matters(self):
        _, batches = dgp_batches(10, 200, 10)
        forward = est.RenewableState.initial(5)
        for batch in batches:
            forward = est.renew_update(forward, batch)
        backward = est.RenewableState.initial(5)
        for batch in reversed(batches):
            backward = est.renew_update(backward, batch)
        assert np.max(np.abs(forward.beta - backward.beta)) <= 5e-3

    def test_refreshed_hessian_same_root(self):
        _, batches = dgp_batches(11, 150, 4)
        frozen = est.RenewableState.initial(5)
        fresh = est.RenewableState.initial(5)
        cfg = est.SolverConfig(refresh_hessian=True)
        for batch in batches:
            frozen = est.renew_update(frozen, batch)
            fresh = est.renew_update(fresh, batch, cfg)
        assert np.max(np.abs(frozen.beta - fresh.beta)) <= 1e-7

    def test_degenerate_first_batch_raises(self):
        tiny = model.Batch(x=np.array([[1.0, 0.5]]), y=np.array([2.0]))
        with pytest.raises(Singular):
            est.renew_update(est.RenewableState.initial(2), tiny)

    def test_degenerate_later_batch_proceeds(self):
        _, (good,) = dgp_batches(12, 200, 1)
        state = est.renew_update(est.RenewableState.initial(5), good)
        tiny = model.Batch(x=np.ones((1, 5)), y=np.array([1.3]), index=2)
        after = est.renew_update(state, tiny)
        assert after.batches_seen == 2
        assert np.all(np.isfinite(after.beta))

    def test_state_is_fixed_size(self):
        _, batches = dgp_batches(13, 50, 12)
        state = est.RenewableState.initial(5)
        for batch in batches:
            state = est.renew_update(state, batch)
        sizes = {
            f.name: np.asarray(getattr(state, f.name)).size
            for f in dataclasses.fields(state)
        }
        assert sizes == {
            "beta": 5, "q_agg": 25, "c_agg": 25, "n_total": 1, "batches_seen": 1,
        }

    def test_updates_are_pure(self):
        _, batches = dgp_batches(14, 100, 2)
        state = est.renew_update(est.RenewableState.initial(5), batches[0])
        snapshot = (state.beta.copy(), state.q_agg.copy(), state.c_agg.copy())
        est.renew_update(state, batches[1])
        assert np.array_equal(state.beta, snapshot[0])
        assert np.array_equal(state.q_agg, snapshot[1])
        assert np.array_equal(state.c_agg, snapshot[2])
        with pytest.raises(ValueError):
            state.beta[0] = 1.0


class TestCee:
    def test_first_batch_equals_batch_fit(self):
        _, (batch,) = dgp_batches(20, 150, 1)
        state = est.cee_update(est.CeeState.initial(5), batch)
        assert_allclose(state.beta, est.fit_full([batch]), atol=1e-12)

    def test_identical_batches_fixed_point(self):
        _, (batch,) = dgp_batches(21, 150, 1)
        one = est.cee_update(est.CeeState.initial(5), batch)
        two = est.cee_update(one, dataclasses.replace(batch, index=2))
        assert np.max(np.abs(two.beta - one.beta)) <= 1e-10

    def test_scalar_estimate_is_convex_combination(self, rng):
        for seed in range(5):
            r = np.random.default_rng(seed)
            y1 = np.exp(r.uniform(-1, 1, 40))
            y2 = np.exp(r.uniform(-1, 1, 40))
            b1 = model.Batch(x=np.ones((40, 1)), y=y1, index=1)
            b2 = model.Batch(x=np.ones((40, 1)), y=y2, index=2)
            h1 = est.fit_full([b1])[0]
            h2 = est.fit_full([b2])[0]
            state = est.cee_update(est.cee_update(est.CeeState.initial(1), b1), b2)
            assert min(h1, h2) - 1e-12 <= state.beta[0] <= max(h1, h2) + 1e-12

    def test_defining_identity(self):
        _, batches = dgp_batches(22, 120, 5)
        state = est.CeeState.initial(5)
        for batch in batches:
            prev_beta, prev_q = state.beta, state.q_agg
            state = est.cee_update(state, batch)
            beta_hat = est.fit_full([batch])
            q_b = model.information(batch, beta_hat)
            resid = (prev_q + q_b) @ state.beta - prev_q @ prev_beta - q_b @ beta_hat
            assert np.max(np.abs(resid)) <= 1e-8

    def test_small_batch_raises(self):
        tiny = model.Batch(x=np.hstack([np.ones((3, 1)), np.eye(3, 4)]), y=np.ones(3))
        assert tiny.p == 5
        with pytest.raises(Singular):
            est.cee_update(est.CeeState.initial(5), tiny)

    def test_variance_positive(self):
        _, batches = dgp_batches(23, 150, 4)
        state = est.CeeState.initial(5)
        for batch in batches:
            state = est.cee_update(state, batch)
        assert np.all(np.diag(state.v) > 0)
        assert np.array_equal(state.v, state.v.T)


class TestCuee:
    def test_first_batch_equals_batch_fit(self):
        _, (batch,) = dgp_batches(30, 150, 1)
        state = est.cuee_update(est.CueeState.initial(5), batch)
        assert np.max(np.abs(state.beta - est.fit_full([batch]))) <= 1e-8

    def test_zero_noise_stream_stays_at_truth(self):
        cfg, batches = dgp_batches(31, 80, 6, error_law=simulate.ErrorLaw.UNIT)
        state = est.CueeState.initial(5)
        for batch in batches:
            state = est.cuee_update(state, batch)
            assert np.max(np.abs(state.beta - np.asarray(cfg.beta_true))) <= 1e-9

    def test_defining_identity(self):
        _, batches = dgp_batches(32, 120, 5)
        state = est.CueeState.initial(5)
        checks = []  # (batch, intermediary) pairs rebuilt independently
        companion = est.CeeState.initial(5)
        for batch in batches:
            companion = est.cee_update(companion, batch)
            checks.append((batch, companion.beta))
            prev_q = state.q_agg
            state = est.cuee_update(state, batch)
            qb_sum = sum(
                model.information(b, c) @ c for b, c in checks
            )
            s_sum = sum(model.score(b, c) for b, c in checks)
            q_b = model.information(*checks[-1])
            resid = (prev_q + q_b) @ state.beta - (qb_sum - s_sum)
            assert np.max(np.abs(resid)) <= 1e-8

    def test_companion_advances_in_lockstep(self):
        _, batches = dgp_batches(33, 120, 4)
        state = est.CueeState.initial(5)
        standalone = est.CeeState.initial(5)
        for batch in batches:
            state = est.cuee_update(state, batch)
            standalone = est.cee_update(standalone, batch)
        assert np.array_equal(state.cee_companion.beta, standalone.beta)

    def test_tracks_pooled_fit(self):
        _, batches = dgp_batches(34, 100, 10)
        state = est.CueeState.initial(5)
        for batch in batches:
            state = est.cuee_update(state, batch)
        pooled = est.fit_full(batches)
        assert np.max(np.abs(state.beta - pooled)) <= 5e-3


class TestDispatch:
    def test_initial_and_update(self):
        _, (batch,) = dgp_batches(40, 100, 1)
        for method in est.STREAMING_METHODS:
            state = est.initial_state(method, 5)
            assert est.method_of_state(state) is method
            advanced = est.update_state(state, batch)
            assert advanced.batches_seen == 1
            assert advanced.n_total == 100

    def test_full_has_no_state(self):
        with pytest.raises(ValueError):
            est.initial_state(est.Method.FULL_LPRE, 5)

    def test_unknown_state_type(self):
        with pytest.raises(TypeError):
            est.update_state(object(), None)


class TestSolverConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            est.SolverConfig(tol=0.0)
        with pytest.raises(ValueError):
            est.SolverConfig(max_iter=0)
        with pytest.raises(ValueError):
            est.SolverConfig(max_step_halvings=-1)
