import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import chi2

from trunccmp.model import CachedPosterior
from trunccmp.sampler import (
    ChainState,
    DensityTarget,
    SamplerConfig,
    SamplerError,
    WarmupHistory,
    adapt_warmup,
    diagnostics,
    ess,
    mh_block_update_beta,
    mh_scalar_update,
    mh_theta_pair_update,
    rhat,
    run,
    run_chain,
    run_chains,
    sweep,
)


def normal_target(x0=0.0):
    return DensityTarget(lambda x: -0.5 * float(x @ x), [x0], [("x", "scalar", 1)])


def state_for(target, seed=0, **kw):
    return ChainState.initial(target, np.random.default_rng(seed), SamplerConfig(**kw))


def mcse_ok(draws, expected, k=3.0):
    """|mean - expected| within k Monte Carlo standard errors (ESS-based)."""
    n_eff = ess(draws)
    se = draws.std() / math.sqrt(n_eff)
    return abs(draws.mean() - expected) <= k * se


class TestScalar:
    def test_zero_delta_is_accepted_noop(self):
        state = state_for(normal_target(0.7))
        assert mh_scalar_update(state, "x", 0, delta=0.0)
        assert state.target.values()[0] == 0.7
        assert state.accepted["x"][0] == 1

    def test_flat_target_always_accepts(self):
        target = DensityTarget(lambda x: 0.0, [0.0], [("x", "scalar", 1)])
        state = state_for(target)
        for _ in range(10_000):
            mh_scalar_update(state, "x", 0)
        assert state.accepted["x"][0] == 10_000

    def test_invalid_proposal_rejected(self):
        target = DensityTarget(lambda x: 0.0 if x[0] < 1 else -math.inf, [0.0], [("x", "scalar", 1)])
        state = state_for(target)
        assert not mh_scalar_update(state, "x", 0, delta=2.0)
        assert target.values()[0] == 0.0

    def test_standard_normal_moments(self):
        cfg = SamplerConfig(n_chains=4, n_warmup=1000, n_iter=25_000, seed=1)
        draws = run_chains(lambda rng: normal_target(), cfg).draws[:, :, 0]
        assert draws.size == 100_000
        assert abs(draws.mean()) <= 0.05
        assert abs(draws.var() - 1.0) <= 0.1
        assert mcse_ok(draws, 0.0)

    def test_tuned_acceptance_on_three_scales(self):
        scales = np.array([0.1, 1.0, 10.0])
        target = lambda rng: DensityTarget(
            lambda x: -0.5 * float(np.sum((x / scales) ** 2)), np.zeros(3),
            [("a", "scalar", 1), ("b", "scalar", 1), ("c", "scalar", 1)],
        )
        res = run_chain(target(None), SamplerConfig(n_warmup=1000, n_iter=5000), np.random.default_rng(2))
        for name in "abc":
            assert 0.3 <= res.accept_rate[name] <= 0.6, res.accept_rate
        np.testing.assert_allclose(res.draws.std(axis=0), scales, rtol=0.15)


class TestPair:
    def test_zero_delta_noop(self):
        target = DensityTarget(lambda x: -float(x @ x), [0.3, -0.3], [("theta", "pair", 2)])
        state = state_for(target)
        assert mh_theta_pair_update(state, 0, 1, delta=0.0)
        np.testing.assert_array_equal(target.values(), [0.3, -0.3])

    def test_sum_preserved(self):
        x0 = np.array([0.3, -0.1, -0.2, 0.5, -0.5])
        target = DensityTarget(lambda x: -float(x @ x) / 0.2, x0, [("theta", "pair", 5)])
        state = state_for(target)
        s0 = x0.sum()
        for _ in range(25_000):
            sweep(state, SamplerConfig())  # 4 pair moves per sweep
        assert abs(target.values().sum() - s0) <= 1e-12

    def test_same_component_rejected(self):
        state = state_for(DensityTarget(lambda x: 0.0, [0.0, 0.0], [("theta", "pair", 2)]))
        with pytest.raises(ValueError):
            mh_theta_pair_update(state, 1, 1)

    def test_two_player_marginal_matches_quadrature(self):
        # non-Gaussian two-player posterior restricted to theta_2 = -theta_1
        sd = 0.5 * math.log(2)

        def logp(x):
            t1, t2 = x
            return (-(t1 * t1 + t2 * t2) / (2 * sd * sd) + 3 * t1 - 2 * math.exp(t1) + 5 * t2 - 4 * math.exp(t2))

        line = lambda t: math.exp(logp((t, -t)))
        z = quad(line, -5, 5)[0]
        m1 = quad(lambda t: t * line(t), -5, 5)[0] / z
        m2 = quad(lambda t: t * t * line(t), -5, 5)[0] / z
        q_lo = 0.0
        cfg = SamplerConfig(n_chains=4, n_warmup=1000, n_iter=10_000, seed=3)
        res = run_chains(lambda rng: DensityTarget(logp, [0.0, 0.0], [("theta", "pair", 2)]), cfg)
        t = res.draws[:, :, 0]
        np.testing.assert_allclose(res.draws[:, :, 1], -t, atol=1e-12)
        assert mcse_ok(t, m1)
        assert t.var() == pytest.approx(m2 - m1 * m1, rel=0.05)
        p_below = quad(line, -5, q_lo)[0] / z
        assert abs((t < q_lo).mean() - p_below) <= 4 * math.sqrt(p_below * (1 - p_below) / ess(np.where(t < q_lo, 1.0, 0.0)))


def correlated_cov(d=8, rho=0.6):
    idx = np.arange(d)
    return (0.5 + 0.25 * idx)[:, None] * (0.5 + 0.25 * idx)[None, :] * rho ** np.abs(idx[:, None] - idx[None, :])


class TestBlock:
    def test_zero_draw_noop(self):
        target = DensityTarget(lambda x: -0.5 * float(x @ x), np.ones(8), [("beta", "vector", 8)])
        state = state_for(target)
        assert mh_block_update_beta(state, z=np.zeros(8))
        np.testing.assert_array_equal(target.values(), np.ones(8))

    def test_correlated_normal(self):
        cov = correlated_cov()
        prec = np.linalg.inv(cov)
        mean = np.linspace(-1, 1, 8)
        f = lambda x: -0.5 * float((x - mean) @ prec @ (x - mean))
        cfg = SamplerConfig(n_chains=4, n_warmup=2000, n_iter=25_000, seed=0)
        res = run_chains(lambda rng: DensityTarget(f, np.zeros(8), [("beta", "vector", 8)]), cfg)
        pooled = res.pooled()
        emp = np.cov(pooled, rowvar=False)
        assert np.linalg.norm(emp - cov) / np.linalg.norm(cov) <= 0.10
        # whitened coordinates are independent N(0, 1) under the target
        L = np.linalg.cholesky(cov)
        u = np.linalg.solve(L, (res.draws - mean).reshape(-1, 8).T).T.reshape(res.draws.shape)
        z = [u[:, :, k].mean() / (u[:, :, k].std() / math.sqrt(ess(u[:, :, k]))) for k in range(8)]
        assert float(np.sum(np.square(z))) <= chi2.ppf(0.999, 8)
        assert 0.1 <= np.mean([r["beta"] for r in res.accept_rate]) <= 0.5


class TestAdaptation:
    def _rounds(self, accept):
        target = DensityTarget(lambda x: 0.0, [0.0], [("x", "scalar", 1)])
        state = state_for(target)
        history = WarmupHistory.start(state)
        steps = [state.steps["x"][0]]
        for _ in range(10):
            state.proposed["x"] += 50
            state.accepted["x"] += 50 if accept else 0
            adapt_warmup(state, history, SamplerConfig())
            steps.append(state.steps["x"][0])
        return np.array(steps)

    def test_all_reject_shrinks(self):
        assert np.all(np.diff(self._rounds(False)) < 0)

    def test_all_accept_grows(self):
        assert np.all(np.diff(self._rounds(True)) > 0)

    def test_frozen_after_warmup(self):
        a = run_chain(normal_target(), SamplerConfig(n_warmup=200, n_iter=50), np.random.default_rng(0))
        b = run_chain(normal_target(), SamplerConfig(n_warmup=200, n_iter=2000), np.random.default_rng(0))
        assert a.steps["x"][0] != SamplerConfig().init_step
        np.testing.assert_array_equal(a.steps["x"], b.steps["x"])
        np.testing.assert_array_equal(a.draws, b.draws[:50])


class TestDiagnostics:
    def test_iid_chains(self):
        x = np.random.default_rng(5).normal(size=(4, 2000))
        assert abs(rhat(x) - 1.0) <= 0.01
        assert ess(x) == pytest.approx(8000, rel=0.1)

    def test_shifted_chains(self):
        x = np.random.default_rng(6).normal(size=(4, 1000))
        x[0] += 3.0
        assert rhat(x) > 1.1

    def test_ar1_ess(self):
        rho, n = 0.5, 20_000
        rng = np.random.default_rng(7)
        x = np.empty((4, n))
        x[:, 0] = rng.normal(size=4) / math.sqrt(1 - rho * rho)
        e = rng.normal(size=(4, n))
        for t in range(1, n):
            x[:, t] = rho * x[:, t - 1] + e[:, t]
        expected = 4 * n * (1 - rho) / (1 + rho)
        assert ess(x) == pytest.approx(expected, rel=0.2)

    def test_single_chain_is_an_error(self):
        with pytest.raises(ValueError):
            diagnostics(np.zeros((1, 100, 2)))
        with pytest.raises(ValueError):
            rhat(np.zeros((1, 10)))

    def test_constant_chain_is_nan(self):
        assert math.isnan(rhat(np.ones((2, 50))))


class TestModelChains:
    def test_deterministic(self, small):
        _, _, model = small
        cfg = SamplerConfig(n_chains=2, n_warmup=20, n_iter=30, seed=9)
        a, b = run(cfg, model), run(cfg, model)
        np.testing.assert_array_equal(a.draws, b.draws)
        assert a.draws.shape == (2, 30, model.layout.size)
        c = run(SamplerConfig(n_chains=2, n_warmup=20, n_iter=30, seed=10), model)
        assert not np.array_equal(a.draws, c.draws)

    def test_sum_to_zero_in_draws(self, small):
        _, _, model = small
        dr = run(SamplerConfig(n_chains=2, n_warmup=20, n_iter=50, seed=1), model)
        th = dr.block("theta")
        assert np.max(np.abs(th.sum(axis=-1))) <= 1e-12

    def test_block_acceptance_after_adaptation(self, small):
        _, _, model = small
        dr = run(SamplerConfig(n_chains=2, n_warmup=400, n_iter=400, seed=2), model)
        for rates in dr.accept_rate:
            assert 0.1 <= rates["beta"] <= 0.5
            assert 0.25 <= rates["theta"] <= 0.65

    def test_parallel_matches_serial(self, small):
        _, _, model = small
        cfg = dict(n_chains=2, n_warmup=10, n_iter=10, seed=5)
        a = run(SamplerConfig(**cfg), model)
        b = run(SamplerConfig(n_workers=2, **cfg), model)
        np.testing.assert_array_equal(a.draws, b.draws)

    def test_checkpoint_resume_is_exact(self, small, tmp_path):
        _, _, model = small
        cfg = SamplerConfig(n_warmup=60, n_iter=60, seed=0, checkpoint_every=25, checkpoint_dir=str(tmp_path))
        plain = SamplerConfig(n_warmup=60, n_iter=60, seed=0)

        def fresh(seed):
            rng = np.random.default_rng(seed)
            return CachedPosterior(model, model.initial_params(rng)), rng

        target, rng = fresh(1)
        expected = run_chain(target, plain, rng)

        class Crash(Exception):
            pass

        for stop in (70, 100):  # once during sampling (second resume), once to finish
            target, rng = fresh(1)
            calls = {"n": 0}
            original = target.commit

            def commit():
                calls["n"] += 1
                if calls["n"] > 40 * stop:
                    raise Crash
                original()

            target.commit = commit
            try:
                run_chain(target, cfg, rng)
            except Crash:
                pass
        target, rng2 = fresh(1)
        resumed = run_chain(target, cfg, rng2)
        np.testing.assert_array_equal(resumed.draws, expected.draws)
        assert resumed.accept_rate == expected.accept_rate

    def test_cache_drift_is_detected(self, small):
        _, _, model = small
        rng = np.random.default_rng(0)
        target = CachedPosterior(model, model.initial_params(rng))
        original = target.commit

        def drifting_commit():
            original()
            target.current += 1e-5

        target.commit = drifting_commit
        with pytest.raises(SamplerError, match="differs"):
            run_chain(target, SamplerConfig(n_warmup=5, n_iter=5, check_every=5), rng)


def test_memory_guard():
    cfg = SamplerConfig(n_chains=4, n_iter=5000, max_stored_values=1000)
    assert cfg.effective_thin(10) == 5
    assert SamplerConfig().effective_thin(200) == 1


@pytest.mark.parametrize("kw", [dict(n_chains=0), dict(n_iter=0), dict(n_warmup=-1), dict(target_accept=1.0),
                                dict(init_step=0.0), dict(block_proposal="newton")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SamplerConfig(**kw)
