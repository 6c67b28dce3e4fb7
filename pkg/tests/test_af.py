from dataclasses import replace

import numpy as np
import pytest

from conftest import angle, crandn, instance, refined_grid_min
from mimorelay.af import (AfEffectiveChannel, af_beamformers, af_downlink_balance,
                          af_downlink_feasibility_gp, af_downlink_minpower_gp,
                          af_effective_channel, af_feasibility, af_minimize, af_precoders,
                          af_uplink_balance, af_uplink_minpower, af_uplink_sinr, sigma_hat_sq)
from mimorelay.channel import ChannelRealization, Scenario, verify_sinr
from mimorelay.errors import InfeasibleAllocation
from mimorelay.report import EPSILON, meets_targets


def _eff(s, ch, g_r=1.0, q=None):
    q = np.full(s.k, s.p_b_max / s.k) if q is None else q
    W = af_beamformers(ch, g_r, q, sigma_hat_sq(s, ch, g_r))
    return W, af_effective_channel(s, ch, W, g_r)


def _downlink_sinr(s, eff, p, g_r):
    gain = eff.gain
    own = g_r * p * np.diag(gain)
    interference = g_r * (gain @ p) - own
    return own / (interference + g_r * s.sigma_r_sq * eff.g_norm_sq + s.sigma_k_sq)


class TestBeamformers:
    def test_single_user_matched_filter(self):
        s, ch = instance(1, 0.0, 3, m_b=3, m_r=2)
        W = af_beamformers(ch, 0.7, [2.0], sigma_hat_sq(s, ch, 0.7))
        assert angle(W[:, 0], ch.H.conj().T @ ch.G[:, 0]) < 1e-10
        assert np.linalg.norm(W[:, 0]) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_users(self):
        # g_k^H H is the k-th unit row: users see orthogonal effective channels
        ch = ChannelRealization(np.eye(2, dtype=complex), np.eye(2, dtype=complex))
        s = Scenario(2, 2, 2, gamma=1.0)
        W = af_beamformers(ch, 1.0, [1.0, 3.0], sigma_hat_sq(s, ch, 1.0))
        for k in range(2):
            assert angle(W[:, k], np.eye(2)[:, k]) < 1e-8

    def test_matches_dense_generalized_eigensolve(self):
        s, ch = instance(3, 3.0, 11, m_b=4, m_r=3)
        g_r, q = 0.8, np.array([1.0, 2.5, 0.4])
        sh = sigma_hat_sq(s, ch, g_r)
        W = af_beamformers(ch, g_r, q, sh)
        Ht = np.sqrt(g_r) * ch.H.conj().T @ ch.G
        for k in range(3):
            Rs = q[k] / sh[k] * np.outer(Ht[:, k], Ht[:, k].conj())
            Rn = np.eye(4, dtype=complex)
            for i in range(3):
                if i != k:
                    Rn += q[i] / sh[i] * np.outer(Ht[:, i], Ht[:, i].conj())
            w, X = np.linalg.eig(np.linalg.solve(Rn, Rs))
            assert angle(W[:, k], X[:, int(np.argmax(w.real))]) < 1e-6
        np.testing.assert_allclose(np.linalg.norm(W, axis=0), 1.0, atol=1e-9)


class TestUplinkBalance:
    def test_single_user_closed_form(self):
        s, ch = instance(1, 3.0, 2, m_b=2, m_r=2)
        g_r = 0.6
        _, eff = _eff(s, ch, g_r)
        level, q = af_uplink_balance(eff, g_r, s.gamma, s.p_b_max)
        expected = s.p_b_max * g_r * eff.gain[0, 0] / (s.gamma[0] * eff.sigma_hat_sq[0])
        assert level == pytest.approx(expected, rel=1e-10)
        np.testing.assert_allclose(q, [s.p_b_max], rtol=1e-12)

    def test_symmetric_users_split_evenly(self):
        h = np.array([[1.0, 0.3], [0.3, 1.0]], dtype=complex)
        eff = AfEffectiveChannel(h, np.eye(2), np.array([0.5, 0.5]), np.ones(2))
        level, q = af_uplink_balance(eff, 1.0, [2.0, 2.0], 6.0)
        np.testing.assert_allclose(q, [3.0, 3.0], rtol=1e-10)

    def test_matches_bisection(self):
        s, ch = instance(2, 3.0, 5)
        g_r = 1.3
        _, eff = _eff(s, ch, g_r)
        level, q = af_uplink_balance(eff, g_r, s.gamma, s.p_b_max)
        D = s.gamma / (g_r * np.diag(eff.gain))
        Psi = g_r * (eff.gain - np.diag(np.diag(eff.gain)))
        Z, b = D[:, None] * Psi.T, D * eff.sigma_hat_sq

        def total(C):
            # q / C = Z q + b
            return np.linalg.solve(np.eye(2) / C - Z, b).sum()

        lo, hi = 1e-12, 1.0
        while total(hi) < s.p_b_max and 1 / hi > max(abs(np.linalg.eigvals(Z))):
            hi *= 2
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if total(mid) < s.p_b_max else (lo, mid)
        assert level == pytest.approx(0.5 * (lo + hi), rel=1e-9)

    def test_levels_equal_and_budget_spent(self):
        for seed in range(10):
            s, ch = instance(3, 2.0, seed)
            g_r = 0.9
            _, eff = _eff(s, ch, g_r)
            level, q = af_uplink_balance(eff, g_r, s.gamma, s.p_b_max)
            np.testing.assert_allclose(af_uplink_sinr(eff, g_r, q) / s.gamma, level, rtol=1e-8)
            assert q.sum() == pytest.approx(s.p_b_max, rel=1e-8)


class TestDuality:
    @pytest.mark.parametrize('seed', range(5))
    def test_balanced_levels_agree_with_equal_noise(self, seed):
        s, ch = instance(3, 3.0, seed)
        g_r = 0.7
        _, eff = _eff(s, ch, g_r)
        # normalize every user's channel by its noise standard deviation
        scale = np.sqrt(eff.sigma_hat_sq)[:, None]
        norm = AfEffectiveChannel(eff.h_hat / scale, eff.H_r, np.ones(s.k), eff.g_norm_sq)
        up, _ = af_uplink_balance(norm, g_r, s.gamma, s.p_b_max)
        down, p = af_downlink_balance(norm, g_r, s.gamma, s.p_b_max)
        assert down == pytest.approx(up, rel=1e-6)
        gain = norm.gain
        own = g_r * p * np.diag(gain)
        sinr = own / (g_r * (gain @ p) - own + 1.0)
        np.testing.assert_allclose(sinr / s.gamma, down, rtol=1e-8)


class TestUplinkMinpower:
    def test_single_user(self):
        s, ch = instance(1, 3.0, 4, m_b=2, m_r=2)
        _, eff = _eff(s, ch, 0.5)
        q = af_uplink_minpower(eff, 0.5, s.gamma)
        np.testing.assert_allclose(
            q, s.gamma * eff.sigma_hat_sq / (0.5 * np.diag(eff.gain)), rtol=1e-12)

    def test_decoupled_users(self):
        h = np.diag([1.0 + 1j, 0.5]).astype(complex)
        eff = AfEffectiveChannel(h, np.eye(2), np.array([0.3, 0.9]), np.ones(2))
        gamma = np.array([2.0, 5.0])
        q = af_uplink_minpower(eff, 2.0, gamma)
        np.testing.assert_allclose(q, gamma * eff.sigma_hat_sq / (2.0 * np.abs(np.diag(h)) ** 2))

    def test_matches_fixed_point(self):
        s, ch = instance(3, 0.0, 8)
        g_r = 1.0
        _, eff = _eff(s, ch, g_r)
        q = af_uplink_minpower(eff, g_r, s.gamma)
        D = s.gamma / (g_r * np.diag(eff.gain))
        Psi = g_r * (eff.gain - np.diag(np.diag(eff.gain)))
        x = np.zeros(3)
        for _ in range(20000):
            x_new = D * (Psi.T @ x) + D * eff.sigma_hat_sq
            if np.max(np.abs(x_new - x)) < 1e-15:
                break
            x = x_new
        np.testing.assert_allclose(q, x, rtol=1e-9)
        np.testing.assert_allclose(af_uplink_sinr(eff, g_r, q), s.gamma, rtol=1e-8)

    def test_infeasible_targets(self):
        h = np.array([[1.0, 1.0], [1.0, 1.0]], dtype=complex)
        eff = AfEffectiveChannel(h, np.eye(2), np.ones(2), np.ones(2))
        with pytest.raises(InfeasibleAllocation):
            af_uplink_minpower(eff, 1.0, [2.0, 2.0])


def _k1_grid(s, eff, objective):
    """K = 1 power problem on a (log p, log g_r) grid."""
    gain = eff.gain[0, 0]
    col = float(np.sum(np.abs(eff.H_r[:, 0]) ** 2))
    gamma, sr, sk, gn = s.gamma[0], s.sigma_r_sq, s.sigma_k_sq[0], eff.g_norm_sq[0]

    def inv_sinr(Y):
        p, g = np.exp(Y[:, 0]), np.exp(Y[:, 1])
        return gamma * (g * sr * gn + sk) / (p * g * gain)

    def powers(Y):
        p, g = np.exp(Y[:, 0]), np.exp(Y[:, 1])
        return p, g * (p * col + s.m_r * sr)

    def caps(Y):
        p_b, p_r = powers(Y)
        return (p_b <= s.p_b_max) & (p_r <= s.p_r_max)

    if objective == 't':
        return refined_grid_min(lambda Y: np.log(inv_sinr(Y)), caps, [-12, -12], [6, 6])
    return refined_grid_min(lambda Y: np.log(np.sum(powers(Y), axis=0)),
                            lambda Y: caps(Y) & (inv_sinr(Y) <= 1), [-12, -12], [6, 6])


class TestDownlinkGps:
    def test_vanishing_targets(self):
        s, ch = instance(2, -60.0, 1)
        _, eff = _eff(s, ch)
        t, p, g_r, status = af_downlink_feasibility_gp(s, eff)
        assert status == 'optimal' and t < 1e-3

    def test_single_user_feasibility_matches_grid(self):
        s, ch = instance(1, 10.0, 6, m_b=2, m_r=2)
        _, eff = _eff(s, ch)
        t, _, _, _ = af_downlink_feasibility_gp(s, eff)
        best, _ = _k1_grid(s, eff, 't')
        assert t == pytest.approx(np.exp(best), rel=1e-3)
        assert t <= np.exp(best) * (1 + 1e-6)

    def test_feasibility_scale_invariance(self):
        s, ch = instance(2, 6.0, 2)
        _, eff = _eff(s, ch)
        t, _, _, _ = af_downlink_feasibility_gp(s, eff)
        c = 7.5
        s2 = replace(s, sigma_r_sq=c * s.sigma_r_sq, sigma_k_sq=c * s.sigma_k_sq,
                     p_b_max=c * s.p_b_max, p_r_max=c * s.p_r_max)
        t2, _, _, _ = af_downlink_feasibility_gp(s2, eff)
        assert t2 == pytest.approx(t, rel=1e-6)

    def test_single_user_minpower_matches_grid(self):
        s, ch = instance(1, 3.0, 6, m_b=2, m_r=2)
        _, eff = _eff(s, ch)
        total, _, _, status = af_downlink_minpower_gp(s, eff)
        best, _ = _k1_grid(s, eff, 'power')
        assert status == 'optimal'
        assert total == pytest.approx(np.exp(best), rel=1e-3)

    def test_constraints_active_at_optimum(self):
        s, ch = instance(2, 3.0, 3)
        _, eff = _eff(s, ch)
        total, p, g_r, status = af_downlink_minpower_gp(s, eff)
        assert status == 'optimal'
        np.testing.assert_allclose(_downlink_sinr(s, eff, p, g_r) / s.gamma, 1.0, rtol=1e-4)

    def test_doubling_targets_never_cheaper(self):
        s, ch = instance(2, 0.0, 3)
        _, eff = _eff(s, ch)
        a, _, _, _ = af_downlink_minpower_gp(s, eff)
        b, _, _, _ = af_downlink_minpower_gp(replace(s, gamma=2 * s.gamma), eff)
        assert b >= a * (1 - 1e-8)

    def test_caps_at_unconstrained_optimum(self):
        s, ch = instance(2, 0.0, 4)
        _, eff = _eff(s, ch)
        loose = replace(s, p_b_max=1e6, p_r_max=1e6)
        total, p, g_r, _ = af_downlink_minpower_gp(loose, eff)
        p_b = p.sum()
        p_r = g_r * (np.sum(p * np.sum(np.abs(eff.H_r) ** 2, axis=0)) + s.m_r * s.sigma_r_sq)
        tight, _, _, status = af_downlink_minpower_gp(replace(s, p_b_max=p_b, p_r_max=p_r), eff)
        assert status == 'optimal'
        assert tight == pytest.approx(total, rel=1e-6)


class TestFeasibilityDriver:
    def test_vanishing_targets_one_iteration(self):
        s, ch = instance(2, -60.0, 0)
        r = af_feasibility(s, ch)
        assert r.feasible and r.outer_iterations == 1 and r.t <= 1

    def test_unreachable_targets(self):
        s, ch = instance(2, 90.0, 0, p_b_max=1.0, p_r_max=1.0)
        r = af_feasibility(s, ch)
        assert r.status == 'infeasible' and r.t > 1

    @pytest.mark.parametrize('seed', range(6))
    def test_t_non_increasing(self, seed):
        s, ch = instance(3, 8.0, seed)
        r = af_feasibility(s, ch)
        assert np.all(np.diff(r.t_history) <= 1e-9)
        assert r.t == r.t_history[-1]

    @pytest.mark.parametrize('seed', range(6))
    def test_reports_are_verified(self, seed):
        s, ch = instance(2, 3.0, seed)
        r = af_feasibility(s, ch)
        if not r.feasible:
            pytest.skip('draw infeasible at this target')
        F, Q = af_precoders(r.design, s.m_r)
        sinr, p_b, p_r = verify_sinr(s, ch, F, Q)
        np.testing.assert_allclose(sinr, r.achieved_sinr)
        assert meets_targets(sinr, s.gamma, p_b, p_r, s.p_b_max, s.p_r_max)
        np.testing.assert_allclose(np.linalg.norm(r.design.W, axis=0), 1.0, atol=1e-9)
        assert np.all(r.design.p > 0) and np.all(r.design.q > 0) and r.design.g_r > 0

    @pytest.mark.parametrize('seed', [0, 6])
    def test_matches_multistart_search(self, seed):
        s, ch = instance(2, 15.0, seed)
        r = af_feasibility(s, ch)
        rng = np.random.default_rng(seed)

        def t_of(W):
            W = W / np.linalg.norm(W, axis=0)
            t, _, _, status = af_downlink_feasibility_gp(s, af_effective_channel(s, ch, W, 1.0))
            return t if status == 'optimal' else np.inf

        # local random search over W from matched-filter, zero-forcing and random starts
        Heq = ch.G.conj().T @ ch.H
        starts = [Heq.conj().T, np.linalg.pinv(Heq)] + [crandn(rng, 2, 2) for _ in range(10)]
        best = np.inf
        for W0 in starts:
            val, W_best, step = t_of(W0), W0, 0.3
            for it in range(60):
                W = W_best + step * np.linalg.norm(W_best) * crandn(rng, 2, 2) / 2
                v = t_of(W)
                if v < val:
                    val, W_best = v, W
                elif it % 10 == 9:
                    step /= 2
            best = min(best, val)
        assert r.t == pytest.approx(best, rel=0.02)


class TestMinimizeDriver:
    def test_single_user_matches_grid(self):
        s, ch = instance(1, 3.0, 6, m_b=2, m_r=2)
        feas = af_feasibility(s, ch)
        r = af_minimize(s, ch, feas)
        _, eff = _eff(s, ch)
        best, _ = _k1_grid(s, eff, 'power')
        assert r.feasible
        assert r.sum_power == pytest.approx(np.exp(best), rel=1e-3)

    def test_fixed_point_warm_start(self):
        s, ch = instance(2, 3.0, 2)
        feas = af_feasibility(s, ch)
        first = af_minimize(s, ch, feas)
        warm = replace(first.design, g_r=feas.design.g_r)
        again = af_minimize(s, ch, warm)
        assert again.inner_iterations <= 2
        # the inner loop only converges to the shared threshold
        assert again.sum_power == pytest.approx(first.sum_power, abs=EPSILON)

    @pytest.mark.parametrize('seed', range(8))
    def test_meets_targets_within_caps(self, seed):
        s, ch = instance(2, 3.0, seed)
        feas = af_feasibility(s, ch)
        if not feas.feasible:
            pytest.skip('draw infeasible at this target')
        r = af_minimize(s, ch, feas)
        assert r.feasible
        assert meets_targets(r.achieved_sinr, s.gamma, r.p_b, r.p_r, s.p_b_max, s.p_r_max)
        assert r.sum_power <= s.p_b_max + s.p_r_max + 1e-8
        assert r.sum_power <= feas.sum_power * (1 + 1e-6)


class TestPhaseInvariance:
    @pytest.mark.parametrize('seed', range(3))
    def test_user_phase_rotation(self, seed):
        s, ch = instance(2, 3.0, seed)
        G = ch.G * np.exp(1j * np.array([0.7, -2.1]))[None, :]
        a = af_feasibility(s, ch)
        b = af_feasibility(s, ChannelRealization(ch.H, G, ch.seed))
        assert b.t == pytest.approx(a.t, rel=1e-9)
        assert b.sum_power == pytest.approx(a.sum_power, rel=1e-9)
        np.testing.assert_allclose(b.achieved_sinr, a.achieved_sinr, rtol=1e-9)
        if a.feasible:
            ma, mb = af_minimize(s, ch, a), af_minimize(s, ChannelRealization(ch.H, G), b)
            assert mb.sum_power == pytest.approx(ma.sum_power, rel=1e-9)
            np.testing.assert_allclose(mb.achieved_sinr, ma.achieved_sinr, rtol=1e-9)
