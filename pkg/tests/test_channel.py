import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import crandn
from mimorelay.channel import (MultihopScenario, Scenario, db_to_linear, generate,
                               generate_multihop, linear_to_db, path_loss, trial_seed,
                               verify_sinr)
from mimorelay.errors import InvalidInputError


class TestPathLoss:
    def test_reference_distance(self):
        assert path_loss(1.0, 1.0, 4.0) == 1.0

    def test_half_distance(self):
        assert path_loss(0.5, 1.0, 4.0) == pytest.approx(1 / 16)

    def test_power_law(self):
        assert path_loss(2.0, 1.0, 2.0) == pytest.approx(4.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidInputError):
            path_loss(0.0)


class TestScenario:
    def test_broadcasts_scalars(self):
        s = Scenario(2, 2, 3, gamma=2.0, d_rs_ms=0.5)
        assert s.gamma.shape == (3,) and s.d_rs_ms.shape == (3,) and s.sigma_k_sq.shape == (3,)

    @pytest.mark.parametrize('kw', [dict(gamma=0.0), dict(gamma=[1.0, 2.0, 3.0]),
                                    dict(p_b_max=-1.0), dict(d_bs_rs=0.0),
                                    dict(sigma_k_sq=np.nan)])
    def test_rejects_bad_fields(self, kw):
        args = dict(m_b=2, m_r=2, k=2, gamma=1.0)
        args.update(kw)
        with pytest.raises(InvalidInputError):
            Scenario(**args)

    def test_db_round_trip(self):
        x = np.array([-3.0, 0.0, 10.0])
        np.testing.assert_allclose(linear_to_db(db_to_linear(x)), x)


class TestGenerate:
    def test_deterministic(self):
        s = Scenario(3, 4, 2, gamma=1.0)
        a, b = generate(s, 17), generate(s, 17)
        assert np.array_equal(a.H, b.H) and np.array_equal(a.G, b.G)
        assert not np.array_equal(a.H, generate(s, 18).H)

    def test_shapes(self):
        ch = generate(Scenario(3, 4, 2, gamma=1.0), 0)
        assert ch.H.shape == (4, 3) and ch.G.shape == (4, 2) and len(ch.g) == 2

    def test_unit_distance_moment(self):
        s = Scenario(1, 1000, 100, gamma=1.0, d_rs_ms=1.0)
        x = np.abs(generate(s, 3).G.ravel()) ** 2
        # |CN(0,1)|^2 is Exp(1): the sample mean has standard error 1/sqrt(n)
        assert abs(x.mean() - 1.0) < 3 / np.sqrt(x.size)

    def test_doubling_distance(self):
        near = Scenario(1, 1000, 100, gamma=1.0, d_rs_ms=0.5)
        far = Scenario(1, 1000, 100, gamma=1.0, d_rs_ms=1.0)
        ratio = np.mean(np.abs(generate(far, 1).G) ** 2) / np.mean(np.abs(generate(near, 2).G) ** 2)
        assert ratio == pytest.approx(1 / 16, rel=0.05)

    def test_first_hop_variance(self):
        s = Scenario(100, 1000, 1, gamma=1.0, d_bs_rs=0.5)
        assert np.mean(np.abs(generate(s, 4).H) ** 2) == pytest.approx(16.0, rel=0.03)

    def test_trial_seed_is_xor(self):
        assert trial_seed(10, 3) == 9
        assert len({trial_seed(5, t) for t in range(100)}) == 100


class TestMultihop:
    def test_uniform_spacing(self):
        ms = MultihopScenario.uniform(Scenario(2, 2, 2, gamma=1.0), 3, 2.0)
        np.testing.assert_allclose(ms.hop_distances, [0.5, 0.5, 0.5])
        np.testing.assert_allclose(ms.base.d_rs_ms, [0.5, 0.5])
        np.testing.assert_allclose(ms.station_caps, [10, 10, 10, 10])

    def test_shapes(self):
        ms = MultihopScenario.uniform(Scenario(3, 4, 2, gamma=1.0), 2)
        mr = generate_multihop(ms, 0)
        assert [h.shape for h in mr.hop_channels] == [(4, 3), (4, 4)]
        assert mr.G.shape == (4, 2)

    def test_no_relay_broadcast(self):
        ms = MultihopScenario.uniform(Scenario(3, 4, 2, gamma=1.0), 0)
        mr = generate_multihop(ms, 0)
        assert mr.hop_channels == [] and mr.G.shape == (3, 2)

    def test_single_relay_matches_two_hop_draw(self):
        s = Scenario(3, 4, 2, gamma=1.0)
        ms = MultihopScenario(s, 1, [s.d_bs_rs], [s.p_r_max])
        a, b = generate(s, 9), generate_multihop(ms, 9)
        assert np.array_equal(a.H, b.hop_channels[0]) and np.array_equal(a.G, b.G)


def _brute_force_sinr(s, ch, F, Q):
    """Term-by-term expansion of the received signal, interference and noise."""
    K = s.k
    out = np.empty(K)
    for k in range(K):
        g = ch.G[:, k]
        signal = abs(g.conj() @ Q @ ch.H @ F[:, k]) ** 2
        interference = sum(abs(g.conj() @ Q @ ch.H @ F[:, i]) ** 2 for i in range(K) if i != k)
        relay_noise = s.sigma_r_sq * sum(abs(g.conj() @ Q[:, j]) ** 2 for j in range(Q.shape[1]))
        out[k] = signal / (interference + relay_noise + s.sigma_k_sq[k])
    return out


class TestVerifySinr:
    def test_zero_signal(self, rng):
        s = Scenario(2, 3, 2, gamma=1.0, sigma_r_sq=0.7)
        ch = generate(s, 0)
        Q = crandn(rng, 3, 3)
        sinr, p_b, p_r = verify_sinr(s, ch, np.zeros((2, 2)), Q)
        assert np.all(sinr == 0) and p_b == 0
        assert p_r == pytest.approx(0.7 * np.real(np.trace(Q @ Q.conj().T)))

    def test_single_user_closed_form(self, rng):
        s = Scenario(3, 3, 1, gamma=1.0, sigma_r_sq=0.4, sigma_k_sq=0.9)
        ch = generate(s, 5)
        f = crandn(rng, 3, 1)
        p = float(np.sum(np.abs(f) ** 2))
        sinr, p_b, _ = verify_sinr(s, ch, f, np.eye(3))
        g = ch.G[:, 0]
        u = f[:, 0] / np.sqrt(p)
        expected = abs(g.conj() @ ch.H @ u) ** 2 * p / (0.4 * np.linalg.norm(g) ** 2 + 0.9)
        assert sinr[0] == pytest.approx(expected, rel=1e-12)
        assert p_b == pytest.approx(p)

    def test_matches_brute_force(self, rng):
        s = Scenario(3, 4, 2, gamma=1.0, sigma_k_sq=[0.5, 1.5])
        ch = generate(s, 2)
        F, Q = crandn(rng, 3, 2), crandn(rng, 4, 4)
        sinr, _, p_r = verify_sinr(s, ch, F, Q)
        np.testing.assert_allclose(sinr, _brute_force_sinr(s, ch, F, Q), rtol=1e-12)
        C = Q @ (ch.H @ F @ F.conj().T @ ch.H.conj().T + s.sigma_r_sq * np.eye(4)) @ Q.conj().T
        assert p_r == pytest.approx(np.real(np.trace(C)), rel=1e-12)

    def test_dimension_mismatch(self):
        s = Scenario(2, 2, 2, gamma=1.0)
        with pytest.raises(InvalidInputError):
            verify_sinr(s, generate(s, 0), np.zeros((3, 2)), np.eye(2))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(0, 2 * np.pi), st.integers(0, 2))
    def test_phase_rotation_invariance(self, seed, phi, col):
        rng = np.random.default_rng(seed)
        s = Scenario(3, 3, 3, gamma=1.0)
        ch = generate(s, seed % 1000)
        F, Q = crandn(rng, 3, 3), crandn(rng, 3, 3)
        F2 = F.copy()
        F2[:, col] *= np.exp(1j * phi)
        a, b = verify_sinr(s, ch, F, Q), verify_sinr(s, ch, F2, Q)
        np.testing.assert_allclose(a[0], b[0], rtol=1e-10)
        assert a[1] == pytest.approx(b[1], rel=1e-12) and a[2] == pytest.approx(b[2], rel=1e-12)

    def test_af_relay_power_expression(self, rng):
        s = Scenario(3, 3, 3, gamma=1.0, sigma_r_sq=0.8)
        ch = generate(s, 1)
        W = crandn(rng, 3, 3)
        W /= np.linalg.norm(W, axis=0)
        p, g_r = rng.uniform(0.1, 2, 3), 0.37
        _, _, p_r = verify_sinr(s, ch, W * np.sqrt(p), np.sqrt(g_r) * np.eye(3))
        H_r = ch.H @ W
        expected = g_r * np.sum(p * np.sum(np.abs(H_r) ** 2, axis=0)) + s.k * g_r * s.sigma_r_sq
        assert p_r == pytest.approx(expected, abs=1e-10)
