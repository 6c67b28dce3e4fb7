"""Amplify-and-forward relaying with downlink-uplink duality at the BS.

The RS applies ``Q = sqrt(g_r) I``, so the two hops collapse into an
equivalent broadcast channel ``g_k^H H`` with user noise
``g_r sigma_r^2 ||g_k||^2 + sigma_k^2``. BS beamformers come from the
virtual uplink, powers ``(p, g_r)`` from a geometric program.
"""

from dataclasses import dataclass

import numpy as np

from . import gp
from .channel import verify_sinr
from .errors import InfeasibleAllocation, RelayError
from .numerics import balance_eigensystem, dominant_gen_eigvec, solve_linear, spectral_radius
from .report import (EPSILON, FEASIBLE, INFEASIBLE, MAX_INNER, MAX_ITER, MAX_OUTER,
                     SolveReport, meets_targets)

__all__ = ['AfDesign', 'AfEffectiveChannel', 'af_effective_channel', 'af_beamformers',
           'af_uplink_balance', 'af_downlink_balance', 'af_uplink_sinr',
           'af_downlink_feasibility_gp', 'af_downlink_minpower_gp',
           'af_uplink_minpower', 'af_feasibility', 'af_minimize', 'af_precoders']

DEGENERATE_GAIN = 1e-12


@dataclass
class AfDesign:
    W: np.ndarray
    p: np.ndarray
    g_r: float
    q: np.ndarray


@dataclass
class AfEffectiveChannel:
    """Scalar gains seen through fixed beamformers ``W``.

    ``h_hat[x, y] = g_x^H H w_y``; ``H_r = H W``.
    """

    h_hat: np.ndarray
    H_r: np.ndarray
    sigma_hat_sq: np.ndarray
    g_norm_sq: np.ndarray

    @property
    def gain(self):
        return np.abs(self.h_hat) ** 2


def sigma_hat_sq(s, ch, g_r):
    return g_r * s.sigma_r_sq * np.sum(np.abs(ch.G) ** 2, axis=0) + s.sigma_k_sq


def af_effective_channel(s, ch, W, g_r):
    H_r = ch.H @ W
    return AfEffectiveChannel(ch.G.conj().T @ H_r, H_r, sigma_hat_sq(s, ch, g_r),
                              np.sum(np.abs(ch.G) ** 2, axis=0))


def af_precoders(design, m_r):
    """``F = W diag(p)^{1/2}`` and ``Q = sqrt(g_r) I``."""
    F = design.W * np.sqrt(design.p)[None, :]
    Q = np.sqrt(design.g_r) * np.eye(m_r)
    return F, Q


def af_beamformers(ch, g_r, q, sigma_hat_sq):
    """Unit-norm BS beamformers from the noise-normalized virtual uplink.

    Column ``k`` maximizes ``w^H R_s w / w^H R_n w`` with
    ``R_s = (q_k / sh_k) h_k h_k^H`` and
    ``R_n = sum_{i != k} (q_i / sh_i) h_i h_i^H + I`` where
    ``h_k = sqrt(g_r) H^H g_k`` and ``sh`` the effective noise variances.
    """
    Ht = np.sqrt(g_r) * (ch.H.conj().T @ ch.G)
    weights = np.asarray(q, dtype=float) / np.asarray(sigma_hat_sq, dtype=float)
    m_b, K = Ht.shape
    full = (Ht * weights) @ Ht.conj().T + np.eye(m_b)
    W = np.empty((m_b, K), dtype=complex)
    for k in range(K):
        h = Ht[:, k]
        Rn = full - weights[k] * np.outer(h, h.conj())
        W[:, k] = dominant_gen_eigvec(h, weights[k], Rn).vector
    return W


def _coupling(eff, g_r, gamma):
    gain = eff.gain
    direct = np.diag(gain).copy()
    if np.any(direct < DEGENERATE_GAIN ** 2):
        raise InfeasibleAllocation('a user is orthogonal to its own beam')
    D = np.asarray(gamma, dtype=float) / (g_r * direct)
    # interference also passes through the RS gain, as in the uplink SINR
    Psi = g_r * gain
    np.fill_diagonal(Psi, 0.0)
    return D, Psi


def af_uplink_balance(eff, g_r, gamma, p_b_max):
    """Max-min balanced virtual uplink powers under ``sum(q) <= p_b_max``.

    Returns
    -------
    level : float
        Balanced level ``C^U``, common to all ``SINR_k^U / gamma_k``.
    q : (K,) ndarray
    """
    D, Psi = _coupling(eff, g_r, gamma)
    return balance_eigensystem(D[:, None] * Psi.T, D * eff.sigma_hat_sq, p_b_max)


def af_downlink_balance(eff, g_r, gamma, p_b_max):
    """Downlink counterpart of :func:`af_uplink_balance` (``Psi`` in place of ``Psi^T``).

    Returns the balanced level and BS powers ``p`` with ``sum(p) = p_b_max``.
    """
    D, Psi = _coupling(eff, g_r, gamma)
    return balance_eigensystem(D[:, None] * Psi, D * eff.sigma_hat_sq, p_b_max)


def af_uplink_sinr(eff, g_r, q):
    """Virtual uplink SINRs with user-specific noise ``sigma_hat_sq``."""
    gain = eff.gain
    own = q * g_r * np.diag(gain)
    total = g_r * (q @ gain)
    return own / (total - own + eff.sigma_hat_sq)


def af_uplink_minpower(eff, g_r, gamma):
    """Minimum virtual uplink powers meeting every target with equality.

    Raises
    ------
    InfeasibleAllocation
        When the spectral radius of the coupling matrix is not below one.
    """
    D, Psi = _coupling(eff, g_r, gamma)
    Z = D[:, None] * Psi.T
    rho = spectral_radius(Z)
    if rho >= 1.0:
        raise InfeasibleAllocation(f'spectral radius {rho:.4g} >= 1')
    q = solve_linear(np.eye(len(D)) - Z, D * eff.sigma_hat_sq)
    if np.any(q <= 0):
        raise InfeasibleAllocation('uplink power vector is not positive')
    return q


def _downlink_model(s, eff):
    K = s.k
    model = gp.GpModel()
    p = [model.variable(f'p{k + 1}') for k in range(K)]
    g = model.variable('g_r')
    gain = eff.gain
    inv_sinr = []
    for k in range(K):
        scale = s.gamma[k] / gain[k, k]
        expr = scale * s.sigma_k_sq[k] * g ** -1 * p[k] ** -1
        expr = expr + scale * s.sigma_r_sq * eff.g_norm_sq[k] * p[k] ** -1
        for i in range(K):
            if i != k and gain[k, i] > 0:
                expr = expr + scale * gain[k, i] * p[i] / p[k]
        inv_sinr.append(expr)
    col = np.sum(np.abs(eff.H_r) ** 2, axis=0)
    bs_power = gp.as_posynomial(p[0])
    for k in range(1, K):
        bs_power = bs_power + p[k]
    rs_power = s.m_r * s.sigma_r_sq * g
    for k in range(K):
        if col[k] > 0:
            rs_power = rs_power + col[k] * g * p[k]
    model.add(bs_power, s.p_b_max)
    model.add(rs_power, s.p_r_max)
    return model, p, g, inv_sinr, bs_power, rs_power


def _unpack(sol, K):
    return np.asarray(sol.variables[:K]), float(sol.variables[K])


def af_downlink_feasibility_gp(s, eff):
    """Minimize the worst-case ``gamma_k / SINR_k`` over ``(p, g_r)`` for fixed ``W``.

    Returns
    -------
    t : float
    p : (K,) ndarray
    g_r : float
    status : str
        GP solver status.
    """
    model, p, g, inv_sinr, _, _ = _downlink_model(s, eff)
    t = model.variable('t')
    for expr in inv_sinr:
        model.add(expr, t)
    model.minimize(t)
    sol = model.solve()
    p_opt, g_opt = _unpack(sol, s.k)
    return sol.objective_value, p_opt, g_opt, sol.status


def af_downlink_minpower_gp(s, eff):
    """Minimize ``P_b + P_r`` over ``(p, g_r)`` subject to every SINR target.

    Returns
    -------
    sum_power : float
    p : (K,) ndarray
    g_r : float
    status : str
    """
    model, p, g, inv_sinr, bs_power, rs_power = _downlink_model(s, eff)
    for expr in inv_sinr:
        model.add(expr)
    model.minimize(bs_power + rs_power)
    sol = model.solve()
    p_opt, g_opt = _unpack(sol, s.k)
    return sol.objective_value, p_opt, g_opt, sol.status


def _finish(s, ch, design, status, t, level, outer, inner, history, message=''):
    F, Q = af_precoders(design, s.m_r)
    sinr, p_b, p_r = verify_sinr(s, ch, F, Q)
    return SolveReport(status, t, level, p_b + p_r, p_b, p_r, outer, inner, sinr,
                       design, history, message)


def af_feasibility(s, ch, eps=EPSILON, max_outer=MAX_OUTER, max_inner=MAX_INNER):
    """Feasibility test: alternate beamformers, uplink balancing and the downlink GP.

    The outer loop stops when ``t <= 1`` or ``t`` changes by less than
    ``eps``. An outer iterate that would raise ``t`` is discarded and the
    loop ends on the previous design, so ``t_history`` is non-increasing.
    """
    K = s.k
    q = np.full(K, s.p_b_max / K)
    g_r = 1.0
    best = None
    history = []
    inner_total = 0
    message = ''
    for _ in range(max_outer):
        try:
            prev_level = None
            for _ in range(max_inner):
                inner_total += 1
                W = af_beamformers(ch, g_r, q, sigma_hat_sq(s, ch, g_r))
                eff = af_effective_channel(s, ch, W, g_r)
                level, q = af_uplink_balance(eff, g_r, s.gamma, s.p_b_max)
                if prev_level is not None and abs(level - prev_level) < eps:
                    break
                prev_level = level
            t, p, g_new, gp_status = af_downlink_feasibility_gp(s, eff)
        except RelayError as exc:
            message = str(exc)
            break
        if gp_status != 'optimal' or (history and t > history[-1]):
            break
        g_r = g_new
        best = (AfDesign(W, p, g_r, q.copy()), level)
        history.append(t)
        if t <= 1 or (len(history) > 1 and history[-2] - t < eps):
            break
    else:
        if best is not None and history[-1] > 1:
            design, level = best
            return _finish(s, ch, design, MAX_ITER, history[-1], level, len(history),
                           inner_total, history)
    if best is None:
        return SolveReport(INFEASIBLE, np.inf, 0.0, np.nan, np.nan, np.nan, 0, inner_total,
                           np.zeros(K), None, history, message or 'downlink GP failed')
    design, level = best
    status = FEASIBLE if history[-1] <= 1 else INFEASIBLE
    return _finish(s, ch, design, status, history[-1], level, len(history), inner_total,
                   history, message)


def af_minimize(s, ch, warm, eps=EPSILON, max_inner=MAX_INNER):
    """Sum-power minimization starting from a passed feasibility test.

    ``warm`` is the :class:`AfDesign` (or the feasibility :class:`SolveReport`).
    ``g_r`` stays frozen during the beamformer/uplink-power inner loop and is
    re-optimized once by the final GP. If the new beamformers make the GP
    fail, the warm-start beamformers are used instead.
    """
    if isinstance(warm, SolveReport):
        warm = warm.design
    g_r = warm.g_r
    q = warm.q.copy()
    W_good = warm.W
    inner = 0
    prev_sum = None
    sh = sigma_hat_sq(s, ch, g_r)
    for _ in range(max_inner):
        inner += 1
        try:
            W = af_beamformers(ch, g_r, q, sh)
            q = af_uplink_minpower(af_effective_channel(s, ch, W, g_r), g_r, s.gamma)
        except RelayError:
            break
        W_good = W
        if prev_sum is not None and abs(q.sum() - prev_sum) < eps:
            break
        prev_sum = q.sum()

    candidates = [W_good] if W_good is warm.W else [W_good, warm.W]
    for W in candidates:
        eff = af_effective_channel(s, ch, W, g_r)
        total, p, g_new, gp_status = af_downlink_minpower_gp(s, eff)
        if gp_status != 'optimal':
            continue
        design = AfDesign(W, p, g_new, q)
        report = _finish(s, ch, design, FEASIBLE, total, np.nan, 1, inner, [total])
        if meets_targets(report.achieved_sinr, s.gamma, report.p_b, report.p_r,
                         s.p_b_max, s.p_r_max):
            return report
    return SolveReport(INFEASIBLE, np.inf, np.nan, np.nan, np.nan, np.nan, 1, inner,
                       np.zeros(s.k), None, [], 'power minimization GP infeasible')
