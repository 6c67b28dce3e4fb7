"""SVD-based relaying with downlink-uplink duality at the RS.

The BS transmits on the ``K`` strongest right singular vectors of ``H``;
the RS receives along the matching left singular vectors, normalizes each
stream to unit power and re-transmits it with beamformer ``a_k`` and power
``p_r[k]``. Stream ``pairing[k]`` of the first hop is delivered to user
``k``.
"""

from dataclasses import dataclass, field
from itertools import permutations, product

import numpy as np

from . import gp
from .channel import verify_sinr
from .errors import InfeasibleAllocation, InvalidInputError, RelayError, UnsupportedInstance
from .numerics import (balance_eigensystem, dominant_gen_eigvec, solve_linear,
                       spectral_radius, svd)
from .report import (EPSILON, FEASIBLE, INFEASIBLE, MAX_INNER, MAX_ITER, MAX_OUTER,
                     UNSUPPORTED, SolveReport, meets_targets)

__all__ = ['SvdDesign', 'SvdEffectiveChannel', 'HopCinr', 'SvdSubchannels',
           'svd_subchannels', 'svd_effective_channel', 'first_hop_sinr',
           'svd_beamformers', 'svd_uplink_balance', 'svd_uplink_sinr',
           'svd_feasibility_gp', 'svd_minpower_gp', 'svd_uplink_minpower',
           'svd_downlink_minpower', 'sufficient_condition', 'svd_feasibility',
           'svd_minimize', 'svd_precoders', 'pair_subchannels', 'pairing_power',
           'exhaustive_pairing', 'second_hop_cinr', 'multihop_sinr',
           'broadcast_beamformers', 'broadcast_uplink_balance', 'MultihopDesign',
           'chain_power', 'multihop_pairing', 'exhaustive_multihop_pairing',
           'multihop_feasibility_gp', 'multihop_minpower_gp', 'multihop_precoders',
           'verify_multihop', 'multihop_feasibility', 'multihop_minimize']

RANK_TOL = 1e-12
DEGENERATE_GAIN = 1e-12


@dataclass
class SvdSubchannels:
    """The ``K`` first-hop eigen-subchannels, already permuted per user."""

    U: np.ndarray
    V: np.ndarray
    lam: np.ndarray
    pairing: np.ndarray


@dataclass
class SvdDesign:
    U: np.ndarray
    V: np.ndarray
    lam: np.ndarray
    A: np.ndarray
    p: np.ndarray
    p_r: np.ndarray
    q_r: np.ndarray
    eps: np.ndarray
    pairing: np.ndarray


@dataclass
class SvdEffectiveChannel:
    """``g_hat[k, i] = g_k^H a_i``, first-hop SINRs ``alpha`` and separability ``chi``."""

    g_hat: np.ndarray
    alpha: np.ndarray
    chi: np.ndarray = None

    @property
    def gain(self):
        return np.abs(self.g_hat) ** 2


@dataclass
class HopCinr:
    """Per-subchannel channel-to-interference-and-noise ratios (linear)."""

    first_hop: np.ndarray
    second_hop: np.ndarray
    accumulated: list = field(default_factory=list)


def svd_subchannels(s, H, pairing=None):
    """Leading ``K`` singular triplets of ``H``, reordered so user ``k`` gets ``pairing[k]``."""
    K = s.k
    if K > min(H.shape):
        raise UnsupportedInstance(f'K = {K} exceeds min(M_b, M_r) = {min(H.shape)}')
    U, lam, V = svd(H)
    if lam[K - 1] <= RANK_TOL:
        raise UnsupportedInstance('first-hop channel is rank deficient')
    perm = np.arange(K) if pairing is None else np.asarray(pairing, dtype=int)
    if sorted(perm.tolist()) != list(range(K)):
        raise InvalidInputError(f'pairing {perm} is not a permutation of 0..{K - 1}')
    return SvdSubchannels(U[:, perm], V[:, perm], lam[perm], perm)


def first_hop_sinr(p, lam, sigma_r_sq):
    return p * lam ** 2 / sigma_r_sq


def _alpha_ratios(alpha):
    """``alpha / (1 + alpha)`` and ``1 / (1 + alpha)``, exact at ``alpha = inf``."""
    alpha = np.asarray(alpha, dtype=float)
    return 1.0 / (1.0 + 1.0 / alpha), 1.0 / (1.0 + alpha)


def svd_beamformers(G, alpha, q_r, sigma_k_sq):
    """Unit-norm RS transmit beamformers from the virtual uplink at the RS.

    For user ``k``: ``R_s = alpha/(1+alpha) q_k g_k g_k^H`` and
    ``R_n = sum_{i != k} q_i g_i g_i^H + q_k/(1+alpha) g_k g_k^H + sigma_k^2 I``.
    ``alpha = inf`` gives the relay-free broadcast covariances.
    """
    G = np.asarray(G)
    q_r = np.asarray(q_r, dtype=float)
    sig = np.broadcast_to(np.asarray(sigma_k_sq, dtype=float), q_r.shape)
    own, leak = _alpha_ratios(alpha)
    m, K = G.shape
    full = (G * q_r) @ G.conj().T
    A = np.empty((m, K), dtype=complex)
    for k in range(K):
        g = G[:, k]
        Rn = full - (1.0 - leak[k]) * q_r[k] * np.outer(g, g.conj()) + sig[k] * np.eye(m)
        A[:, k] = dominant_gen_eigvec(g, own[k] * q_r[k], Rn).vector
    return A


def _chi(gain):
    direct = np.diag(gain)
    cross = gain.sum(axis=0) - direct
    with np.errstate(divide='ignore'):
        return np.where(cross > 0, direct / np.where(cross > 0, cross, 1.0), np.inf)


def svd_effective_channel(G, A, alpha):
    g_hat = G.conj().T @ A
    return SvdEffectiveChannel(g_hat, np.asarray(alpha, dtype=float), _chi(np.abs(g_hat) ** 2))


def _coupling(eff, gamma, transpose=True):
    gain = eff.gain
    direct = np.diag(gain).copy()
    if np.any(direct < DEGENERATE_GAIN ** 2):
        raise InfeasibleAllocation('a user is orthogonal to its own RS beam')
    own, _ = _alpha_ratios(eff.alpha)
    gamma = np.asarray(gamma, dtype=float)
    D = gamma / (own * direct)
    E = gamma / eff.alpha
    Psi = gain.copy()
    np.fill_diagonal(Psi, 0.0)
    Z = D[:, None] * (Psi.T if transpose else Psi) + np.diag(E)
    return D, Z


def svd_uplink_sinr(eff, q_r, sigma_k_sq):
    gain = eff.gain
    own, leak = _alpha_ratios(eff.alpha)
    direct = q_r * np.diag(gain)
    cross = q_r @ gain - direct
    return own * direct / (cross + leak * direct + sigma_k_sq)


def svd_uplink_balance(eff, gamma, sigma_k_sq, p_r_max):
    """Max-min balanced virtual uplink at the RS under ``sum(q_r) <= p_r_max``.

    Returns
    -------
    level : float
    q_r : (K,) ndarray
    """
    D, Z = _coupling(eff, gamma)
    return balance_eigensystem(Z, D * np.broadcast_to(sigma_k_sq, D.shape), p_r_max)


def svd_uplink_minpower(eff, gamma, sigma_k_sq):
    """``q_r = (I - Z)^{-1} D sigma`` with ``Z = D Psi^T + E``.

    Raises
    ------
    InfeasibleAllocation
        When ``rho(Z) >= 1``.
    """
    return _minpower(eff, gamma, sigma_k_sq, transpose=True)


def svd_downlink_minpower(eff, gamma, sigma_k_sq):
    """Downlink counterpart ``p_r = (I - (D Psi + E))^{-1} D sigma`` for fixed ``A``, ``alpha``."""
    return _minpower(eff, gamma, sigma_k_sq, transpose=False)


def _minpower(eff, gamma, sigma_k_sq, transpose):
    D, Z = _coupling(eff, gamma, transpose)
    rho = spectral_radius(Z)
    if rho >= 1.0:
        raise InfeasibleAllocation(f'spectral radius {rho:.4g} >= 1')
    q = solve_linear(np.eye(len(D)) - Z, D * np.broadcast_to(sigma_k_sq, D.shape))
    if np.any(q <= 0):
        raise InfeasibleAllocation('power vector is not positive')
    return q


def sufficient_condition(eff, gamma):
    """Per-user flags of the diagonal-dominance bound guaranteeing ``rho(Z) < 1``.

    User ``k`` passes when ``gamma_k < alpha_k chi_k / (1 + alpha_k + chi_k)``
    with ``chi_k = |g_kk|^2 / sum_{i != k} |g_ik|^2`` (``inf`` without
    cross-talk, where the bound becomes ``gamma_k < alpha_k``).
    """
    alpha = eff.alpha
    chi = _chi(eff.gain) if eff.chi is None else eff.chi
    with np.errstate(invalid='ignore'):
        bound = np.where(np.isinf(chi), alpha, alpha * chi / (1.0 + alpha + chi))
    return np.asarray(gamma) < bound


def _inverse_sinr_terms(s, eff, lam, p, pr):
    """``gamma_k / SINR_k`` for every user as posynomials in ``(p, p_r)``."""
    K = s.k
    gain = eff.gain
    out = []
    for k in range(K):
        interference = gp.as_posynomial(s.sigma_k_sq[k])
        for i in range(K):
            if i != k and gain[k, i] > 0:
                interference = interference + gain[k, i] * pr[i]
        numerator = (lam[k] ** 2 * p[k] + s.sigma_r_sq) * interference \
            + gain[k, k] * s.sigma_r_sq * pr[k]
        denominator = gain[k, k] * lam[k] ** 2 * p[k] * pr[k]
        out.append(s.gamma[k] * numerator / denominator)
    return out


def _power_model(s, eff, lam):
    model = gp.GpModel()
    p = [model.variable(f'p{k + 1}') for k in range(s.k)]
    pr = [model.variable(f'p_r{k + 1}') for k in range(s.k)]
    bs = gp.Posynomial(p)
    rs = gp.Posynomial(pr)
    model.add(bs, s.p_b_max)
    model.add(rs, s.p_r_max)
    return model, p, pr, bs, rs, _inverse_sinr_terms(s, eff, lam, p, pr)


def svd_feasibility_gp(s, eff, lam):
    """Min-max ``gamma_k / SINR_k`` over BS and RS stream powers for fixed ``A``.

    Returns ``(t, p, p_r, status)``.
    """
    model, p, pr, _, _, inv = _power_model(s, eff, lam)
    t = model.variable('t')
    for expr in inv:
        model.add(expr, t)
    model.minimize(t)
    sol = model.solve()
    K = s.k
    return sol.objective_value, sol.variables[:K].copy(), sol.variables[K:2 * K].copy(), sol.status


def svd_minpower_gp(s, eff, lam):
    """Minimize ``sum(p) + sum(p_r)`` subject to every SINR target. Returns ``(total, p, p_r, status)``."""
    model, p, pr, bs, rs, inv = _power_model(s, eff, lam)
    for expr in inv:
        model.add(expr)
    model.minimize(bs + rs)
    sol = model.solve()
    K = s.k
    return sol.objective_value, sol.variables[:K].copy(), sol.variables[K:2 * K].copy(), sol.status


def svd_precoders(design, sigma_r_sq):
    """``F = V diag(p)^{1/2}`` and ``Q = A diag(p_r)^{1/2} diag(eps) U^H``."""
    F = design.V * np.sqrt(design.p)[None, :]
    Q = (design.A * (np.sqrt(design.p_r) * design.eps)[None, :]) @ design.U.conj().T
    return F, Q


def normalization(p, lam, sigma_r_sq):
    return 1.0 / np.sqrt(lam ** 2 * p + sigma_r_sq)


def _design(sub, A, p, p_r, q_r, sigma_r_sq):
    return SvdDesign(sub.U, sub.V, sub.lam, A, np.asarray(p), np.asarray(p_r),
                     np.asarray(q_r), normalization(p, sub.lam, sigma_r_sq), sub.pairing)


def _finish(s, ch, design, status, t, level, outer, inner, history, message=''):
    F, Q = svd_precoders(design, s.sigma_r_sq)
    sinr, p_b, p_r = verify_sinr(s, ch, F, Q)
    return SolveReport(status, t, level, p_b + p_r, p_b, p_r, outer, inner, sinr,
                       design, history, message)


def second_hop_cinr(G, A, sigma_k_sq):
    """Unit-power second-hop CINR of each user: ``|g_kk|^2 / (sum_{i!=k} |g_ki|^2 + sigma_k^2)``."""
    gain = np.abs(G.conj().T @ A) ** 2
    direct = np.diag(gain)
    return direct / (gain.sum(axis=1) - direct + sigma_k_sq)


def pair_subchannels(cinr):
    """Strong-with-weak pairing of first-hop streams to second-hop users.

    Returns ``perm`` with ``perm[k]`` the first-hop stream delivered to user
    ``k``: the stream with the ``r``-th largest first-hop CINR goes to the user
    with the ``r``-th smallest second-hop CINR. Ties keep index order.
    """
    c1 = np.asarray(cinr.first_hop, dtype=float)
    c2 = np.asarray(cinr.second_hop, dtype=float)
    streams = np.argsort(-c1, kind='stable')
    users = np.argsort(c2, kind='stable')
    perm = np.empty(len(c1), dtype=int)
    perm[users] = streams
    return perm


def pairing_power(first_hop, second_hop, gamma):
    """Minimum total power of coupling-free two-hop streams.

    Stream ``k`` has CINRs ``first_hop[k]``, ``second_hop[k]``; it needs
    ``p q c1 c2 / (1 + p c1 + q c2) >= gamma_k``.

    Returns
    -------
    total : float
    p, q : (K,) ndarray
    status : str
    """
    c1 = np.atleast_1d(np.asarray(first_hop, dtype=float))
    c2 = np.atleast_1d(np.asarray(second_hop, dtype=float))
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), c1.shape)
    model = gp.GpModel()
    p = [model.variable(f'p{k + 1}') for k in range(len(c1))]
    q = [model.variable(f'q{k + 1}') for k in range(len(c1))]
    for k in range(len(c1)):
        model.add(gamma[k] * (1.0 / (c1[k] * c2[k]) * p[k] ** -1 * q[k] ** -1
                              + 1.0 / c2[k] * q[k] ** -1 + 1.0 / c1[k] * p[k] ** -1))
    model.minimize(gp.Posynomial(p + q))
    sol = model.solve()
    K = len(c1)
    return sol.objective_value, sol.variables[:K].copy(), sol.variables[K:2 * K].copy(), sol.status


def exhaustive_pairing(cinr, gamma):
    """Permutation minimizing :func:`pairing_power` over all ``K!`` candidates (``K <= 4``)."""
    c1 = np.asarray(cinr.first_hop, dtype=float)
    c2 = np.asarray(cinr.second_hop, dtype=float)
    if len(c1) > 4:
        raise InvalidInputError('exhaustive pairing is limited to K <= 4')
    best, best_power = None, np.inf
    for perm in permutations(range(len(c1))):
        perm = np.array(perm)
        total, _, _, status = pairing_power(c1[perm], c2, gamma)
        if status == 'optimal' and total < best_power:
            best, best_power = perm, total
    return best if best is not None else np.arange(len(c1))


def multihop_sinr(per_hop_sinrs):
    """End-to-end SINR of cascaded non-regenerative hops with power normalization."""
    values = [float(v) for v in per_hop_sinrs]
    if not values:
        raise InvalidInputError('need at least one hop')
    acc = values[0]
    for v in values[1:]:
        if np.isinf(acc):
            acc = v
        elif not np.isinf(v):
            acc = acc * v / (1.0 + acc + v)
    return acc


def _choose_pairing(s, ch, pairing, sub0):
    """Resolve ``pairing`` ('off', 'heuristic', 'exhaustive' or a permutation)."""
    if pairing is None or (isinstance(pairing, str) and pairing in ('off', 'none')):
        return None
    if not isinstance(pairing, str):
        return np.asarray(pairing, dtype=int)
    alpha = first_hop_sinr(np.full(s.k, s.p_b_max / s.k), sub0.lam, s.sigma_r_sq)
    A = svd_beamformers(ch.G, alpha, np.full(s.k, s.p_r_max / s.k), s.sigma_k_sq)
    cinr = HopCinr(sub0.lam ** 2 / s.sigma_r_sq, second_hop_cinr(ch.G, A, s.sigma_k_sq))
    if pairing == 'heuristic' or pairing == 'on':
        return pair_subchannels(cinr)
    if pairing == 'exhaustive':
        return exhaustive_pairing(cinr, s.gamma)
    raise InvalidInputError(f'unknown pairing mode {pairing!r}')


def _unsupported(s, exc):
    return SolveReport(UNSUPPORTED, np.inf, 0.0, np.nan, np.nan, np.nan, 0, 0,
                       np.zeros(s.k), None, [], str(exc))


def svd_feasibility(s, ch, pairing=None, eps=EPSILON, max_outer=MAX_OUTER, max_inner=MAX_INNER):
    """Feasibility test of the SVD scheme.

    Inner loop: first-hop SINRs, RS beamformers, uplink balancing until the
    balanced level settles. Outer loop: the power-allocation GP until
    ``t <= 1`` or ``t`` settles. Iterates that would raise ``t`` are
    rejected, so ``t_history`` is non-increasing.

    Parameters
    ----------
    pairing : None, str or array_like
        ``None``/``'off'`` keeps stream ``k`` for user ``k``; ``'heuristic'``
        applies strong-with-weak CINR pairing; ``'exhaustive'`` picks the
        pairing with least coupling-free power; an explicit permutation is
        used as given.
    """
    K = s.k
    try:
        sub = svd_subchannels(s, ch.H)
        perm = _choose_pairing(s, ch, pairing, sub)
        if perm is not None:
            sub = svd_subchannels(s, ch.H, perm)
    except UnsupportedInstance as exc:
        return _unsupported(s, exc)

    p = np.full(K, s.p_b_max / K)
    q_r = np.full(K, s.p_r_max / K)
    best = None
    history = []
    inner_total = 0
    message = ''
    for _ in range(max_outer):
        try:
            prev_level = None
            for _ in range(max_inner):
                inner_total += 1
                alpha = first_hop_sinr(p, sub.lam, s.sigma_r_sq)
                A = svd_beamformers(ch.G, alpha, q_r, s.sigma_k_sq)
                eff = svd_effective_channel(ch.G, A, alpha)
                level, q_r = svd_uplink_balance(eff, s.gamma, s.sigma_k_sq, s.p_r_max)
                if prev_level is not None and abs(level - prev_level) < eps:
                    break
                prev_level = level
            t, p_new, pr_new, status = svd_feasibility_gp(s, eff, sub.lam)
        except RelayError as exc:
            message = str(exc)
            break
        if status != 'optimal' or (history and t > history[-1]):
            break
        p = p_new
        best = (_design(sub, A, p, pr_new, q_r, s.sigma_r_sq), level)
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
                           np.zeros(K), None, history, message or 'power GP failed')
    design, level = best
    status = FEASIBLE if history[-1] <= 1 else INFEASIBLE
    return _finish(s, ch, design, status, history[-1], level, len(history), inner_total,
                   history, message)


def svd_minimize(s, ch, warm, eps=EPSILON, max_outer=MAX_OUTER, max_inner=MAX_INNER):
    """Sum-power minimization of the SVD scheme from a passed feasibility test.

    ``warm`` is the feasibility :class:`SolveReport` or its :class:`SvdDesign`;
    its pairing is kept. Each outer pass re-derives the RS beamformers from
    the minimum-power virtual uplink and re-solves the power GP; a pass that
    fails or raises the sum power ends the loop on the previous design.
    """
    if isinstance(warm, SolveReport):
        warm = warm.design
    sub = svd_subchannels(s, ch.H, warm.pairing)
    p = warm.p.copy()
    q_r = warm.q_r.copy()
    A_good = warm.A
    design = None
    history = []
    inner_total = 0
    for _ in range(max_outer):
        prev_sum = None
        for _ in range(max_inner):
            inner_total += 1
            alpha = first_hop_sinr(p, sub.lam, s.sigma_r_sq)
            try:
                A = svd_beamformers(ch.G, alpha, q_r, s.sigma_k_sq)
                q_r = svd_uplink_minpower(svd_effective_channel(ch.G, A, alpha),
                                          s.gamma, s.sigma_k_sq)
            except RelayError:
                break
            A_good = A
            if prev_sum is not None and abs(q_r.sum() - prev_sum) < eps:
                break
            prev_sum = q_r.sum()
        alpha = first_hop_sinr(p, sub.lam, s.sigma_r_sq)
        eff = svd_effective_channel(ch.G, A_good, alpha)
        try:
            total, p_new, pr_new, status = svd_minpower_gp(s, eff, sub.lam)
        except RelayError:
            break
        if status != 'optimal' or (history and total > history[-1]):
            break
        candidate = _design(sub, A_good, p_new, pr_new, q_r, s.sigma_r_sq)
        report = _finish(s, ch, candidate, FEASIBLE, total, np.nan, len(history) + 1,
                         inner_total, history + [total])
        if not meets_targets(report.achieved_sinr, s.gamma, report.p_b, report.p_r,
                             s.p_b_max, s.p_r_max):
            break
        design = report
        p = p_new
        history.append(total)
        if len(history) > 1 and history[-2] - total < eps:
            break
    if design is None:
        return SolveReport(INFEASIBLE, np.inf, np.nan, np.nan, np.nan, np.nan, 0,
                           inner_total, np.zeros(s.k), None, [],
                           'power minimization GP infeasible')
    design.inner_iterations = inner_total
    design.outer_iterations = len(history)
    design.t_history = history
    return design


def broadcast_beamformers(G, q, sigma_k_sq):
    """Relay-free MIMO broadcast beamformers from the classic virtual uplink.

    ``a_k`` maximizes ``q_k |a^H g_k|^2 / a^H (sum_{i!=k} q_i g_i g_i^H + sigma_k^2 I) a``.
    """
    m, K = G.shape
    sig = np.broadcast_to(np.asarray(sigma_k_sq, dtype=float), (K,))
    A = np.empty((m, K), dtype=complex)
    for k in range(K):
        Rn = sig[k] * np.eye(m, dtype=complex)
        for i in range(K):
            if i != k:
                Rn += q[i] * np.outer(G[:, i], G[:, i].conj())
        x = np.linalg.solve(Rn, G[:, k])
        A[:, k] = x / np.linalg.norm(x)
    return A


def broadcast_uplink_balance(G, A, gamma, sigma_k_sq, total_power):
    """SINR balancing of the relay-free virtual uplink with coupling ``D Psi^T``."""
    gain = np.abs(G.conj().T @ A) ** 2
    D = np.asarray(gamma, dtype=float) / np.diag(gain)
    Psi = gain - np.diag(np.diag(gain))
    return balance_eigensystem(D[:, None] * Psi.T,
                               D * np.broadcast_to(sigma_k_sq, D.shape), total_power)


# multi-hop generalization ----------------------------------------------------

@dataclass
class MultihopDesign:
    """Cascade design: per-hop eigen-subchannels, last-relay beamformers, station powers.

    ``hops[n]`` holds hop ``n + 1`` reordered per user; ``powers[0]`` are BS
    stream powers and ``powers[n]`` those of relay ``n``. With no relays the
    BS beamforms directly with ``A``.
    """

    hops: list
    A: np.ndarray
    powers: list
    q_r: np.ndarray
    pairing: list


def chain_power(cinr_chain, gamma):
    """Minimum total power of coupling-free multi-hop streams.

    ``cinr_chain[h][k]`` is the CINR of hop ``h`` on stream ``k``; stream
    ``k`` must reach ``gamma_k`` through the cascade recursion.

    Returns
    -------
    total : float
    powers : (hops, K) ndarray
    status : str
    """
    chain = np.atleast_2d(np.asarray(cinr_chain, dtype=float))
    n_hops, K = chain.shape
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (K,))
    model = gp.GpModel()
    x = [[model.variable(f'x{h + 1}_{k + 1}') for k in range(K)] for h in range(n_hops)]
    for k in range(K):
        inv = None
        for h in range(n_hops):
            hop = 1.0 / chain[h, k] * x[h][k] ** -1
            inv = hop if inv is None else inv * hop + inv + hop
        model.add(gamma[k] * inv)
    model.minimize(gp.Posynomial([v for row in x for v in row]))
    sol = model.solve()
    return sol.objective_value, sol.variables[:n_hops * K].reshape(n_hops, K), sol.status


def multihop_pairing(hop_cinrs, final_cinr):
    """Accumulated-CINR pairing along a relay cascade.

    Parameters
    ----------
    hop_cinrs : list of (K,) array_like
        Point-to-point CINRs of each hop, indexed by singular value rank.
    final_cinr : (K,) array_like
        Broadcast-hop CINR of each user.

    Returns
    -------
    perms : list of (K,) ndarray
        ``perms[n][k]`` is the subchannel of hop ``n + 1`` carrying user ``k``.
    accumulated : list of (K,) ndarray
        Running CINR of every chain after each hop, in chain order.
    """
    hop_cinrs = [np.asarray(c, dtype=float) for c in hop_cinrs]
    final_cinr = np.asarray(final_cinr, dtype=float)
    K = len(final_cinr)
    if not hop_cinrs:
        return [], []
    members = [[j] for j in range(K)]
    acc = hop_cinrs[0].copy()
    accumulated = [acc.copy()]
    for c in hop_cinrs[1:]:
        chains = np.argsort(-acc, kind='stable')
        subs = np.argsort(c, kind='stable')
        new_acc = np.empty(K)
        for j, sub in zip(chains, subs):
            members[j].append(int(sub))
            new_acc[j] = multihop_sinr([acc[j], c[sub]])
        acc = new_acc
        accumulated.append(acc.copy())
    chains = np.argsort(-acc, kind='stable')
    users = np.argsort(final_cinr, kind='stable')
    perms = [np.empty(K, dtype=int) for _ in hop_cinrs]
    for j, user in zip(chains, users):
        for n, sub in enumerate(members[j]):
            perms[n][user] = sub
    return perms, accumulated


def exhaustive_multihop_pairing(hop_cinrs, final_cinr, gamma):
    """Best of all ``(K!)^N`` pairings under :func:`chain_power` (``K <= 4``).

    Returns ``(perms, total_power)``.
    """
    hop_cinrs = [np.asarray(c, dtype=float) for c in hop_cinrs]
    final_cinr = np.asarray(final_cinr, dtype=float)
    K = len(final_cinr)
    if K > 4:
        raise InvalidInputError('exhaustive pairing is limited to K <= 4')
    best, best_power = None, np.inf
    for combo in product(permutations(range(K)), repeat=len(hop_cinrs)):
        perms = [np.array(c) for c in combo]
        chain = [c[perm] for c, perm in zip(hop_cinrs, perms)] + [final_cinr]
        total, _, status = chain_power(chain, gamma)
        if status == 'optimal' and total < best_power:
            best, best_power = perms, total
    return best, best_power


def _hop_subchannels(s, hop_channels, perms):
    subs = []
    for n, H in enumerate(hop_channels):
        subs.append(svd_subchannels(s, H, None if perms is None else perms[n]))
    return subs


def _chain_alpha(powers, subs, sigma_r_sq):
    """Accumulated SINR of every user's stream at the last relay (``inf`` with no relays)."""
    K = len(powers[0])
    alpha = np.full(K, np.inf)
    for n, sub in enumerate(subs):
        hop = first_hop_sinr(powers[n], sub.lam, sigma_r_sq)
        alpha = hop if n == 0 else np.array([multihop_sinr([a, h]) for a, h in zip(alpha, hop)])
    return alpha


def _multihop_model(ms, eff, lams):
    """Shared GP skeleton: station powers, caps and ``gamma_k / SINR_k`` posynomials."""
    s = ms.base
    K = s.k
    caps = ms.station_caps
    model = gp.GpModel()
    powers = [[model.variable(f'p{n}_{k + 1}') for k in range(K)] for n in range(len(caps))]
    for n, cap in enumerate(caps):
        model.add(gp.Posynomial(powers[n]), cap)
    last = powers[-1]
    gain = eff.gain
    inv = []
    for k in range(K):
        acc = None
        for n, lam in enumerate(lams):
            hop = s.sigma_r_sq / lam[k] ** 2 * powers[n][k] ** -1
            acc = hop if acc is None else acc * hop + acc + hop
        interference = gp.as_posynomial(s.sigma_k_sq[k])
        for i in range(K):
            if i != k and gain[k, i] > 0:
                interference = interference + gain[k, i] * last[i]
        beta_inv = interference / (gain[k, k] * last[k])
        total = beta_inv if acc is None else acc * beta_inv + acc + beta_inv
        inv.append(s.gamma[k] * total)
    return model, powers, inv


def _unpack_powers(sol, n_stations, K):
    return [sol.variables[n * K:(n + 1) * K].copy() for n in range(n_stations)]


def multihop_feasibility_gp(ms, eff, lams):
    """Min-max ``gamma_k / SINR_k`` over every station's stream powers.

    Parameters
    ----------
    ms : MultihopScenario
    eff : SvdEffectiveChannel
        Broadcast hop through the fixed last-station beamformers.
    lams : list of (K,) ndarray
        Singular values of each point-to-point hop, ordered per user.

    Returns
    -------
    t : float
    powers : list of (K,) ndarray
        BS first, then each relay.
    status : str
    """
    model, powers, inv = _multihop_model(ms, eff, lams)
    t = model.variable('t')
    for expr in inv:
        model.add(expr, t)
    model.minimize(t)
    sol = model.solve()
    return sol.objective_value, _unpack_powers(sol, len(powers), ms.base.k), sol.status


def multihop_minpower_gp(ms, eff, lams):
    """Minimize the total power of all stations subject to every SINR target.

    Returns ``(sum_power, powers, status)``.
    """
    model, powers, inv = _multihop_model(ms, eff, lams)
    for expr in inv:
        model.add(expr)
    model.minimize(gp.Posynomial([v for row in powers for v in row]))
    sol = model.solve()
    return sol.objective_value, _unpack_powers(sol, len(powers), ms.base.k), sol.status


def multihop_precoders(design, sigma_r_sq):
    """BS precoder and the transfer matrix of every relay."""
    hops, powers = design.hops, design.powers
    if not hops:
        return design.A * np.sqrt(powers[0])[None, :], []
    F = hops[0].V * np.sqrt(powers[0])[None, :]
    Qs = []
    for n, sub in enumerate(hops):
        scale = np.sqrt(powers[n + 1]) * normalization(powers[n], sub.lam, sigma_r_sq)
        out = hops[n + 1].V if n + 1 < len(hops) else design.A
        Qs.append((out * scale[None, :]) @ sub.U.conj().T)
    return F, Qs


def verify_multihop(ms, mr, F, Qs):
    """Ground-truth SINRs and station powers of an arbitrary relay cascade.

    Signal transfer and noise covariance are propagated hop by hop; every
    relay adds ``sigma_r^2 I`` at its input.

    Returns
    -------
    sinr : (K,) ndarray
    powers : (N + 1,) ndarray
        Transmit power of the BS and each relay.
    """
    s = ms.base
    T = np.asarray(F)
    N = np.zeros((T.shape[0], T.shape[0]), dtype=complex)
    powers = [float(np.sum(np.abs(T) ** 2))]
    for H, Q in zip(mr.hop_channels, Qs):
        T = Q @ H @ T
        N = Q @ (H @ N @ H.conj().T + s.sigma_r_sq * np.eye(H.shape[0])) @ Q.conj().T
        powers.append(float(np.sum(np.abs(T) ** 2) + np.real(np.trace(N))))
    G = mr.G
    power = np.abs(G.conj().T @ T) ** 2
    signal = np.diag(power).copy()
    noise = np.real(np.einsum('ik,ij,jk->k', G.conj(), N, G))
    sinr = signal / (power.sum(axis=1) - signal + noise + s.sigma_k_sq)
    return sinr, np.array(powers)


def _multihop_finish(ms, mr, design, status, t, level, outer, inner, history, message=''):
    s = ms.base
    F, Qs = multihop_precoders(design, s.sigma_r_sq)
    sinr, powers = verify_multihop(ms, mr, F, Qs)
    relay_power = float(powers[1:].sum())
    return SolveReport(status, t, level, float(powers.sum()), powers[0], relay_power,
                       outer, inner, sinr, design, history, message)


def _multihop_pairing_perms(ms, mr, pairing):
    s = ms.base
    if pairing is None or (isinstance(pairing, str) and pairing in ('off', 'none')):
        return None
    if not isinstance(pairing, str):
        return [np.asarray(p, dtype=int) for p in pairing]
    subs = _hop_subchannels(s, mr.hop_channels, None)
    caps = ms.station_caps
    powers = [np.full(s.k, c / s.k) for c in caps]
    alpha = _chain_alpha(powers, subs, s.sigma_r_sq)
    A = svd_beamformers(mr.G, alpha, powers[-1], s.sigma_k_sq)
    final = second_hop_cinr(mr.G, A, s.sigma_k_sq)
    hop_cinrs = [sub.lam ** 2 / s.sigma_r_sq for sub in subs]
    if pairing in ('heuristic', 'on'):
        return multihop_pairing(hop_cinrs, final)[0]
    if pairing == 'exhaustive':
        return exhaustive_multihop_pairing(hop_cinrs, final, s.gamma)[0]
    raise InvalidInputError(f'unknown pairing mode {pairing!r}')


def multihop_feasibility(ms, mr, pairing=None, eps=EPSILON, max_outer=MAX_OUTER,
                         max_inner=MAX_INNER):
    """Feasibility test of the SVD cascade; two-hop logic with accumulated first-hop SINRs."""
    s = ms.base
    K = s.k
    try:
        perms = _multihop_pairing_perms(ms, mr, pairing)
        subs = _hop_subchannels(s, mr.hop_channels, perms)
    except UnsupportedInstance as exc:
        return _unsupported(s, exc)
    lams = [sub.lam for sub in subs]
    powers = [np.full(K, c / K) for c in ms.station_caps]
    q_r = powers[-1].copy()
    best = None
    history = []
    inner_total = 0
    message = ''
    for _ in range(max_outer):
        try:
            prev_level = None
            for _ in range(max_inner):
                inner_total += 1
                alpha = _chain_alpha(powers, subs, s.sigma_r_sq)
                A = svd_beamformers(mr.G, alpha, q_r, s.sigma_k_sq)
                eff = svd_effective_channel(mr.G, A, alpha)
                level, q_r = svd_uplink_balance(eff, s.gamma, s.sigma_k_sq, ms.station_caps[-1])
                if prev_level is not None and abs(level - prev_level) < eps:
                    break
                prev_level = level
            t, new_powers, status = multihop_feasibility_gp(ms, eff, lams)
        except RelayError as exc:
            message = str(exc)
            break
        if status != 'optimal' or (history and t > history[-1]):
            break
        powers = new_powers
        best = (MultihopDesign(subs, A, powers, q_r, perms), level)
        history.append(t)
        if t <= 1 or (len(history) > 1 and history[-2] - t < eps):
            break
    if best is None:
        return SolveReport(INFEASIBLE, np.inf, 0.0, np.nan, np.nan, np.nan, 0, inner_total,
                           np.zeros(K), None, history, message or 'power GP failed')
    design, level = best
    status = FEASIBLE if history[-1] <= 1 else INFEASIBLE
    if status == INFEASIBLE and len(history) == max_outer:
        status = MAX_ITER
    return _multihop_finish(ms, mr, design, status, history[-1], level, len(history),
                            inner_total, history, message)


def multihop_minimize(ms, mr, warm, eps=EPSILON, max_outer=MAX_OUTER, max_inner=MAX_INNER):
    """Total-power minimization of the SVD cascade from a passed feasibility test."""
    s = ms.base
    if isinstance(warm, SolveReport):
        warm = warm.design
    subs = warm.hops
    lams = [sub.lam for sub in subs]
    powers = [p.copy() for p in warm.powers]
    q_r = warm.q_r.copy()
    A_good = warm.A
    best = None
    history = []
    inner_total = 0
    for _ in range(max_outer):
        prev_sum = None
        alpha = _chain_alpha(powers, subs, s.sigma_r_sq)
        for _ in range(max_inner):
            inner_total += 1
            try:
                A = svd_beamformers(mr.G, alpha, q_r, s.sigma_k_sq)
                q_r = svd_uplink_minpower(svd_effective_channel(mr.G, A, alpha),
                                          s.gamma, s.sigma_k_sq)
            except RelayError:
                break
            A_good = A
            if prev_sum is not None and abs(q_r.sum() - prev_sum) < eps:
                break
            prev_sum = q_r.sum()
        eff = svd_effective_channel(mr.G, A_good, alpha)
        try:
            total, new_powers, status = multihop_minpower_gp(ms, eff, lams)
        except RelayError:
            break
        if status != 'optimal' or (history and total > history[-1]):
            break
        design = MultihopDesign(subs, A_good, new_powers, q_r.copy(), warm.pairing)
        report = _multihop_finish(ms, mr, design, FEASIBLE, total, np.nan,
                                  len(history) + 1, inner_total, history + [total])
        station = np.array([np.sum(p) for p in new_powers])
        if not (np.all(report.achieved_sinr >= s.gamma * (1 - 1e-4))
                and np.all(station <= ms.station_caps + 1e-8)):
            break
        best = report
        powers = new_powers
        history.append(total)
        if len(history) > 1 and history[-2] - total < eps:
            break
    if best is None:
        return SolveReport(INFEASIBLE, np.inf, np.nan, np.nan, np.nan, np.nan, 0,
                           inner_total, np.zeros(s.k), None, [],
                           'power minimization GP infeasible')
    best.inner_iterations = inner_total
    best.outer_iterations = len(history)
    best.t_history = history
    return best
