"""Scenarios, seeded channel draws and the ground-truth SINR/power evaluator."""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError

__all__ = ['Scenario', 'ChannelRealization', 'MultihopScenario',
           'MultihopRealization', 'path_loss', 'generate', 'generate_multihop',
           'trial_seed', 'verify_sinr', 'db_to_linear', 'linear_to_db']


def db_to_linear(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


def _positive_vector(name, value, length):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1 and length > 1:
        arr = np.full(length, arr[0])
    if arr.shape != (length,):
        raise InvalidInputError(f'{name} must have length {length}, got {arr.size}')
    if np.any(~(arr > 0)) or not np.all(np.isfinite(arr)):
        raise InvalidInputError(f'{name} must be strictly positive and finite')
    return arr


def _positive_scalar(name, value):
    value = float(value)
    if not (value > 0 and np.isfinite(value)):
        raise InvalidInputError(f'{name} must be strictly positive, got {value}')
    return value


@dataclass(frozen=True)
class Scenario:
    """One problem instance of the two-hop relay broadcast channel.

    ``gamma`` holds linear SINR targets. Scalars given for per-user fields
    are broadcast to all ``k`` users.
    """

    m_b: int
    m_r: int
    k: int
    gamma: np.ndarray
    sigma_r_sq: float = 1.0
    sigma_k_sq: np.ndarray = 1.0
    p_b_max: float = 10.0
    p_r_max: float = 10.0
    d_bs_rs: float = 0.5
    d_rs_ms: np.ndarray = 0.5
    eta: float = 4.0
    d0: float = 1.0

    def __post_init__(self):
        if int(self.k) < 1 or int(self.m_b) < 1 or int(self.m_r) < 1:
            raise InvalidInputError('antenna and user counts must be positive')
        set_ = object.__setattr__
        set_(self, 'k', int(self.k))
        set_(self, 'm_b', int(self.m_b))
        set_(self, 'm_r', int(self.m_r))
        set_(self, 'gamma', _positive_vector('gamma', self.gamma, self.k))
        set_(self, 'sigma_k_sq', _positive_vector('sigma_k_sq', self.sigma_k_sq, self.k))
        set_(self, 'd_rs_ms', _positive_vector('d_rs_ms', self.d_rs_ms, self.k))
        for name in ('sigma_r_sq', 'p_b_max', 'p_r_max', 'd_bs_rs', 'd0'):
            set_(self, name, _positive_scalar(name, getattr(self, name)))
        set_(self, 'eta', float(self.eta))


@dataclass(frozen=True)
class ChannelRealization:
    """``H`` is ``m_r x m_b``; column ``k`` of ``G`` is the RS-to-MS vector ``g_k``."""

    H: np.ndarray
    G: np.ndarray
    seed: int = 0

    @property
    def g(self):
        return [self.G[:, k] for k in range(self.G.shape[1])]


@dataclass(frozen=True)
class MultihopScenario:
    """Cascade of ``relays`` point-to-point MIMO hops followed by a broadcast hop.

    ``hop_distances[n]`` is the length of point-to-point hop ``n`` (BS to
    RS1 first). The broadcast hop uses ``base.d_rs_ms``. With ``relays = 0``
    the BS broadcasts directly.
    """

    base: Scenario
    relays: int
    hop_distances: np.ndarray = field(default_factory=lambda: np.zeros(0))
    p_r_max_hops: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        n = int(self.relays)
        if n < 0:
            raise InvalidInputError('relay count must be nonnegative')
        object.__setattr__(self, 'relays', n)
        if n:
            object.__setattr__(self, 'hop_distances',
                               _positive_vector('hop_distances', self.hop_distances, n))
            object.__setattr__(self, 'p_r_max_hops',
                               _positive_vector('p_r_max_hops', self.p_r_max_hops, n))
        else:
            object.__setattr__(self, 'hop_distances', np.zeros(0))
            object.__setattr__(self, 'p_r_max_hops', np.zeros(0))

    @classmethod
    def uniform(cls, base, relays, total_distance=2.0, p_r_max=None):
        """Relays evenly spaced on a line of ``total_distance`` from BS to the users."""
        hop = total_distance / (relays + 1)
        base = replace(base, d_bs_rs=hop, d_rs_ms=np.full(base.k, hop))
        caps = np.full(relays, base.p_r_max if p_r_max is None else p_r_max)
        return cls(base, relays, np.full(relays, hop), caps)

    @property
    def station_caps(self):
        """Power caps of the transmitting stations: BS first, then each relay."""
        return np.concatenate([[self.base.p_b_max], self.p_r_max_hops])


@dataclass(frozen=True)
class MultihopRealization:
    hop_channels: list
    G: np.ndarray
    seed: int = 0


def path_loss(d, d0=1.0, eta=4.0):
    """Distance-dependent power loss ``(d / d0) ** eta``."""
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)) or not d0 > 0:
        raise InvalidInputError('distances must be positive')
    return (d / d0) ** eta


def trial_seed(seed, trial):
    """Per-trial substream seed; independent of execution order."""
    return int(seed) ^ int(trial)


def _rng(seed):
    return np.random.Generator(np.random.Philox(int(seed)))


def _cn(rng, shape, variance):
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def generate(s, seed):
    """Draw ``H`` and ``G`` with i.i.d. circularly-symmetric Gaussian entries.

    Entry variances are ``1 / path_loss`` of the corresponding link.
    """
    rng = _rng(seed)
    H = _cn(rng, (s.m_r, s.m_b), 1.0 / path_loss(s.d_bs_rs, s.d0, s.eta))
    G = np.empty((s.m_r, s.k), dtype=complex)
    for k in range(s.k):
        G[:, k] = _cn(rng, s.m_r, 1.0 / path_loss(s.d_rs_ms[k], s.d0, s.eta))
    return ChannelRealization(H, G, int(seed))


def generate_multihop(ms, seed):
    """Draw every point-to-point hop matrix and the final broadcast vectors.

    Hop 1 is ``m_r x m_b``; later hops are ``m_r x m_r``. With no relays the
    broadcast vectors have ``m_b`` entries.
    """
    s = ms.base
    rng = _rng(seed)
    hops = []
    n_tx = s.m_b
    for d in ms.hop_distances:
        hops.append(_cn(rng, (s.m_r, n_tx), 1.0 / path_loss(d, s.d0, s.eta)))
        n_tx = s.m_r
    G = np.empty((n_tx, s.k), dtype=complex)
    for k in range(s.k):
        G[:, k] = _cn(rng, n_tx, 1.0 / path_loss(s.d_rs_ms[k], s.d0, s.eta))
    return MultihopRealization(hops, G, int(seed))


def verify_sinr(s, ch, F, Q):
    """Per-user SINR and station powers for arbitrary precoders.

    Parameters
    ----------
    s : Scenario
    ch : ChannelRealization
    F : (m_b, k) array_like
        BS precoder, column ``k`` carries user ``k``'s symbol.
    Q : (m_r, m_r) array_like
        RS transfer matrix.

    Returns
    -------
    sinr : (k,) ndarray
    p_b : float
        ``Tr(F F^H)``.
    p_r : float
        ``Tr(Q (H F F^H H^H + sigma_r^2 I) Q^H)``.
    """
    F = np.asarray(F)
    Q = np.asarray(Q)
    H, G = ch.H, ch.G
    if F.shape != (H.shape[1], G.shape[1]) or Q.shape != (H.shape[0], H.shape[0]):
        raise InvalidInputError(f'F {F.shape} / Q {Q.shape} do not match H {H.shape}, G {G.shape}')
    QHF = Q @ H @ F
    T = G.conj().T @ QHF
    power = np.abs(T) ** 2
    signal = np.diag(power).copy()
    interference = power.sum(axis=1) - signal
    amplified = s.sigma_r_sq * np.sum(np.abs(G.conj().T @ Q) ** 2, axis=1)
    sinr = signal / (interference + amplified + s.sigma_k_sq)
    p_b = float(np.sum(np.abs(F) ** 2))
    p_r = float(np.sum(np.abs(QHF) ** 2) + s.sigma_r_sq * np.sum(np.abs(Q) ** 2))
    return sinr, p_b, p_r
