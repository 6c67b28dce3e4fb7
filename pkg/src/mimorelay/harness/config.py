"""Plain-text scenario configuration.

One ``key = value`` pair per line; ``#`` starts a comment. Arrays are
bracketed (``[a, b]``); bare comma- or whitespace-separated lists are also
accepted. SINR targets are given in dB::

    k = 2
    gamma = [3, 3]
    d_rs_ms = [0.25, 0.75]
    p_b_max = 10
"""

from dataclasses import dataclass, field

import numpy as np

from ..channel import MultihopScenario, Scenario, db_to_linear
from ..errors import InvalidInputError

SCALAR_KEYS = {'m_b': int, 'm_r': int, 'k': int, 'sigma_r_sq': float, 'p_b_max': float,
               'p_r_max': float, 'd_bs_rs': float, 'eta': float, 'd0': float, 'hops': int}
ARRAY_KEYS = ('gamma', 'sigma_k_sq', 'd_rs_ms', 'p_r_max_hops')

DEFAULTS = {'k': 2, 'gamma': [3.0], 'sigma_r_sq': 1.0, 'sigma_k_sq': [1.0],
            'p_b_max': 10.0, 'p_r_max': 10.0, 'd_bs_rs': 0.5, 'd_rs_ms': [0.5],
            'eta': 4.0, 'd0': 1.0, 'hops': 2}


@dataclass
class Config:
    """Parsed configuration. Antenna counts default to ``k`` when omitted."""

    values: dict = field(default_factory=lambda: dict(DEFAULTS))

    def get(self, key, default=None):
        return self.values.get(key, default)

    def updated(self, **changes):
        values = dict(self.values)
        values.update(changes)
        return Config(values)

    def scenario(self):
        v = self.values
        k = int(v['k'])
        if k < 1:
            raise InvalidInputError('k must be at least 1')
        return Scenario(
            m_b=int(v.get('m_b', k)), m_r=int(v.get('m_r', k)), k=k,
            gamma=db_to_linear(_per_user('gamma', v['gamma'], k)),
            sigma_r_sq=v['sigma_r_sq'],
            sigma_k_sq=_per_user('sigma_k_sq', v['sigma_k_sq'], k),
            p_b_max=v['p_b_max'], p_r_max=v['p_r_max'], d_bs_rs=v['d_bs_rs'],
            d_rs_ms=_per_user('d_rs_ms', v['d_rs_ms'], k), eta=v['eta'], d0=v['d0'])

    def multihop(self, total_distance=2.0):
        """Cascade with ``hops - 1`` relays spread evenly over ``total_distance``."""
        relays = int(self.values['hops']) - 1
        if relays < 0:
            raise InvalidInputError('hops must be at least 1')
        caps = self.values.get('p_r_max_hops')
        ms = MultihopScenario.uniform(self.scenario(), relays, total_distance)
        if caps is not None and relays:
            caps = np.asarray(caps, dtype=float)
            if caps.size == 1:
                caps = np.full(relays, caps[0])
            ms = MultihopScenario(ms.base, relays, ms.hop_distances, caps)
        return ms


def _per_user(name, value, k):
    """Broadcast a per-user array to ``k`` entries; only constant arrays may be resized."""
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == k:
        return arr
    if np.all(arr == arr[0]):
        return np.full(k, arr[0])
    raise InvalidInputError(f'{name} has {arr.size} distinct entries but k = {k}')


def _parse_value(key, text):
    parts = text.replace('[', ' ').replace(']', ' ').replace(',', ' ').split()
    if not parts:
        raise InvalidInputError(f'missing value for {key!r}')
    try:
        nums = [float(p) for p in parts]
    except ValueError as exc:
        raise InvalidInputError(f'bad value for {key!r}: {text!r}') from exc
    if key not in SCALAR_KEYS:
        return nums
    if len(nums) != 1:
        raise InvalidInputError(f'{key!r} takes a single value')
    if SCALAR_KEYS[key] is int:
        if nums[0] != int(nums[0]):
            raise InvalidInputError(f'{key!r} must be an integer')
        return int(nums[0])
    return nums[0]


def parse_config(text):
    """Parse configuration text into a :class:`Config`.

    Raises
    ------
    InvalidInputError
        On unknown keys, malformed lines or non-numeric values.
    """
    values = dict(DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise InvalidInputError(f'line {lineno}: expected key = value')
        key, _, val = line.partition('=')
        key = key.strip()
        if key not in SCALAR_KEYS and key not in ARRAY_KEYS:
            raise InvalidInputError(f'line {lineno}: unknown key {key!r}')
        values[key] = _parse_value(key, val)
    return Config(values)


def load_config(path):
    with open(path, encoding='utf-8') as fh:
        return parse_config(fh.read())
