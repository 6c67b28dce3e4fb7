import itertools

import numpy as np
import pytest

from mimorelay.channel import Scenario, db_to_linear, generate


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_hpd(rng, n, floor=0.5):
    A = crandn(rng, n, n)
    return A @ A.conj().T + floor * np.eye(n)


def angle(u, v):
    """Angle between two complex directions, insensitive to a common phase."""
    u = np.asarray(u) / np.linalg.norm(u)
    v = np.asarray(v) / np.linalg.norm(v)
    along = abs(np.vdot(u, v))
    # arctan of the orthogonal residual keeps precision near zero
    return float(np.arctan2(np.linalg.norm(v - np.vdot(u, v) * u), along))


def instance(k=2, gamma_db=3.0, seed=0, **kw):
    kw.setdefault('m_b', k)
    kw.setdefault('m_r', k)
    s = Scenario(k=k, gamma=db_to_linear(gamma_db), **kw)
    return s, generate(s, seed)


def refined_grid_min(objective, feasible, lo, hi, points=41, cell=1e-4, margin=3):
    """Minimize ``objective(Y)`` over ``feasible(Y)`` on a log-space box by zooming grids.

    ``Y`` is an ``(n_points, n)`` array of log-variables. Each round keeps the
    best feasible grid point and shrinks the window to ``margin`` cells
    around it until the cell width drops below ``cell``.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    box_lo, box_hi = lo.copy(), hi.copy()
    best = None
    while True:
        axes = [np.linspace(a, b, points) for a, b in zip(lo, hi)]
        Y = np.array(list(itertools.product(*axes)))
        ok = feasible(Y)
        if not np.any(ok):
            raise AssertionError('grid oracle found no feasible point')
        vals = np.where(ok, objective(Y), np.inf)
        i = int(np.argmin(vals))
        best = (vals[i], Y[i])
        width = (hi - lo) / (points - 1)
        if np.all(width < cell):
            return best
        lo = np.maximum(box_lo, Y[i] - margin * width)
        hi = np.minimum(box_hi, Y[i] + margin * width)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_gp(rng, n):
    """Random bounded GP in ``n`` variables with ``x = 1`` strictly feasible.

    Returns ``(problem, lo, hi, log_objective, log_feasible)`` where the last
    two evaluate the problem on an ``(m, n)`` array of log-variables.
    """
    from mimorelay import gp

    lo, hi = np.log(0.1), np.log(10.0)
    obj = gp.Monomial(rng.uniform(0.5, 2.0), dict(enumerate(rng.uniform(-1, 1, n))))
    constraints, dense = [], []
    for i in range(n):
        constraints += [gp.Monomial(0.1, {i: 1.0}), gp.Monomial(0.1, {i: -1.0})]
    for _ in range(rng.integers(1, 3)):
        m = rng.integers(2, 4)
        E = rng.integers(-2, 3, size=(m, n)).astype(float)
        c = rng.uniform(0.2, 1.0, m)
        c *= rng.uniform(0.3, 0.9) / c.sum()
        constraints.append(gp.Posynomial([gp.Monomial(ci, dict(enumerate(e)))
                                          for ci, e in zip(c, E)]))
        dense.append((np.log(c), E))
    constraints = [gp.as_posynomial(cn) for cn in constraints]
    prob = gp.GpProblem(n, obj, constraints)
    a = obj.exponent_vector(n)

    def log_objective(Y):
        return np.log(obj.coefficient) + Y @ a

    def log_feasible(Y):
        ok = np.ones(len(Y), dtype=bool)
        for logc, E in dense:
            ok &= np.logaddexp.reduce(logc[None, :] + Y @ E.T, axis=1) <= 0
        return ok

    return prob, [lo] * n, [hi] * n, log_objective, log_feasible
