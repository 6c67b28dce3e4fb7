"""Geometric programming: posynomial modeling and a log-barrier solver.

A geometric program

    minimize    m0(x)
    subject to  f_i(x) <= 1,   i = 1..m

with monomial objective ``m0`` and posynomial constraints ``f_i`` becomes
convex under ``x = exp(y)``: the objective is affine in ``y`` and every
constraint is a log-sum-exp of affine functions. :func:`solve` runs a phase-1
search for a strictly feasible point followed by a standard barrier method
with Newton centering steps.

Expressions are built with ordinary arithmetic::

    model = GpModel()
    x, y = model.variable('x'), model.variable('y')
    model.add(x ** -1 * y ** -1)          # x^-1 y^-1 <= 1
    model.minimize(x + y)
    sol = model.solve()
"""

from dataclasses import dataclass, field
from numbers import Real

import numpy as np

from .errors import InvalidInputError

__all__ = ['Monomial', 'Posynomial', 'GpProblem', 'GpSolution', 'GpModel',
           'normalize', 'solve', 'evaluate', 'as_posynomial']

VAR_BOUND = 1e12
OBJECTIVE_FLOOR = 1e-12
_LOG_BOUND = float(np.log(VAR_BOUND))


class Monomial:
    """``coefficient * prod_i x_i ** exponents[i]`` with a positive coefficient.

    Exponents are stored sparsely as ``{variable_index: exponent}``.
    """

    __slots__ = ('coefficient', 'exponents')

    def __init__(self, coefficient, exponents=None):
        coefficient = float(coefficient)
        if not (coefficient > 0 and np.isfinite(coefficient)):
            raise InvalidInputError(f'monomial coefficient must be positive and finite, got {coefficient}')
        exps = {}
        for i, a in (exponents or {}).items():
            a = float(a)
            if not np.isfinite(a):
                raise InvalidInputError('monomial exponents must be finite')
            if a != 0.0:
                exps[int(i)] = a
        self.coefficient = coefficient
        self.exponents = exps

    def exponent_vector(self, num_vars):
        vec = np.zeros(num_vars)
        for i, a in self.exponents.items():
            vec[i] = a
        return vec

    def _key(self):
        return tuple(sorted(self.exponents.items()))

    def __mul__(self, other):
        if isinstance(other, Real):
            return Monomial(self.coefficient * other, self.exponents)
        if isinstance(other, Monomial):
            exps = dict(self.exponents)
            for i, a in other.exponents.items():
                exps[i] = exps.get(i, 0.0) + a
            return Monomial(self.coefficient * other.coefficient, exps)
        if isinstance(other, Posynomial):
            return other * self
        return NotImplemented

    __rmul__ = __mul__

    def __pow__(self, power):
        power = float(power)
        return Monomial(self.coefficient ** power,
                        {i: a * power for i, a in self.exponents.items()})

    def __truediv__(self, other):
        if isinstance(other, Real):
            return Monomial(self.coefficient / other, self.exponents)
        if isinstance(other, Monomial):
            return self * other ** -1
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, Real):
            return other * self ** -1
        return NotImplemented

    def __add__(self, other):
        return as_posynomial(self) + other

    __radd__ = __add__

    def __repr__(self):
        body = ' '.join(f'x{i}^{a:g}' for i, a in sorted(self.exponents.items()))
        return f'{self.coefficient:g} {body}'.strip()


class Posynomial:
    """Sum of monomials. Terms with identical exponents are merged."""

    __slots__ = ('terms',)

    def __init__(self, terms):
        merged = {}
        for term in terms:
            key = term._key()
            if key in merged:
                merged[key] = Monomial(merged[key].coefficient + term.coefficient, term.exponents)
            else:
                merged[key] = term
        if not merged:
            raise InvalidInputError('a posynomial needs at least one term')
        self.terms = tuple(merged.values())

    def __add__(self, other):
        if isinstance(other, Real):
            other = Monomial(other)
        if isinstance(other, Monomial):
            return Posynomial(self.terms + (other,))
        if isinstance(other, Posynomial):
            return Posynomial(self.terms + other.terms)
        return NotImplemented

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, (Real, Monomial)):
            return Posynomial([t * other for t in self.terms])
        if isinstance(other, Posynomial):
            return Posynomial([a * b for a in self.terms for b in other.terms])
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (Real, Monomial)):
            return Posynomial([t / other for t in self.terms])
        return NotImplemented

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        return ' + '.join(repr(t) for t in self.terms)


def as_posynomial(expr):
    if isinstance(expr, Posynomial):
        return expr
    if isinstance(expr, Monomial):
        return Posynomial([expr])
    if isinstance(expr, Real):
        return Posynomial([Monomial(expr)])
    raise InvalidInputError(f'cannot convert {type(expr).__name__} to a posynomial')


def normalize(lhs, rhs):
    """Rewrite ``lhs <= rhs`` (``rhs`` a monomial) as ``lhs / rhs <= 1``."""
    if isinstance(rhs, Real):
        rhs = Monomial(rhs)
    if not isinstance(rhs, Monomial):
        raise InvalidInputError('right-hand side of a GP constraint must be a monomial')
    return as_posynomial(lhs) / rhs


def evaluate(p, x):
    """Value of a posynomial (or monomial) at a strictly positive point."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise InvalidInputError('posynomials are only defined for positive arguments')
    total = 0.0
    for term in as_posynomial(p).terms:
        val = term.coefficient
        for i, a in term.exponents.items():
            val *= x[i] ** a
        total += val
    return total


@dataclass
class GpProblem:
    """Standard-form GP: monomial objective, constraints meaning ``posy <= 1``."""

    num_vars: int
    objective: Monomial
    constraints: list = field(default_factory=list)
    names: list = field(default_factory=list)

    def __post_init__(self):
        for term in self.objective.exponents:
            if term >= self.num_vars:
                raise InvalidInputError('objective references an unknown variable')
        for con in self.constraints:
            for t in con.terms:
                if any(i >= self.num_vars or i < 0 for i in t.exponents):
                    raise InvalidInputError('constraint references an unknown variable')
        if not self.names:
            self.names = [f'x{i}' for i in range(self.num_vars)]


@dataclass
class GpSolution:
    status: str
    variables: np.ndarray
    objective_value: float
    newton_iterations: int
    at_bound: bool = False
    names: list = field(default_factory=list)

    def __getitem__(self, name):
        return self.variables[self.names.index(name)]


class _LogSumExpSystem:
    """All constraints ``log(sum_j exp(A_j y + b_j)) <= 0`` stacked for speed."""

    def __init__(self, A, b, starts):
        self.A = A
        self.b = b
        self.starts = starts
        self.group = np.repeat(np.arange(len(starts)), np.diff(np.append(starts, len(b))))

    @property
    def m(self):
        return len(self.starts)

    def values(self, y):
        z = self.A @ y + self.b
        zmax = np.maximum.reduceat(z, self.starts)
        e = np.exp(z - zmax[self.group])
        s = np.add.reduceat(e, self.starts)
        return zmax + np.log(s), e / s[self.group]

    def barrier_derivatives(self, y):
        f, pi = self.values(y)
        G = np.add.reduceat(pi[:, None] * self.A, self.starts, axis=0)
        grad = G.T @ (1.0 / -f)
        w = pi / -f[self.group]
        hess = (self.A.T * w) @ self.A + (G.T * (1.0 / f ** 2 + 1.0 / f)) @ G
        return f, grad, hess


def _compile(constraints, num_vars):
    rows, logc, starts = [], [], []
    for con in constraints:
        starts.append(len(rows))
        for t in con.terms:
            rows.append(t.exponent_vector(num_vars))
            logc.append(np.log(t.coefficient))
    A = np.array(rows, dtype=float).reshape(-1, num_vars)
    return A, np.array(logc), np.array(starts, dtype=np.intp)


def _box(num_vars, total_vars):
    """Rows encoding ``-LOG_BOUND <= y_j <= LOG_BOUND`` for the first ``num_vars``."""
    eye = np.eye(num_vars, total_vars)
    A = np.vstack([eye, -eye])
    b = np.full(2 * num_vars, -_LOG_BOUND)
    return A, b


class _NewtonBudget:
    def __init__(self, cap):
        self.cap = cap
        self.used = 0

    @property
    def exhausted(self):
        return self.used >= self.cap


def _barrier_method(c, system, y0, budget, tol, stop_when=None,
                    alpha=0.3, beta=0.8, t0=1.0, mu=10.0):
    """Minimise ``c @ y`` over ``{y : system.values(y) < 0}`` from a strictly feasible ``y0``.

    Returns ``(y, converged)``. ``stop_when(y, f)`` may end the search early.
    """
    y = y0.copy()
    t = t0
    m = system.m
    while True:
        # centering
        while True:
            if budget.exhausted:
                return y, False
            f, gphi, hphi = system.barrier_derivatives(y)
            if stop_when is not None and stop_when(y, f):
                return y, True
            g = t * c + gphi
            try:
                dy = np.linalg.solve(hphi, -g)
            except np.linalg.LinAlgError:
                dy = np.linalg.lstsq(hphi, -g, rcond=None)[0]
            lam2 = float(-g @ dy)
            budget.used += 1
            phi0 = t * (c @ y) - np.sum(np.log(-f))
            # roundoff in phi grows with t; no decrement below it is meaningful
            if lam2 / 2.0 <= 1e-10 + 1e-14 * abs(phi0):
                break
            s = 1.0
            while True:
                y_new = y + s * dy
                f_new, _ = system.values(y_new)
                if np.all(f_new < 0):
                    phi_new = t * (c @ y_new) - np.sum(np.log(-f_new))
                    if phi_new <= phi0 + alpha * s * float(g @ dy):
                        break
                s *= beta
                if s < 1e-20:
                    break
            if s < 1e-20:
                break
            y = y_new
        if m / t < tol:
            return y, True
        t *= mu


def solve(prob, tol=1e-8, max_newton=500):
    """Solve a standard-form geometric program.

    Parameters
    ----------
    prob : GpProblem
    tol : float
        Duality-gap tolerance of the barrier method, in log-objective units.
    max_newton : int
        Cap on Newton steps across phase 1 and phase 2.

    Returns
    -------
    GpSolution
        ``status`` is one of ``'optimal'``, ``'infeasible'``, ``'unbounded'``
        or ``'max-iter'``.
    """
    n = prob.num_vars
    budget = _NewtonBudget(max_newton)
    A_con, b_con, s_con = _compile(prob.constraints, n)
    A_box, b_box = _box(n, n)
    c = prob.objective.exponent_vector(n)
    log_c0 = np.log(prob.objective.coefficient)

    def result(status, y):
        x = np.exp(y[:n])
        obj = float(np.exp(log_c0 + c @ y[:n]))
        near = bool(np.any(np.abs(y[:n]) > _LOG_BOUND - 1e-3))
        return GpSolution(status, x, obj, budget.used, near, list(prob.names))

    y = np.zeros(n)
    if len(s_con):
        f0 = np.max(_LogSumExpSystem(A_con, b_con, s_con).values(y)[0])
    else:
        f0 = -np.inf
    if f0 >= 0:
        # phase 1: minimise s subject to f_i(y) <= s, with y boxed and s >= -1
        A1 = np.vstack([
            np.hstack([A_con, -np.ones((len(b_con), 1))]),
            np.hstack([A_box, np.zeros((2 * n, 1))]),
            np.eye(1, n + 1, n) * -1.0,
        ])
        b1 = np.concatenate([b_con, b_box, [-1.0]])
        s1 = np.concatenate([s_con, len(b_con) + np.arange(2 * n + 1)])
        phase1 = _LogSumExpSystem(A1, b1, s1.astype(np.intp))
        y1 = np.append(y, f0 + 1.0)
        c1 = np.eye(1, n + 1, n).ravel()
        m_con = len(s_con)

        def strictly_feasible(y_ext, f):
            return np.max(f[:m_con] + y_ext[n]) < -1e-6

        y1, converged = _barrier_method(c1, phase1, y1, budget, tol, stop_when=strictly_feasible)
        f_orig = _LogSumExpSystem(A_con, b_con, s_con).values(y1[:n])[0]
        worst = float(np.max(f_orig))
        if worst >= 0:
            if not converged:
                return result('max-iter', y1[:n])
            if worst > np.log1p(1e-8):
                return result('infeasible', y1[:n])
            # no strict interior: relax every constraint by a sub-tolerance margin
            b_con = b_con - (worst + 1e-10)
        y = y1[:n]

    system = _LogSumExpSystem(np.vstack([A_con, A_box]),
                              np.concatenate([b_con, b_box]),
                              np.concatenate([s_con, len(b_con) + np.arange(2 * n)]).astype(np.intp))
    y, converged = _barrier_method(c, system, y, budget, tol)
    sol = result('optimal' if converged else 'max-iter', y)
    if sol.at_bound and sol.objective_value < OBJECTIVE_FLOOR:
        sol.status = 'unbounded'
    return sol


class GpModel:
    """Incremental builder for :class:`GpProblem`.

    Posynomial objectives are rewritten in epigraph form: a fresh variable
    ``t`` becomes the objective and ``objective / t <= 1`` is appended.
    """

    def __init__(self):
        self.names = []
        self.constraints = []
        self._objective = None

    def variable(self, name):
        self.names.append(name)
        return Monomial(1.0, {len(self.names) - 1: 1.0})

    def add(self, lhs, rhs=1.0):
        """Add the constraint ``lhs <= rhs`` (``rhs`` must be a monomial)."""
        self.constraints.append(normalize(lhs, rhs))

    def minimize(self, expr):
        self._objective = expr

    def problem(self):
        if self._objective is None:
            raise InvalidInputError('no objective set')
        obj = self._objective
        names = list(self.names)
        constraints = list(self.constraints)
        if isinstance(obj, Real):
            obj = Monomial(obj)
        if isinstance(obj, Posynomial) and len(obj) == 1:
            obj = obj.terms[0]
        if isinstance(obj, Posynomial):
            names.append('_epigraph')
            t = Monomial(1.0, {len(names) - 1: 1.0})
            constraints.append(obj / t)
            obj = t
        return GpProblem(len(names), obj, constraints, names)

    def solve(self, **kwargs):
        sol = solve(self.problem(), **kwargs)
        return sol
