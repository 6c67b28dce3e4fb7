"""Dense complex linear-algebra kernels used by the relay schemes.

Everything here is a pure function of its arguments. Matrices are plain
``numpy.ndarray`` objects; complex dtype is used whenever the input is complex.
"""

from dataclasses import dataclass

import numpy as np

from .errors import IllConditionedError, InvalidInputError, NumericFailure

__all__ = ['EigResult', 'svd', 'dominant_gen_eigvec', 'perron',
           'spectral_radius', 'solve_linear', 'balance_eigensystem',
           'COND_LIMIT']

COND_LIMIT = 1e12
PERRON_TOL = 1e-12
PERRON_MAX_ITER = 10_000


@dataclass(frozen=True)
class EigResult:
    """Eigenvalue together with a unit-norm eigenvector."""

    value: float
    vector: np.ndarray


def _finite_matrix(M, name='matrix', square=False):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise InvalidInputError(f'{name} must be a nonempty 2-D array, got shape {M.shape}')
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f'{name} has non-finite entries')
    if square and M.shape[0] != M.shape[1]:
        raise InvalidInputError(f'{name} must be square, got shape {M.shape}')
    return M


def svd(M):
    """Full singular value decomposition ``M = U @ diag(sigma) @ V^H``.

    Parameters
    ----------
    M : (m, n) array_like

    Returns
    -------
    U : (m, m) ndarray
        Left singular vectors (unitary).
    sigma : (min(m, n),) ndarray
        Singular values, nonnegative and sorted in descending order.
    V : (n, n) ndarray
        Right singular vectors (unitary). Note that ``V`` is returned, not
        its conjugate transpose.
    """
    M = _finite_matrix(M)
    U, sigma, Vh = np.linalg.svd(M, full_matrices=True)
    return U, sigma, Vh.conj().T


def _condition(M):
    s = np.linalg.svd(M, compute_uv=False)
    if s[-1] == 0.0:
        return np.inf
    return s[0] / s[-1]


def dominant_gen_eigvec(h, c, Rn):
    """Dominant generalized eigenpair of ``(c h h^H, Rn)``.

    With a rank-one numerator the maximiser of
    ``w^H (c h h^H) w / w^H Rn w`` is ``Rn^{-1} h`` and the maximum is
    ``c h^H Rn^{-1} h``, so a single positive-definite solve suffices.

    Parameters
    ----------
    h : (n,) array_like
        Nonzero signature vector.
    c : float
        Positive scale of the numerator.
    Rn : (n, n) array_like
        Hermitian positive-definite interference-plus-noise covariance.

    Returns
    -------
    EigResult
    """
    h = np.asarray(h).reshape(-1)
    Rn = _finite_matrix(Rn, 'Rn', square=True)
    if Rn.shape[0] != h.size:
        raise InvalidInputError(f'Rn is {Rn.shape}, h has length {h.size}')
    if not c > 0:
        raise InvalidInputError(f'scale c must be positive, got {c}')
    if not np.any(h):
        raise InvalidInputError('h must be nonzero')
    cond = _condition(Rn)
    if cond > COND_LIMIT:
        raise IllConditionedError('Rn is singular', cond)
    x = np.linalg.solve(Rn, h)
    value = float(c * np.real(np.vdot(h, x)))
    return EigResult(value, x / np.linalg.norm(x))


def _rayleigh(L, v):
    return float(v @ (L @ v)) / float(v @ v)


def perron(L):
    """Perron root and positive eigenvector of a nonnegative matrix.

    The dense eigendecomposition supplies the starting vector; power
    iteration then polishes it until the Rayleigh quotient moves by less
    than ``1e-12`` (relative). If the dense candidate is not positive the
    iteration restarts from the all-ones vector on ``L + I``, which has the
    same Perron vector and is primitive whenever ``L`` is irreducible.

    Parameters
    ----------
    L : (n, n) array_like
        Real, entrywise nonnegative matrix.

    Returns
    -------
    EigResult
        ``value`` is the spectral radius, ``vector`` is entrywise
        nonnegative with unit norm.
    """
    L = _finite_matrix(L, 'L', square=True)
    if np.iscomplexobj(L):
        if np.any(np.imag(L) != 0):
            raise InvalidInputError('Perron matrix must be real')
        L = np.real(L)
    L = np.asarray(L, dtype=float)
    if np.any(L < 0):
        raise InvalidInputError('Perron matrix must be entrywise nonnegative')
    n = L.shape[0]
    if not np.any(L):
        v = np.ones(n) / np.sqrt(n)
        return EigResult(0.0, v)

    evals, evecs = np.linalg.eig(L)
    idx = int(np.argmax(evals.real))
    v = evecs[:, idx]
    v = v * np.exp(-1j * np.angle(v[np.argmax(np.abs(v))]))
    v = np.real(v)
    if np.all(v > -1e-12 * np.max(np.abs(v))):
        v = np.clip(v, 0.0, None)
        shift = 0.0
    else:
        v = np.ones(n)
        shift = 1.0

    A = L + shift * np.eye(n) if shift else L
    v = v / np.linalg.norm(v)
    value = _rayleigh(A, v)
    for _ in range(PERRON_MAX_ITER):
        w = A @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            raise NumericFailure('power iteration collapsed to zero')
        v = w / nw
        new_value = _rayleigh(A, v)
        if abs(new_value - value) <= PERRON_TOL * max(abs(new_value), 1.0):
            value = new_value
            break
        value = new_value
    else:
        raise NumericFailure(f'Perron iteration did not converge in {PERRON_MAX_ITER} steps')
    return EigResult(value - shift, v)


def spectral_radius(M):
    """Largest eigenvalue magnitude of a square matrix."""
    M = _finite_matrix(M, square=True)
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def solve_linear(M, b):
    """Solve ``M x = b`` for a square, well-conditioned ``M``.

    Raises
    ------
    IllConditionedError
        When the condition number of ``M`` exceeds ``1e12``.
    """
    M = _finite_matrix(M, square=True)
    b = np.asarray(b)
    if b.shape[0] != M.shape[0]:
        raise InvalidInputError(f'M is {M.shape}, b has leading dimension {b.shape[0]}')
    cond = _condition(M)
    if cond > COND_LIMIT:
        raise IllConditionedError('linear system is singular', cond)
    return np.linalg.solve(M, b)


def balance_eigensystem(Z, b, total_power):
    """Solve the extended-coupling eigensystem of an SINR balancing problem.

    The balanced powers satisfy ``q / C = Z q + b`` with ``sum(q) = P``.
    Stacking ``[q; 1]`` gives the nonnegative matrix

        [[Z,             b           ],
         [1^T Z / P,     1^T b / P   ]]

    whose Perron root is ``1 / C``.

    Returns
    -------
    level : float
        Balanced level ``C``.
    q : (K,) ndarray
        Powers summing to ``total_power``.
    """
    Z = np.asarray(Z, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    K = Z.shape[0]
    ext = np.empty((K + 1, K + 1))
    ext[:K, :K] = Z
    ext[:K, K] = b
    ext[K, :K] = Z.sum(axis=0) / total_power
    ext[K, K] = b.sum() / total_power
    res = perron(ext)
    if res.value <= 0.0 or not res.vector[K] > 0.0:
        raise NumericFailure('degenerate extended coupling matrix')
    q = res.vector[:K] / res.vector[K]
    if np.any(q <= 0.0):
        raise NumericFailure('balanced power vector is not strictly positive')
    return 1.0 / res.value, q
