"""Result record shared by the AF and SVD drivers."""

from dataclasses import dataclass, field

import numpy as np

FEASIBLE = 'feasible'
INFEASIBLE = 'infeasible'
MAX_ITER = 'max-iter'
UNSUPPORTED = 'unsupported'

# |x(m) - x(m-1)| threshold shared by every inner and outer loop
EPSILON = 1e-3
MAX_OUTER = 50
MAX_INNER = 200


@dataclass
class SolveReport:
    """Outcome of a feasibility test or a sum-power minimization.

    ``t`` is the epigraph optimum of the last power-allocation GP: the
    max-min inverse SINR margin for feasibility runs (targets met iff
    ``t <= 1``) and the minimized sum power for minimization runs.
    """

    status: str
    t: float
    balanced_level: float
    sum_power: float
    p_b: float
    p_r: float
    outer_iterations: int
    inner_iterations: int
    achieved_sinr: np.ndarray
    design: object = None
    t_history: list = field(default_factory=list)
    message: str = ''

    @property
    def feasible(self):
        return self.status == FEASIBLE


def meets_targets(sinr, gamma, p_b, p_r, p_b_max, p_r_max, rel_tol=1e-4, power_tol=1e-8):
    """Ground-truth acceptance of a design's verified SINRs and powers."""
    return bool(np.all(np.asarray(sinr) >= np.asarray(gamma) * (1 - rel_tol))
                and p_b <= p_b_max + power_tol and p_r <= p_r_max + power_tol)
