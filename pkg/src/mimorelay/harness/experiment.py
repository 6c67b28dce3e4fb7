"""Monte Carlo experiments over one swept parameter, with CSV output.

Every scheme at a given (axis value, trial) sees the same channel draw,
whose seed is ``trial_seed(seed, trial)``. Feasibility runs first and, when it
passes, sum-power minimization starts from its design.
"""

import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..af import af_feasibility, af_minimize
from ..channel import generate, generate_multihop, trial_seed
from ..errors import InvalidInputError, RelayError
from ..report import FEASIBLE, INFEASIBLE, UNSUPPORTED
from ..svd_relay import multihop_feasibility, multihop_minimize, svd_feasibility, svd_minimize
from .config import Config

AXES = ('sinr_target', 'distance_ratio', 'users', 'power_cap', 'hops')
SCHEMES = ('af', 'svd', 'both')
HEADER = ['axis', 'trial', 'seed', 'scheme', 'status', 't', 'balanced_level', 'p_b', 'p_r',
          'sum_power', 'outer_iters', 'inner_iters']


@dataclass
class ExperimentSpec:
    """One sweep: ``trials`` channel draws at every axis value, for each scheme.

    ``values`` are in the axis' natural unit: dB for ``sinr_target``, the
    ratio ``d_bs_rs / d_rs_ms`` for ``distance_ratio``, a user count for
    ``users``, watts (both stations) for ``power_cap`` and the hop count
    (relays + 1) for ``hops``.
    """

    scheme: str = 'both'
    axis: str = 'sinr_target'
    values: list = field(default_factory=lambda: [3.0])
    trials: int = 200
    config: Config = field(default_factory=Config)
    seed: int = 0
    pairing: bool = False
    out: str = None
    workers: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidInputError(f'scheme must be one of {SCHEMES}')
        if self.axis not in AXES:
            raise InvalidInputError(f'axis must be one of {AXES}')
        if int(self.trials) < 1:
            raise InvalidInputError('trials must be at least 1')
        self.trials = int(self.trials)
        self.values = [float(v) for v in self.values]
        if not self.values or self.values != sorted(self.values):
            raise InvalidInputError('axis values must be nonempty and sorted')
        if self.axis == 'hops' and self.scheme == 'af':
            raise InvalidInputError('the hops axis is only defined for the svd scheme')

    @property
    def schemes(self):
        if self.axis == 'hops':
            return ['svd']
        return ['af', 'svd'] if self.scheme == 'both' else [self.scheme]


@dataclass(frozen=True)
class TrialRecord:
    """Outcome of one scheme on one draw.

    ``t`` and ``balanced_level`` come from the feasibility test; powers and
    SINRs from the minimization when the test passes, otherwise from the
    last feasibility iterate. ``outer_iters`` is the feasibility outer count
    plus, for feasible draws, the minimization outer count.
    """

    axis: float
    trial: int
    seed: int
    scheme: str
    status: str
    t: float
    balanced_level: float
    p_b: float
    p_r: float
    sum_power: float
    outer_iters: int
    inner_iters: int
    sinr: tuple = ()

    @property
    def key(self):
        return (self.axis, self.trial, self.scheme)

    @property
    def feasible(self):
        return self.status == FEASIBLE


def point_config(config, axis, value):
    """Configuration at one axis value."""
    if axis == 'sinr_target':
        return config.updated(gamma=[value])
    if axis == 'distance_ratio':
        if value <= 0:
            raise InvalidInputError('distance ratio must be positive')
        total = config.get('d_bs_rs') + float(np.mean(config.get('d_rs_ms')))
        return config.updated(d_bs_rs=total * value / (1 + value), d_rs_ms=[total / (1 + value)])
    if axis == 'users':
        return config.updated(k=int(value))
    if axis == 'power_cap':
        return config.updated(p_b_max=value, p_r_max=value, p_r_max_hops=[value])
    if axis == 'hops':
        return config.updated(hops=int(value))
    raise InvalidInputError(f'unknown axis {axis!r}')


def trial_record(value, trial, seed, scheme, feas, final):
    outer = feas.outer_iterations + (final.outer_iterations if final is not feas else 0)
    inner = feas.inner_iterations + (final.inner_iterations if final is not feas else 0)
    return TrialRecord(float(value), int(trial), int(seed), scheme, final.status,
                       float(feas.t), float(feas.balanced_level), float(final.p_b),
                       float(final.p_r), float(final.sum_power), int(outer), int(inner),
                       tuple(float(x) for x in final.achieved_sinr))


def run_scheme(scheme, cfg, axis, seed, pairing=False):
    """Feasibility then (if passed) minimization of one scheme on draw ``seed``.

    Returns the ``(feasibility, final)`` reports; ``final`` is the
    feasibility report itself when the test fails.
    """
    mode = 'heuristic' if pairing else None
    if axis == 'hops':
        ms = cfg.multihop()
        mr = generate_multihop(ms, seed)
        feas = multihop_feasibility(ms, mr, pairing=mode)
        final = multihop_minimize(ms, mr, feas) if feas.feasible else feas
        return feas, final
    s = cfg.scenario()
    ch = generate(s, seed)
    if scheme == 'af':
        feas = af_feasibility(s, ch)
        final = af_minimize(s, ch, feas) if feas.feasible else feas
    else:
        feas = svd_feasibility(s, ch, pairing=mode)
        final = svd_minimize(s, ch, feas) if feas.feasible else feas
    if final is not feas and not final.feasible:
        # minimization failed after a passed test: keep its status, report test powers
        final = replace(feas, status=INFEASIBLE, outer_iterations=0,
                        inner_iterations=final.inner_iterations, message=final.message)
    return feas, final


def _trial_task(args):
    spec, value, trial = args
    cfg = point_config(spec.config, spec.axis, value)
    seed = trial_seed(spec.seed, trial)
    out = []
    for scheme in spec.schemes:
        try:
            feas, final = run_scheme(scheme, cfg, spec.axis, seed, spec.pairing)
        except RelayError:
            out.append(TrialRecord(value, trial, seed, scheme, UNSUPPORTED, math.inf, 0.0,
                                   math.nan, math.nan, math.nan, 0, 0, ()))
            continue
        out.append(trial_record(value, trial, seed, scheme, feas, final))
    return out


def run_experiment(spec):
    """Run every (axis value, trial, scheme) combination of ``spec``.

    Records are returned sorted by ``(axis, trial, scheme)``, independent of
    execution order. When ``spec.out`` is set the CSV is written there.
    """
    tasks = [(spec, value, trial) for value in spec.values for trial in range(spec.trials)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            chunks = list(pool.map(_trial_task, tasks, chunksize=4))
    else:
        chunks = [_trial_task(task) for task in tasks]
    records = sorted((r for chunk in chunks for r in chunk), key=lambda r: r.key)
    if spec.out:
        emit_csv(records, spec.out)
    return records


def avg_iterations(records):
    """Average outer-iteration count over draws, feasible and infeasible weighted by frequency.

    ``I = (n_fea / n) * mean_fea(outer) + ((n - n_fea) / n) * mean_infea(outer)``
    where ``outer`` of a feasible draw already includes the minimization stage.
    """
    records = list(records)
    if not records:
        raise InvalidInputError('no records to average')
    fea = [r.outer_iters for r in records if r.feasible]
    infea = [r.outer_iters for r in records if not r.feasible]
    n = len(records)
    total = 0.0
    if fea:
        total += len(fea) / n * float(np.mean(fea))
    if infea:
        total += len(infea) / n * float(np.mean(infea))
    return total


def paired_sum_power(records, schemes=None):
    """Mean sum power per scheme over the draws where every scheme is feasible.

    Returns ``({scheme: mean}, n_paired)`` for records of one axis value.
    """
    by_trial = {}
    for r in records:
        by_trial.setdefault(r.trial, {})[r.scheme] = r
    if schemes is None:
        schemes = sorted({r.scheme for r in records})
    paired = [t for t, rs in by_trial.items()
              if all(s in rs and rs[s].feasible for s in schemes)]
    means = {s: (float(np.mean([by_trial[t][s].sum_power for t in paired])) if paired else math.nan)
             for s in schemes}
    return means, len(paired)


def summarize(records):
    """Per axis value and scheme: feasible share, paired mean power, average iterations."""
    rows = []
    for value in sorted({r.axis for r in records}):
        at = [r for r in records if r.axis == value]
        means, n_paired = paired_sum_power(at)
        for scheme in sorted({r.scheme for r in at}):
            rs = [r for r in at if r.scheme == scheme]
            rows.append({'axis': value, 'scheme': scheme, 'trials': len(rs),
                         'feasible': sum(r.feasible for r in rs), 'paired': n_paired,
                         'mean_sum_power': means[scheme], 'avg_iterations': avg_iterations(rs)})
    return rows


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return '%.9g' % x


def format_csv(records, k=None):
    """CSV text for ``records``; ``k`` SINR columns (default: the widest record)."""
    if k is None:
        k = max((len(r.sinr) for r in records), default=0)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(HEADER + [f'sinr_{i + 1}' for i in range(k)])
    for r in sorted(records, key=lambda r: r.key):
        row = [r.axis, r.trial, r.seed, r.scheme, r.status, r.t, r.balanced_level, r.p_b,
               r.p_r, r.sum_power, r.outer_iters, r.inner_iters]
        sinr = list(r.sinr) + [''] * (k - len(r.sinr))
        writer.writerow([_fmt(x) for x in row + sinr])
    return buf.getvalue()


def emit_csv(records, path, k=None):
    """Write ``records`` to ``path`` (``'-'`` for standard output)."""
    text = format_csv(records, k)
    if path == '-':
        sys.stdout.write(text)
        return
    with open(path, 'w', encoding='utf-8', newline='') as fh:
        fh.write(text)


def parse_csv(text):
    """Records from CSV text written by :func:`format_csv`."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or header[:len(HEADER)] != HEADER:
        raise InvalidInputError('not a trial-record CSV')
    out = []
    for row in reader:
        sinr = tuple(float(x) for x in row[len(HEADER):] if x != '')
        out.append(TrialRecord(float(row[0]), int(row[1]), int(row[2]), row[3], row[4],
                               float(row[5]), float(row[6]), float(row[7]), float(row[8]),
                               float(row[9]), int(row[10]), int(row[11]), sinr))
    return out


def read_csv(path):
    with open(path, encoding='utf-8') as fh:
        return parse_csv(fh.read())
