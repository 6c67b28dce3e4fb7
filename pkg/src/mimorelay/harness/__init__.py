"""Configuration, Monte Carlo experiments, CSV output and the command line."""

from .config import Config, load_config, parse_config
from .experiment import (ExperimentSpec, TrialRecord, avg_iterations, emit_csv, format_csv,
                         paired_sum_power, parse_csv, read_csv, run_experiment, summarize)

__all__ = ['Config', 'load_config', 'parse_config', 'ExperimentSpec', 'TrialRecord',
           'avg_iterations', 'emit_csv', 'format_csv', 'paired_sum_power', 'parse_csv',
           'read_csv', 'run_experiment', 'summarize']
