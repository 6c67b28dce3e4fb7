"""Joint beamforming and power allocation for MIMO relay broadcast channels.

Two relaying structures are provided. ``af`` amplifies and forwards with a
scalar gain and designs BS beamformers through downlink-uplink duality at
the BS; ``svd_relay`` relays along the eigen-subchannels of the first hop
and designs RS beamformers through duality at the RS. Both allocate powers
with the geometric-programming solver in ``gp`` and are verified by
``channel.verify_sinr``.
"""

from .channel import (ChannelRealization, MultihopRealization, MultihopScenario, Scenario,
                      generate, generate_multihop, verify_sinr)
from .errors import (IllConditionedError, InfeasibleAllocation, InvalidInputError,
                     NumericFailure, RelayError, UnsupportedInstance)
from .report import SolveReport

__version__ = '0.1.0'

__all__ = ['Scenario', 'ChannelRealization', 'MultihopScenario', 'MultihopRealization',
           'generate', 'generate_multihop', 'verify_sinr', 'SolveReport', 'RelayError',
           'InvalidInputError', 'IllConditionedError', 'NumericFailure',
           'InfeasibleAllocation', 'UnsupportedInstance']
