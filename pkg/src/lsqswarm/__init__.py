"""Continuous-time distributed least-squares solvers over agent networks."""

from __future__ import annotations

from .errors import *  # noqa: F401,F403
from .numerics import least_squares_oracle, spectral_verify
from .partitioning import make_case1, make_case2, make_homogeneous
from .simulation import Classification, RunRecord, SimConfig, estimate_rate, simulate
from .topology import standard_double_layer, standard_grid

__version__ = "0.1.0"
