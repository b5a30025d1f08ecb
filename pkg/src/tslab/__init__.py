"""Thompson sampling laboratory for the linear-Gaussian bandit on a ball.

Submodules:

- ``linalg``: SPD matrix utilities and rank-one inverse maintenance.
- ``bandit``: the bandit environment, conjugate posterior and TS loop.
- ``regret``: Monte Carlo regret curves and event diagnostics.
- ``elliptical``: the generalized elliptical potential inequality.
- ``bounds``: closed-form upper and lower regret bounds.
- ``logconcave``: TS with log-concave prior and noise via MALA.
- ``cli``: the ``tslab`` experiment runner.
"""

from .bandit import BanditConfig, BanditInstance, GaussianPosterior, run_episode, simulate_batch
from .errors import TslabError
from .linalg import SpdMatrix

__all__ = [
    "BanditConfig",
    "BanditInstance",
    "GaussianPosterior",
    "SpdMatrix",
    "TslabError",
    "run_episode",
    "simulate_batch",
]
__version__ = "0.1.0"
