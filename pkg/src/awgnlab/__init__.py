"""Sampling versus continuous observation of Gaussian channels.

Numerical lab for the mutual information lost when a continuous-time
additive white Gaussian noise channel is observed only through
integrate-and-dump samples, with and without output feedback.
"""

__version__ = "0.1.0"

from .extremes import MaxGaussQuery, Moment, rate_fit, zmax_exact, zmax_mc
from .feedmi import (feedback_mi_run, mi_feedback_continuous,
                     mi_feedback_sampled, novikov_check, rho1, rho2,
                     sup_norm_moment_check)
from .gaussmi import (MIEstimate, cor1_bound, mi_continuous_oracle,
                      mi_logdet, mi_sampled, mi_via_immse, thm1a_bound,
                      thm1b_bound)
from .simulate import (LinearFeedback, MessageScaled, PathRecord, SampleGrid,
                       euler_maruyama, integrate_and_dump)
from .spectra import (BandLimitedFlat, Tabulated, autocovariance,
                      block_covariance, gp_sample)
