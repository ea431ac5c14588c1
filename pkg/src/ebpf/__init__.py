"""Event-based particle filtering for remote state estimation."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .errors import (ConfigError, EBPFError, EmptyMask, EmptyParticleSet, NonDiagonalCovariance,
                     NotReached, SingularCovariance, ToleranceNotMet)
from .filter import (APFConfig, FilterKind, ParticleSet, cross_entropy, posterior_log_density,
                     propagate_secondary, resample_categorical, step, step_apf_fa, step_bpf)
from .gaussian import (Box, Gaussian, GaussianMixture, JointGaussian, box_probability, condition,
                       mixture_from_box, product)
from .horizon import (HorizonChoice, HorizonCost, TriggerProbabilities, first_trigger_pmf,
                      heuristic_horizon, quantile_horizon, tc_forward_difference, tc_value,
                      theorem1_lower_bound)
from .likelihood import (AnalyticLikelihood, MixtureLikelihood, MonteCarloLikelihood, log_complement,
                         log_likelihood, make_evaluator)
from .model import (BenchmarkModel, LinearGaussianModel, StateSpaceModel, joint_gaussian_at,
                    make_model, simulate)
from .rng import Streams
from .sim import (EventLogRecord, OpenLoop, PeriodicDownlink, Precompute, SimConfig, SimSummary,
                  expected_particle_count, precompute_from_prior, run)
from .trigger import Event, NoEvent, TriggerKind, TriggerRule, build_set, decide, ibt_center
