"""Simulation and certification of sampled-data control for a heat/ODE cascade."""

from .errors import (AllZeroTail, DegenerateFeedback, DivergenceDetected,
                     EmptyFrontier, NoCrossing, NumericalError, ParseError,
                     SpectralAbscissaTooLarge, TriggerkitError, ValidationError)
from .spectral_model import (CascadeModel, ModeData, NonlinearitySpec,
                             SpectralState, feedback_apply, forced_step,
                             lipschitz_constant, mode_coefficients,
                             reference_initial_state, reference_model, perturbation,
                             psi, semigroup_apply)
from .operator_calculus import (DecayEnvelope, alpha, c_constants, eta,
                                finite_rank_norm, gamma_estimate, j_integral,
                                q_matrix, truncated_norm, w_of_h)
from .stability_conditions import (FrontierTable, StabilityReport, beta_e,
                                   check_etc_linear, check_etc_nonlinear,
                                   check_periodic, check_petc, check_stm,
                                   frontier, theta_bound, varpi)
from .triggering import (EventTriggered, Periodic, PeriodicEvent,
                         SelfTriggered, stm_next_interval, trigger_fired)
from .simulator import IntegratorConfig, SimulationTrace, decay_fit, run, step
from .config import RunConfig, load_config

__version__ = "0.1.0"
