"""sdeldp: numerics for small-noise SDEs with rough coefficients.

Simulate dX = sqrt(eps) sigma dB + b dt by the Euler scheme, integrate the
controlled skeleton ODE, minimize control energy to evaluate rate
functions, audit the coefficient hypotheses (moduli, localized one-sided
bounds, growth), and probe rare-event decay by Monte Carlo.
"""

__version__ = "0.1.0"

from .conditions import (ConditionReport, EnvelopeSpec, ModulusSpec, OsgoodVerdict,
                         SampleConfig, check_bounded_integrability,
                         check_growth_condition, check_local_integrability,
                         check_localized_condition, check_modulus_continuity,
                         osgood_integral)
from .errors import (DivergenceError, DivergenceRateError, FieldEvaluationError,
                     SdeldpError, SingularIntegrandError, ValidationError)
from .expr import compile_expression, compile_scalar_expression, expression_field
from .fields import (CoefficientField, brownian, cubic, get_model, list_models,
                     ornstein_uhlenbeck, rotational, sqrt_drift, truncate)
from .harness import (EventSpec, LdpPoint, LdpReport, estimate_event,
                      exit_probability_experiment, ldp_curve, lemma1_experiment)
from .rates import (RateQuery, RateResult, gradient_check, minimize_path,
                    minimize_terminal, rate_lower_envelope)
from .simulate import (ExperimentConfig, NoisePath, aggregate_noise,
                       coupled_euler_gap, euler_maruyama, first_passage,
                       sample_noise, sup_distance)
from .skeleton import (ControlPath, SamplePath, energy, integrate_skeleton,
                       integrate_skeleton_euler, skeleton_gap)
