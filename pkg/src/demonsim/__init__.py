"""Simulation and verification of demon-involved fluctuation theorems."""

__version__ = "0.1.0"

from .thermo import (DOWN, UP, Distribution, PulsePrep, StateSpace,
                     ThermalContext, beta_from_prep_angle, context_from_prep_angle,
                     equilibrium_distribution, kl_divergence, mutual_information,
                     shannon_entropy, two_level)
from .measurement import ErrorModel, MeasurementOutcomeTable, error_from_pulse, measure
from .protocols import (ControlledDistributions, FeedbackProtocol, IonCompositeModel,
                        apply_control, identity_protocol, ion_composite_protocol,
                        make_protocol, sideband_transfer_prob, state_flip_protocol,
                        szilard_protocol, work_of_step)
from .ledger import EntropyLedger, entropy_productions, stochastic_entropy_changes
from .engine import (FtResult, OutcomeAtom, enumerate_outcomes, exact_expectation,
                     ft_exponential_average)
from .accounting import WorkReport, coarse_grained_check, efficacies, ensemble_report
from .montecarlo import Estimate, TrajectoryBatch, estimate, ft_estimate, sample_trajectories
