"""Killed spectrally negative risk processes: ladder analysis and simulation."""

from .model import (JumpDistribution, ModelError, ModelSpec, NetProfit, PerturbationSpec,
                    SubordinatorSpec, mean_X, net_profit_status, nu_tail, psi_C, psi_X, psi_Z)
from .fluctuation import (LadderContext, NumericalFailure, kappa, kappa_hat, ladder_context,
                          ladder_limit_check, ladder_residual, largest_root, phi, upsilon_q)
from .pk_engine import (GridDistribution, PKParameters, h_tau, ladder_K, n_tau_pmf,
                        overshoot_tail, p_tau, pk_cdf)
from .simulator import (ConfigError, EmpiricalSummary, PathEvent, Probes, SimConfig,
                        batch_simulate, detect_modified_ladder, first_passage, occupation_time,
                        scripted_run, simulate_killed_run)

__version__ = "0.1.0"
