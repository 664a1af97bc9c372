"""Tabular offline safe policy improvement for POMDPs with finite-state controllers."""
from .bounds import SafetyReport, epsilon, sufficiency_count, weissman_check, zeta_bound
from .data import CountTable, Dataset, collect_dataset, count, load_dataset, save_dataset
from .environments import ENVIRONMENTS, EnvSpec, get_env, make_cheese_maze, make_tiger, make_voicemail
from .evaluation import Performance, cvar, normalized_improvement, rollout_performance
from .experiment import EvalReport, ExperimentConfig, improve, run_experiment
from .fsc import Fsc, lift_fsc, load_fsc, make_k_window_fsc, save_fsc
from .mdp import MissingDataError, TabularMdp, policy_evaluation, value_iteration
from .oracle import build_oracle_finite_history_mdp
from .pomdp import ModelError, Pomdp, load_pomdp, save_pomdp
from .spi import (BootstrapSet, SpibbConfig, basic_rl_policy, bootstrapped_set, estimate_mle_mdp,
                  spibb_policy)

__version__ = "0.1.0"
