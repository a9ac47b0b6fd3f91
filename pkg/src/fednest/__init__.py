"""Federated nested optimisation: FedNest and its variants on problems with closed-form answers."""
from .config import RunConfig, load_config, run_config
from .estimator import FedNestOptimizer
from .exceptions import (ConfigError, ContractViolation, DivergenceError, FedNestError, InvalidSpec,
                         NotAvailable, NumericFault, PayloadError, UnsupportedConfiguration)
from .hypergrad import (HypergradEstimate, IhgpConfig, bias_budget, expected_ihgp_operator, fedihgp,
                        indirect_grad, local_ihgp)
from .inner import InnerStepConfig, fedinn_round, lfedinn_round
from .ledger import RoundLedger, epoch_round_budget
from .oracles import (NoiseLevels, ParamPair, ProblemConstants, ProblemInstance, sample_hessvec,
                      sample_inner_grad, sample_jacvec, sample_outer_grads)
from .orchestrator import run_algorithm, run_fedavg_s, run_fednest, run_nonalternating, run_variant
from .outer import (OuterStepConfig, fedout_compositional_round, fedout_round,
                    fedout_single_level_round, lfedout_round)
from .rng import RngStream
from .schedule import ScheduleConfig, ScheduleConstants, schedule_constants, stepsize_schedule
from .trace import CSV_HEADER, RunTrace, write_trace
from .zoo import (BilevelQuadraticSpec, CompositionalSpec, MinimaxQuadraticSpec, SingleLevelSpec,
                  analytic_hypergradient, make_bilevel_quadratic, make_compositional,
                  make_minimax_quadratic, make_single_level)

__version__ = "0.1.0"
