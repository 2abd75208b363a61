"""Implicit robust controlled invariant sets for linear systems with polytopic
disturbances, computed in closed form from Mealy-machine disturbance feedback."""
from .errors import (ConfigError, ContractBreach, DimensionMismatch, DimensionTooHigh, ExplosionLimit,
                     NotControllable, NotNilpotent, NumericalFailure, RcisError, ReachSetExceedsCap,
                     StateCountExceedsCap, UnboundedCsub, UnboundedDirection, UnboundedPolytope)
from .linsys import (FeedbackTransform, LinearSystem, apply_prefeedback, chain_of_integrators,
                     deadbeat_gain, lane_keeping_standin, lift_nonmeasurable)
from .mealy import MealyMachine, dominates, find_dominant, simple_loop, tree_machine
from .oracle import invariance_audit, maximal_rcis, mc_volume_ratio
from .polytope import Box, Polytope, bounding_box, contains, project, remove_redundancy
from .rcis import ImplicitRcis, compute_implicit_rcis, explicit_projection, membership
from .supervisor import qp_solve, simulate, supervise, supervise_explicit

__version__ = "0.1.0"
