"""Discrete-time simulator for sliced machine-type random access.

Devices pick resource blocks under noisy occupancy sensing via an exact
finite-horizon POMDP policy, and a per-period dead-beat controller moves RBs
between slices to track weighted rate shares.
"""

from .config import (
    SCHEMES,
    ConfigError,
    SimConfig,
    config_from_dict,
    config_hash,
    config_to_dict,
    load_config,
    preset_config,
    preset_names,
)
from .control import (
    AllocationDelta,
    ControllerState,
    rb_correction,
    reallocate,
    smooth_rate,
)
from .engine import (
    MetricsRecord,
    SimResult,
    Simulation,
    evolve_states,
    gen_observation,
    run_simulation,
    stationary_distribution,
)
from .pomdp import (
    AlphaVector,
    PolicyTreeTooLarge,
    PomdpModel,
    StateSpaceTooLarge,
    ValueFunctionStage,
    ZeroLikelihood,
    backup,
    belief_update,
    best_action,
    brute_force_value,
    prune,
    solve,
)
from .radio import (
    MtcDevice,
    PreambleConfig,
    ResourceBlockParams,
    build_pomdp,
    discounted_total_reward,
    instantaneous_rate,
    linear_gain,
    path_loss_db,
    preamble_collision_prob,
    slot_reward,
)
from .slicing import (
    AllRatesZero,
    PhysicalCell,
    RatioBoundWarning,
    SliceMetrics,
    VirtualNetwork,
    compute_ratios,
    period_obtained_rate,
    ratio_bound_check,
    slice_network,
)

__version__ = "0.1.0"
