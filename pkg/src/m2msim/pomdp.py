"""Exact finite-horizon POMDP machinery.

A model couples an exogenous state chain with an action-conditioned
observation channel and per-(state, action) rewards.  The value function of
the finite-horizon problem is piecewise linear and convex, so every stage is
represented by a set of alpha vectors; ``solve`` builds the stages by exact
dynamic-programming backups with dominance pruning, and ``brute_force_value``
recomputes the optimum by full conditional-plan enumeration for verification.

Discounting convention: with horizon ``K`` and discount ``beta``, the reward
earned at slot ``k`` is weighted by ``beta ** (K - k - 1)``, i.e. the final
slot always carries weight 1 and earlier slots are down-weighted.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

# Stochastic-kernel checks are skipped for array objects already validated by
# an earlier model; kernels are shared across many per-device models and are
# treated as immutable once handed to a PomdpModel.
_VALIDATED_ARRAYS: "weakref.WeakValueDictionary[int, np.ndarray]" = (
    weakref.WeakValueDictionary()
)


def _already_validated(arr: np.ndarray) -> bool:
    return _VALIDATED_ARRAYS.get(id(arr)) is arr


def _mark_validated(arr: np.ndarray):
    _VALIDATED_ARRAYS[id(arr)] = arr

NO_ACCESS = "no_access"

STOCHASTIC_ATOL = 1e-12
DEFAULT_PRUNE_TOL = 1e-9
DEFAULT_STATE_CAP = 4096
DEFAULT_TREE_CAP = 10_000_000

# Fill values for padded alpha matrices used by vectorised consumers.
NEG_FILL = -1e30


class ZeroLikelihood(ValueError):
    """The observation has probability zero under the predicted belief."""


class StateSpaceTooLarge(ValueError):
    """The joint state space exceeds the configured cap."""


class PolicyTreeTooLarge(ValueError):
    """Conditional-plan enumeration would exceed the tree-count guard."""


@dataclass(frozen=True)
class PomdpModel:
    """One device's decision model.

    transition    -- (S, S) row-stochastic matrix, shared by all actions.
    observation   -- (A, S, O) array; ``observation[a, s1, o]`` is the
                     probability of symbol ``o`` given the action taken and the
                     state reached after the transition.
    rewards       -- (S, A) immediate reward for acting in a state.
    actions       -- ordered action labels; index 0 is the idle/no-access
                     action when the label equals ``NO_ACCESS``.
    """

    transition: np.ndarray
    observation: np.ndarray
    rewards: np.ndarray
    actions: tuple[str, ...] = ()

    def __post_init__(self):
        t = np.asarray(self.transition, dtype=float)
        o = np.asarray(self.observation, dtype=float)
        r = np.asarray(self.rewards, dtype=float)
        object.__setattr__(self, "transition", t)
        object.__setattr__(self, "observation", o)
        object.__setattr__(self, "rewards", r)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError("transition must be a square matrix")
        s = t.shape[0]
        if o.ndim != 3 or o.shape[1] != s:
            raise ValueError("observation must have shape (A, S, O)")
        a = o.shape[0]
        if r.shape != (s, a):
            raise ValueError(f"rewards must have shape ({s}, {a})")
        if not self.actions:
            object.__setattr__(self, "actions", tuple(f"a{i}" for i in range(a)))
        if len(self.actions) != a:
            raise ValueError("actions length must match the observation kernel")
        if not _already_validated(t):
            if np.any(t < -STOCHASTIC_ATOL) or np.any(t > 1 + STOCHASTIC_ATOL):
                raise ValueError("transition entries must lie in [0, 1]")
            if np.max(np.abs(t.sum(axis=1) - 1.0)) > STOCHASTIC_ATOL:
                raise ValueError("transition rows must sum to 1")
            _mark_validated(t)
        if not _already_validated(o):
            if np.any(o < -STOCHASTIC_ATOL) or np.any(o > 1 + STOCHASTIC_ATOL):
                raise ValueError("observation entries must lie in [0, 1]")
            if np.max(np.abs(o.sum(axis=2) - 1.0)) > STOCHASTIC_ATOL:
                raise ValueError(
                    "observation rows must sum to 1 for every (action, next-state)"
                )
            _mark_validated(o)
        if not np.all(np.isfinite(r)):
            raise ValueError("rewards must be finite")
        for i, label in enumerate(self.actions):
            if label == NO_ACCESS and np.any(r[:, i] != 0.0):
                raise ValueError("the no-access action must have zero reward in every state")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.observation.shape[0]

    @property
    def n_observations(self) -> int:
        return self.observation.shape[2]


def validate_belief(belief: np.ndarray, atol: float = STOCHASTIC_ATOL) -> np.ndarray:
    b = np.asarray(belief, dtype=float)
    if b.ndim != 1:
        raise ValueError("belief must be a vector")
    if np.any(b < -atol) or abs(b.sum() - 1.0) > atol:
        raise ValueError("belief entries must be nonnegative and sum to 1")
    return b


@dataclass(frozen=True)
class AlphaVector:
    """One linear piece of a stage value function, tagged with the action it certifies."""

    coeffs: np.ndarray
    action: int

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if not np.all(np.isfinite(c)):
            raise ValueError("alpha coefficients must be finite")
        object.__setattr__(self, "coeffs", c)


@dataclass(frozen=True)
class ValueFunctionStage:
    """Alpha-vector set representing the value function of one stage."""

    stage_index: int
    alphas: tuple[AlphaVector, ...]

    def matrix(self) -> np.ndarray:
        return np.array([a.coeffs for a in self.alphas])

    def action_tags(self) -> np.ndarray:
        return np.array([a.action for a in self.alphas], dtype=int)

    def value(self, belief: np.ndarray) -> float:
        return float(np.max(self.matrix() @ np.asarray(belief, dtype=float)))


def belief_update(belief, action: int, observation: int, model: PomdpModel) -> np.ndarray:
    """Bayes step: predict through the chain, weight by the observation likelihood, normalise.

    Raises ZeroLikelihood when the observation has zero probability under the
    prior; the caller decides the fallback.
    """
    b = validate_belief(belief)
    predicted = b @ model.transition
    unnorm = predicted * model.observation[action, :, observation]
    norm = unnorm.sum()
    if norm <= 0.0:
        raise ZeroLikelihood(
            f"observation {observation} has zero probability under action {action}"
        )
    return unnorm / norm


def _lex_order(coeffs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Indices sorting rows lexicographically by coefficients, then action."""
    keys = tuple(coeffs[:, j] for j in range(coeffs.shape[1] - 1, -1, -1))
    return np.lexsort((actions,) + keys)


def _prune_core(coeffs: np.ndarray, actions: np.ndarray, tol: float):
    """Minimal alpha set with the same pointwise maximum over the simplex (within tol).

    Fast paths (exact duplicate removal, pointwise dominance, simplex-corner
    seeding) avoid linear programs wherever possible; leftovers are settled by
    an exact feasibility LP per candidate.
    Returns (coeffs, actions) sorted lexicographically by coefficients.
    """
    n, s = coeffs.shape
    order = _lex_order(coeffs, actions)
    coeffs = coeffs[order]
    actions = actions[order]

    # Exact duplicates: keep the first (lowest action tag for equal coefficients).
    keep = np.ones(n, dtype=bool)
    same = np.all(coeffs[1:] == coeffs[:-1], axis=1)
    keep[1:] = ~same
    coeffs = coeffs[keep]
    actions = actions[keep]
    n = coeffs.shape[0]
    if n == 1:
        return coeffs, actions

    # Pointwise dominance (chunked to bound memory).
    alive = np.ones(n, dtype=bool)
    for i in range(n):
        if not alive[i]:
            continue
        ge = np.all(coeffs >= coeffs[i], axis=1)
        ge[i] = False
        ge &= alive
        if np.any(ge):
            alive[i] = False
    coeffs = coeffs[alive]
    actions = actions[alive]
    n = coeffs.shape[0]
    if n == 1:
        return coeffs, actions

    # Seed with the winner at each simplex corner.  Among ties pick the
    # lexicographically largest row (deterministic; rows are sorted ascending).
    in_w = np.zeros(n, dtype=bool)
    for state in range(s):
        col = coeffs[:, state]
        winners = np.flatnonzero(col == col.max())
        in_w[winners[-1]] = True

    undecided = [i for i in range(n) if not in_w[i]]
    kept = list(np.flatnonzero(in_w))
    while undecided:
        i = undecided[0]
        witness = _dominance_witness(coeffs[i], coeffs[kept], tol)
        if witness is None:
            undecided.pop(0)
            continue
        vals = coeffs[undecided] @ witness
        best_pos = int(np.flatnonzero(vals == vals.max())[-1])
        kept.append(undecided.pop(best_pos))

    kept_idx = np.array(sorted(kept), dtype=int)
    return coeffs[kept_idx], actions[kept_idx]


def _dominance_witness(candidate: np.ndarray, kept: np.ndarray, tol: float):
    """Belief where ``candidate`` beats every kept vector by more than ``tol``, or None."""
    s = candidate.shape[0]
    # Variables: belief (s entries) and the advantage d; maximise d.
    a_ub = np.hstack([kept - candidate[None, :], np.ones((kept.shape[0], 1))])
    b_ub = np.zeros(kept.shape[0])
    a_eq = np.hstack([np.ones((1, s)), np.zeros((1, 1))])
    res = linprog(
        c=np.concatenate([np.zeros(s), [-1.0]]),
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=[1.0],
        bounds=[(0.0, 1.0)] * s + [(None, None)],
        method="highs",
    )
    if res.status != 0 or res.x is None:
        return None
    if -res.fun <= tol:
        return None
    belief = np.clip(res.x[:s], 0.0, None)
    return belief / belief.sum()


def prune(alphas, tol: float = DEFAULT_PRUNE_TOL) -> tuple[AlphaVector, ...]:
    """Prune an alpha-vector collection to a minimal equivalent set."""
    alphas = tuple(alphas)
    if not alphas:
        raise ValueError("cannot prune an empty alpha set")
    coeffs = np.array([a.coeffs for a in alphas])
    actions = np.array([a.action for a in alphas], dtype=int)
    coeffs, actions = _prune_core(coeffs, actions, tol)
    return tuple(AlphaVector(c, int(a)) for c, a in zip(coeffs, actions))


def backup(
    next_stage: ValueFunctionStage,
    model: PomdpModel,
    reward_weight: float = 1.0,
    tol: float = DEFAULT_PRUNE_TOL,
) -> ValueFunctionStage:
    """One exact dynamic-programming backup.

    For each action, cross-sums the observation-conditioned projections of the
    next stage's alpha vectors (pruning incrementally to keep intermediate
    sets small), adds the weighted immediate reward, and prunes the union.
    """
    if not next_stage.alphas:
        raise ValueError("next stage must be non-empty")
    t = model.transition
    next_mat = next_stage.matrix()
    # A terminal (all-zero) continuation contributes nothing to any cross-sum.
    next_is_zero = not np.any(next_mat)
    pieces_coeffs = []
    pieces_actions = []
    for a in range(model.n_actions):
        cur = (reward_weight * model.rewards[:, a])[None, :]
        for obs in range(model.n_observations) if not next_is_zero else ():
            # g_i(s) = sum_s' T[s, s'] * P(obs | s', a) * alpha_i(s')
            proj = (next_mat * model.observation[a, :, obs][None, :]) @ t.T
            cur = (cur[:, None, :] + proj[None, :, :]).reshape(-1, t.shape[0])
            if cur.shape[0] > 1:
                cur, _ = _prune_core(cur, np.full(cur.shape[0], a, dtype=int), tol)
        pieces_coeffs.append(cur)
        pieces_actions.append(np.full(cur.shape[0], a, dtype=int))
    coeffs = np.vstack(pieces_coeffs)
    actions = np.concatenate(pieces_actions)
    coeffs, actions = _prune_core(coeffs, actions, tol)
    alphas = tuple(AlphaVector(c, int(a)) for c, a in zip(coeffs, actions))
    return ValueFunctionStage(next_stage.stage_index - 1, alphas)


def solve(
    model: PomdpModel,
    horizon: int,
    discount: float = 1.0,
    tol: float = DEFAULT_PRUNE_TOL,
    state_cap: int = DEFAULT_STATE_CAP,
) -> list[ValueFunctionStage]:
    """Exact value-function stages 0..horizon-1, each pruned.

    ``discount`` enters as the stage weight ``discount ** (horizon - k - 1)``
    on the immediate reward of slot ``k``; the stage-0 set evaluated at a
    belief is the optimal expected total discounted reward.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if model.n_states > state_cap:
        raise StateSpaceTooLarge(
            f"{model.n_states} states exceeds the cap of {state_cap}"
        )
    zero = ValueFunctionStage(
        horizon, (AlphaVector(np.zeros(model.n_states), 0),)
    )
    stages: list[ValueFunctionStage] = [zero]
    for k in range(horizon - 1, -1, -1):
        weight = discount ** (horizon - k - 1)
        stages.append(backup(stages[-1], model, reward_weight=weight, tol=tol))
    stages = stages[1:]
    stages.reverse()
    return stages


def best_action(stage: ValueFunctionStage, belief) -> tuple[int, float]:
    """Action tag of the maximising alpha vector; exact ties go to the lowest action index."""
    b = np.asarray(belief, dtype=float)
    mat = stage.matrix()
    dots = mat @ b
    top = dots.max()
    tags = stage.action_tags()[dots == top]
    return int(tags.min()), float(top)


def _tree_counts(n_actions: int, n_obs: int, horizon: int) -> list[int]:
    counts = [n_actions]
    for _ in range(horizon - 1):
        counts.append(n_actions * counts[-1] ** n_obs)
    return counts


def brute_force_value(
    model: PomdpModel,
    horizon: int,
    belief,
    discount: float = 1.0,
    tree_cap: int = DEFAULT_TREE_CAP,
) -> float:
    """Optimal value by enumerating every depth-``horizon`` conditional plan.

    Each plan's value vector is assembled bottom-up over all state/observation
    continuations with no pruning; the result is the maximum dot product with
    the belief.  Guarded by a plan-count cap.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    counts = _tree_counts(model.n_actions, model.n_observations, horizon)
    if sum(counts) > tree_cap:
        raise PolicyTreeTooLarge(
            f"{sum(counts)} conditional plans exceeds the cap of {tree_cap}"
        )
    b = validate_belief(belief)
    t = model.transition
    s = model.n_states
    # Depth-1 plans are bare actions executed in the final slot (weight 1).
    plans = model.rewards.T.copy()
    for depth in range(2, horizon + 1):
        weight = discount ** (depth - 1)
        new_plans = []
        for a in range(model.n_actions):
            cur = (weight * model.rewards[:, a])[None, :]
            for obs in range(model.n_observations):
                proj = (plans * model.observation[a, :, obs][None, :]) @ t.T
                cur = (cur[:, None, :] + proj[None, :, :]).reshape(-1, s)
            new_plans.append(cur)
        plans = np.vstack(new_plans)
    return float(np.max(plans @ b))
