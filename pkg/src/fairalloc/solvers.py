"""Consensus solvers for weighted alpha-fair rate allocation.

Two ADMM variants share the same proximal and projection primitives:

* ``c-admm`` — centralized splitting that alternates the utility prox with a
  Dykstra projection onto the full capacity polyhedron;
* ``fd-admm`` — link-by-link consensus form that keeps one copy of a route's
  rate per traversed link plus one owned by the route itself, projects each
  link's copies onto that link's capped simplex independently, and averages.
  The per-route minimum over link copies is feasible at *every* iteration, so
  the method can be stopped at any round with a usable allocation.

A dual-gradient baseline (``lagr``) with the classic multiplicative step rule
is included for comparison; its iterates are generally infeasible until
convergence.

Bit-reproducibility: every order-sensitive reduction goes through
``numerics.segment_sums``/``canonical_sum`` on copies ordered by
(route, domain, link).  Running one round here and one synchronous round of
the message-passing simulator from the same state yields bit-identical
values, because both reduce identical operand sequences with identical trees.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .fairness import (
    FairnessObjective,
    PenaltyState,
    adapt_penalty,
    default_objective,
    prox_values,
    utility,
)
from .model import Instance, Partition, is_feasible, link_loads, single_domain
from .numerics import canonical_sum, segment_mins, segment_sums
from .projections import BatchedLinkProjector, project_polyhedron
from .trace import TraceRow, relative_gap, violated_percentage

ALGORITHMS = ("fd-admm", "c-admm", "lagr")


class SolverError(RuntimeError):
    """Raised for invalid solver configuration or non-convergent references."""


@dataclass(frozen=True)
class Residuals:
    primal: float
    dual: float


@dataclass(frozen=True)
class SolverConfig:
    penalty: float | str = "adaptive"
    adapt_tau: int = 30
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    max_iters: int = 100_000
    time_budget: float | None = None
    dykstra_tol: float = 1e-10
    record_trace: bool = True
    record_allocations: bool = False

    def __post_init__(self):
        if isinstance(self.penalty, str):
            if self.penalty != "adaptive":
                raise SolverError(f"penalty must be a positive number or 'adaptive', got {self.penalty!r}")
        elif not (self.penalty > 0 and np.isfinite(self.penalty)):
            raise SolverError(f"penalty must be > 0, got {self.penalty!r}")
        if self.tol_primal < 0 or self.tol_dual < 0:
            raise SolverError("tolerances must be >= 0")
        if self.max_iters < 1:
            raise SolverError("max_iters must be >= 1")
        if self.adapt_tau < 0:
            raise SolverError("adapt_tau must be >= 0")
        if self.time_budget is not None and self.time_budget <= 0:
            raise SolverError("time_budget must be > 0 or None")


class ConsensusIndex:
    """Precomputed layout for the link-by-link consensus iteration.

    Copies live in two orders: the incidence order (link, route) used for
    projection and loads, and a permutation sorted by (route, domain, link)
    whose contiguous segments are exactly the per-(route, domain) aggregation
    groups a domain controller would transmit.
    """

    def __init__(self, instance: Instance, partition: Partition):
        inc = instance.incidence
        self.instance = instance
        self.partition = partition
        self.n_routes = instance.n_routes
        self.n_links = instance.n_links
        self.capacities = instance.capacities
        self.copy_route = inc.copy_route
        self.copy_link = inc.copy_link
        self.link_starts = inc.link_starts
        self.n_copies = inc.n_copies

        domain_arr = np.asarray(partition.domain_of_link, dtype=np.intp)
        domain_of_copy = domain_arr[self.copy_link] if self.n_copies else np.zeros(0, dtype=np.intp)
        # primary sort key route, then domain, then link: contiguous (r, p) groups
        self.perm_rd = np.lexsort((self.copy_link, domain_of_copy, self.copy_route))
        route_rd = self.copy_route[self.perm_rd]
        dom_rd = domain_of_copy[self.perm_rd]
        new_group = np.ones(self.n_copies, dtype=bool)
        new_group[1:] = (route_rd[1:] != route_rd[:-1]) | (dom_rd[1:] != dom_rd[:-1])
        self.rd_starts = np.nonzero(new_group)[0]
        self.group_route = route_rd[self.rd_starts]
        self.group_domain = dom_rd[self.rd_starts]
        new_route_group = np.ones(self.group_route.size, dtype=bool)
        new_route_group[1:] = self.group_route[1:] != self.group_route[:-1]
        self.route_group_starts = np.nonzero(new_route_group)[0]
        new_route = np.ones(self.n_copies, dtype=bool)
        new_route[1:] = route_rd[1:] != route_rd[:-1]
        self.route_starts_rd = np.nonzero(new_route)[0]
        if self.route_group_starts.size != self.n_routes:
            raise SolverError("every route must traverse at least one link")
        sizes = np.diff(np.append(self.route_starts_rd, self.n_copies))
        self.route_sizes = sizes
        self.route_divisor = (sizes + 1).astype(np.float64)
        self.bottlenecks = segment_mins(self.capacities[self.copy_link[self.perm_rd]], self.route_starts_rd)
        self.projector = BatchedLinkProjector(self.link_starts, self.capacities)
        # each domain holding a route sends 2 floats to every other holder
        holders = np.array([len(ds) - 1 for ds in partition.domains_of_route])
        self.floats_per_round = int(2 * np.sum(holders * (holders - 1)))


@dataclass
class FdState:
    """Mutable iterate of the consensus method (copy layout from ``index``)."""

    index: ConsensusIndex
    link_values: np.ndarray
    link_duals: np.ndarray
    route_values: np.ndarray
    route_duals: np.ndarray
    consensus: np.ndarray
    extract: np.ndarray
    sent_values: np.ndarray
    sent_mins: np.ndarray
    penalty: PenaltyState
    iteration: int = 0
    residuals: Residuals = field(default_factory=lambda: Residuals(np.inf, np.inf))

    def clone(self) -> "FdState":
        return FdState(
            index=self.index,
            link_values=self.link_values.copy(),
            link_duals=self.link_duals.copy(),
            route_values=self.route_values.copy(),
            route_duals=self.route_duals.copy(),
            consensus=self.consensus.copy(),
            extract=self.extract.copy(),
            sent_values=self.sent_values.copy(),
            sent_mins=self.sent_mins.copy(),
            penalty=self.penalty,
            iteration=self.iteration,
            residuals=self.residuals,
        )


@dataclass(frozen=True)
class DomainOutboxes:
    """Messages produced by one round: one (aggregate, minimum) pair per
    (route, owning domain) group, delivered to every other domain sharing
    the route."""

    index: ConsensusIndex
    values: np.ndarray
    mins: np.ndarray

    def messages(self) -> Iterator[tuple[int, int, int, float, float]]:
        """Yield ``(sender, receiver, route, value, feasible_value)``."""
        domains_of_route = self.index.partition.domains_of_route
        for g in range(self.index.group_route.size):
            r = int(self.index.group_route[g])
            p = int(self.index.group_domain[g])
            for q in domains_of_route[r]:
                if q != 0 and q != p:
                    yield p, q, r, float(self.values[g]), float(self.mins[g])


def initial_state(index: ConsensusIndex, penalty: PenaltyState) -> FdState:
    """Equal-split start: each link divides its capacity among member routes.

    Every per-link copy vector then lies inside its capped simplex, so the
    extract is feasible from iteration zero; all duals start at zero, which
    pins the all-copy dual sum of every route at zero for the whole run.
    """
    sizes = np.diff(index.link_starts).astype(np.float64)
    link_values = index.capacities[index.copy_link] / sizes[index.copy_link]
    vals_rd = link_values[index.perm_rd]
    sent_values = segment_sums(vals_rd, index.rd_starts)
    sent_mins = segment_mins(vals_rd, index.rd_starts)
    extract = segment_mins(sent_mins, index.route_group_starts)
    return FdState(
        index=index,
        link_values=link_values,
        link_duals=np.zeros(index.n_copies),
        route_values=extract.copy(),
        route_duals=np.zeros(index.n_routes),
        consensus=extract.copy(),
        extract=extract,
        sent_values=sent_values,
        sent_mins=sent_mins,
        penalty=penalty,
    )


def fdadmm_round(state: FdState, objective: FairnessObjective) -> tuple[FdState, DomainOutboxes]:
    """One synchronous round: average, dual step, project links, prox route.

    The averaging consumes the (route, domain) aggregates computed at the end
    of the previous round — exactly the payload a domain would have received
    from its peers — so the vectorized loop and the message-passing execution
    see identical operand orders.
    """
    idx = state.index
    lam = state.penalty.value
    totals = segment_sums(state.sent_values, idx.route_group_starts)
    consensus = (totals + state.route_values) / idx.route_divisor
    # dual residual carries the penalty weight 1/lam (the multiplier change is
    # (z_new - z_old)/lam); without it a tiny lam reports convergence while
    # the iterate is still far from the optimum
    dual_res = float(np.max(np.abs(consensus - state.consensus))) / lam if consensus.size else 0.0

    spread = consensus[idx.copy_route]
    state.link_duals += state.link_values - spread
    idx.projector.apply(spread - state.link_duals, out=state.link_values)
    state.route_duals += state.route_values - consensus
    state.route_values = prox_values(
        objective.alpha, objective.weights, consensus - state.route_duals, lam
    )

    vals_rd = state.link_values[idx.perm_rd]
    state.sent_values = segment_sums(vals_rd, idx.rd_starts)
    state.sent_mins = segment_mins(vals_rd, idx.rd_starts)
    state.extract = segment_mins(state.sent_mins, idx.route_group_starts)
    # consensus disagreement over every copy of every route: the per-link
    # copies and the prox copy (dropping the latter can report convergence
    # while the utility block is still moving)
    primal = float(np.max(np.abs(state.route_values - consensus)))
    if idx.n_copies:
        primal = max(primal, float(np.max(np.abs(state.link_values - consensus[idx.copy_route]))))
    state.consensus = consensus
    state.iteration += 1
    state.residuals = Residuals(primal=primal, dual=dual_res)
    return state, DomainOutboxes(index=idx, values=state.sent_values, mins=state.sent_mins)


# ---------------------------------------------------------------------------
# centralized splitting

@dataclass
class CadmmState:
    x: np.ndarray
    z: np.ndarray
    dual: np.ndarray
    extract: np.ndarray
    penalty: PenaltyState
    iteration: int = 0
    residuals: Residuals = field(default_factory=lambda: Residuals(np.inf, np.inf))

    def clone(self) -> "CadmmState":
        return CadmmState(
            x=self.x.copy(),
            z=self.z.copy(),
            dual=self.dual.copy(),
            extract=self.extract.copy(),
            penalty=self.penalty,
            iteration=self.iteration,
            residuals=self.residuals,
        )


def _scale_to_feasible(instance: Instance, point: np.ndarray) -> np.ndarray:
    """Uniformly shrink a point until every link load fits its capacity exactly."""
    x = np.maximum(np.asarray(point, dtype=np.float64), 0.0)
    caps = instance.capacities
    loads = link_loads(instance, x)
    ratio = float(np.max(loads / caps, initial=1.0))
    if ratio > 1.0:
        x = x / ratio
    for _ in range(64):
        if np.all(link_loads(instance, x) <= caps):
            return x
        x = x * (1.0 - 4e-16)
    raise SolverError("could not scale point to exact feasibility")  # pragma: no cover


def equal_split_extract(instance: Instance) -> np.ndarray:
    """The allocation a freshly initialized solver deploys before any round:
    each link divides its capacity equally among its routes and every route
    takes the minimum over its links.  Strictly positive and feasible."""
    index = ConsensusIndex(instance, single_domain(instance))
    sizes = np.diff(index.link_starts).astype(np.float64)
    link_values = index.capacities[index.copy_link] / sizes[index.copy_link]
    return segment_mins(link_values[index.perm_rd], index.route_starts_rd)


def initial_cadmm_state(instance: Instance, penalty: PenaltyState) -> CadmmState:
    extract = equal_split_extract(instance)
    return CadmmState(
        x=extract.copy(),
        z=extract.copy(),
        dual=np.zeros(instance.n_routes),
        extract=extract,
        penalty=penalty,
    )


def cadmm_step(
    state: CadmmState,
    instance: Instance,
    objective: FairnessObjective,
    dykstra_tol: float = 1e-10,
) -> CadmmState:
    """One iteration: prox of the utility, project onto the polyhedron, dual step."""
    lam = state.penalty.value
    x = prox_values(objective.alpha, objective.weights, state.z - state.dual, lam)
    z = project_polyhedron(instance, x + state.dual, tolerance=dykstra_tol)
    state.dual += x - z
    state.residuals = Residuals(
        primal=float(np.max(np.abs(x - z))),
        dual=float(np.max(np.abs(z - state.z))) / lam,
    )
    state.x = x
    state.z = z
    state.extract = _scale_to_feasible(instance, z)
    state.iteration += 1
    return state


# ---------------------------------------------------------------------------
# dual-gradient baseline

@dataclass
class LagrState:
    x: np.ndarray
    multipliers: np.ndarray
    iteration: int = 0
    residuals: Residuals = field(default_factory=lambda: Residuals(np.inf, np.inf))

    def clone(self) -> "LagrState":
        return LagrState(
            x=self.x.copy(),
            multipliers=self.multipliers.copy(),
            iteration=self.iteration,
            residuals=self.residuals,
        )


def initial_lagr_state(instance: Instance) -> LagrState:
    return LagrState(x=np.zeros(instance.n_routes), multipliers=np.ones(instance.n_links))


def lagr_step(state: LagrState, index: ConsensusIndex, objective: FairnessObjective) -> LagrState:
    """Dual gradient step: price-optimal rates, then the multiplicative
    multiplier update ``u <- u - (u / 2C) * (C - load)``.

    Multipliers stay strictly positive because the update factor is
    ``(C + load) / 2C > 0``.  Requires ``alpha > 0`` (at ``alpha == 0`` the
    per-route subproblem is unbounded whenever a route's price falls below
    its weight).
    """
    if objective.alpha == 0.0:
        raise SolverError("dual-gradient baseline needs alpha > 0")
    prices = segment_sums(
        state.multipliers[index.copy_link[index.perm_rd]], index.route_starts_rd
    )
    if objective.alpha == 1.0:
        x = objective.weights / prices
    else:
        x = (objective.weights / prices) ** (1.0 / objective.alpha)
    loads = link_loads(index.instance, x)
    caps = index.capacities
    state.multipliers = state.multipliers - (state.multipliers / (2.0 * caps)) * (caps - loads)
    state.residuals = Residuals(
        primal=float(max(0.0, np.max(loads - caps, initial=0.0))),
        dual=float(np.max(np.abs(x - state.x))),
    )
    state.x = x
    state.iteration += 1
    return state


# ---------------------------------------------------------------------------
# driver

@dataclass
class SolveResult:
    allocation: np.ndarray
    trace: list[TraceRow]
    converged: bool
    iterations: int
    algorithm: str
    state: object
    best_feasible: np.ndarray | None
    best_utility: float
    residuals: Residuals
    allocations: list[np.ndarray] | None = None


def _initial_penalty(config: SolverConfig, objective: FairnessObjective) -> PenaltyState:
    if config.penalty == "adaptive":
        if objective.alpha == 0.0:
            raise SolverError("adaptive penalty needs alpha > 0; pass a numeric penalty")
        return PenaltyState(value=1.0, tau=config.adapt_tau, frozen=False)
    return PenaltyState(value=float(config.penalty), tau=config.adapt_tau, frozen=True)


def solve(
    instance: Instance,
    partition: Partition | None = None,
    algorithm: str = "fd-admm",
    config: SolverConfig | None = None,
    objective: FairnessObjective | None = None,
    warm_state=None,
    reference: np.ndarray | None = None,
    event_index: int = 0,
) -> SolveResult:
    """Run one algorithm to its stopping criterion, budget, or iteration cap.

    ``warm_state`` (a prior ``SolveResult.state``) continues from that
    iterate; the penalty re-adapts from scratch because each call counts as a
    fresh execution.  The returned allocation is the final iterate's feasible
    extract when converged, otherwise the best feasible point seen — except
    for ``lagr``, which reports its last iterate even when infeasible, as a
    dual method would in operation.
    """
    if algorithm not in ALGORITHMS:
        raise SolverError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    config = config or SolverConfig()
    objective = objective or default_objective(instance)
    if objective.weights.size != instance.n_routes:
        raise SolverError("objective weight count does not match instance routes")
    if algorithm == "lagr" and objective.alpha == 0.0:
        raise SolverError("dual-gradient baseline needs alpha > 0")

    start = time.perf_counter()
    reference_value = utility(objective, reference) if reference is not None else float("nan")
    penalty = _initial_penalty(config, objective)
    adaptive = not penalty.frozen

    def _handoff_penalty(state, dual_arrays) -> None:
        # duals are penalty-scaled multipliers: keep the multipliers intact
        # when the configured penalty differs from the one the state ran with
        carried = state.penalty.value
        target = carried if config.penalty == "adaptive" else float(config.penalty)
        if target != carried:
            for arr in dual_arrays(state):
                arr *= target / carried
        state.penalty = PenaltyState(value=target, tau=config.adapt_tau, frozen=not adaptive)

    if algorithm == "fd-admm":
        if warm_state is not None:
            state = warm_state.clone()
            index = state.index
        else:
            index = ConsensusIndex(instance, partition or single_domain(instance))
            state = initial_state(index, penalty)
        _handoff_penalty(state, lambda s: (s.link_duals, s.route_duals))
        message_floats = index.floats_per_round
    elif algorithm == "c-admm":
        state = warm_state.clone() if warm_state is not None else initial_cadmm_state(instance, penalty)
        _handoff_penalty(state, lambda s: (s.dual,))
        index = None
        message_floats = 0
    else:
        state = warm_state.clone() if warm_state is not None else initial_lagr_state(instance)
        index = ConsensusIndex(instance, partition or single_domain(instance))
        message_floats = 0

    bottlenecks = None
    if adaptive and algorithm in ("fd-admm", "c-admm"):
        bn_index = index if index is not None else ConsensusIndex(instance, single_domain(instance))
        bottlenecks = bn_index.bottlenecks

    trace: list[TraceRow] = []
    allocations: list[np.ndarray] | None = [] if config.record_allocations else None
    best_alloc: np.ndarray | None = None
    best_util = float("-inf")
    converged = False

    for k in range(config.max_iters):
        if adaptive and algorithm in ("fd-admm", "c-admm"):
            new_pen = adapt_penalty(state.penalty, k, state.extract, objective, bottlenecks)
            if new_pen.value != state.penalty.value:
                ratio = new_pen.value / state.penalty.value
                # duals are penalty-scaled multipliers; keep the multipliers
                if algorithm == "fd-admm":
                    state.link_duals *= ratio
                    state.route_duals *= ratio
                else:
                    state.dual *= ratio
            state.penalty = new_pen

        if algorithm == "fd-admm":
            fdadmm_round(state, objective)
            allocation_k = state.extract
        elif algorithm == "c-admm":
            cadmm_step(state, instance, objective, dykstra_tol=config.dykstra_tol)
            allocation_k = state.extract
        else:
            lagr_step(state, index, objective)
            allocation_k = state.x

        if allocations is not None:
            allocations.append(allocation_k.copy())
        if is_feasible(instance, allocation_k):
            util_k = utility(objective, allocation_k)
            if util_k > best_util:
                best_util = util_k
                best_alloc = allocation_k.copy()
        else:
            util_k = utility(objective, allocation_k) if np.all(allocation_k >= 0) else float("nan")

        if config.record_trace:
            trace.append(
                TraceRow(
                    iteration=state.iteration,
                    event=event_index,
                    algorithm=algorithm,
                    objective_value=util_k,
                    gap=relative_gap(util_k, reference_value),
                    primal_residual=state.residuals.primal,
                    dual_residual=state.residuals.dual,
                    violated_pct=violated_percentage(instance, allocation_k),
                    message_floats=message_floats,
                    wall_time=time.perf_counter() - start,
                )
            )

        if state.residuals.primal <= config.tol_primal and state.residuals.dual <= config.tol_dual:
            converged = True
            break
        if config.time_budget is not None and time.perf_counter() - start >= config.time_budget:
            break

    if algorithm == "lagr":
        allocation = state.x.copy()
    elif converged or best_alloc is None:
        allocation = state.extract.copy()
    else:
        allocation = best_alloc.copy()

    return SolveResult(
        allocation=allocation,
        trace=trace,
        converged=converged,
        iterations=state.iteration,
        algorithm=algorithm,
        state=state,
        best_feasible=best_alloc,
        best_utility=best_util,
        residuals=state.residuals,
        allocations=allocations,
    )


def reference_solution(
    instance: Instance,
    objective: FairnessObjective | None = None,
    tol: float = 1e-6,
    max_iters: int = 500_000,
    warm_state=None,
    return_result: bool = False,
):
    """High-accuracy allocation used as the comparison baseline.

    Single-domain consensus run to residuals ``tol``; adaptive penalty for
    ``alpha > 0``, fixed penalty 1 at ``alpha == 0``.  Deterministic: equal
    inputs produce identical traces and allocations.  Raises
    :class:`SolverError` if the tolerance is not reached.
    """
    obj = objective or default_objective(instance)
    config = SolverConfig(
        penalty="adaptive" if obj.alpha > 0 else 1.0,
        tol_primal=tol,
        tol_dual=tol,
        max_iters=max_iters,
    )
    result = solve(
        instance,
        partition=None,
        algorithm="fd-admm",
        config=config,
        objective=obj,
        warm_state=warm_state,
    )
    if not result.converged:
        raise SolverError(
            f"reference solve stalled: residuals {result.residuals} after {result.iterations} iterations"
        )
    return result if return_result else result.allocation
