"""In-process message-passing execution of the link-by-link consensus method.

Each domain controller owns the links of one partition class, keeps replicas
of the route-owned variables for every route crossing it, and exchanges two
floats per shared route per round (its aggregate over the route's local
copies, and its local feasible minimum).  Rounds are synchronous: every node
computes from the messages of the previous round, then all new messages are
delivered at once.

Arithmetic matches the vectorized solver bit for bit: both reduce the same
operand sequences (copies ordered by route, domain, link) with the same
canonical summation, and the per-link projection and per-route prox are the
identical routines.  The only schedule difference is that a controller
applies the enforced feasible minimum one round after the solver's eager
extract, because the peer minima travel inside messages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fairness import FairnessObjective, PenaltyState, prox_values
from .model import Instance, Partition
from .numerics import canonical_sum
from .projections import project_capped_simplex
from .solvers import ConsensusIndex, initial_state
from .trace import format_value


class SimulationError(RuntimeError):
    """Raised when controller replicas diverge or inputs are malformed."""


@dataclass(frozen=True)
class RouteMessage:
    round_index: int
    sender: int
    receiver: int
    route: int
    value: float
    feasible_value: float


class OverheadMeter:
    """Counts floats actually put on the wire, per ordered domain pair."""

    def __init__(self):
        self.per_pair: dict[tuple[int, int], int] = {}
        self.per_round: dict[int, int] = {}

    def add(self, round_index: int, sender: int, receiver: int, floats: int) -> None:
        key = (sender, receiver)
        self.per_pair[key] = self.per_pair.get(key, 0) + floats
        self.per_round[round_index] = self.per_round.get(round_index, 0) + floats

    @property
    def total_floats(self) -> int:
        return sum(self.per_round.values())


@dataclass
class ControllerNode:
    """One domain's controller: local link copies plus route-variable replicas."""

    domain: int
    alpha: float
    penalty: float
    routes: np.ndarray            # routes crossing this domain, ascending
    weights: np.ndarray           # their weights, same order
    divisors: np.ndarray          # |J_r| + 1 per local route
    peers: list[tuple[int, ...]]  # other domains holding each route
    links: list[int]              # owned links, ascending
    capacities: dict[int, float]
    member_positions: dict[int, np.ndarray]  # link -> positions into self.routes
    route_slots: list[list[tuple[int, int]]]  # per route: (link, offset) pairs, link ascending
    link_values: dict[int, np.ndarray]
    link_duals: dict[int, np.ndarray]
    route_values: np.ndarray      # replicated route-owned copies
    route_duals: np.ndarray
    consensus: np.ndarray
    feasible: np.ndarray          # enforced allocation, lags the solver by one round
    own_aggregate: np.ndarray
    own_minimum: np.ndarray
    inbox: dict[tuple[int, int], tuple[float, float]] = field(default_factory=dict)

    def position_of(self, route: int) -> int:
        i = int(np.searchsorted(self.routes, route))
        if i >= self.routes.size or self.routes[i] != route:
            raise SimulationError(f"domain {self.domain} does not hold route {route}")
        return i

    def compute_round(self, round_index: int) -> list[RouteMessage]:
        """Lines of one synchronous round; returns this node's outgoing mail."""
        n = self.routes.size
        # enforce: min over every domain's latest feasible minimum for the route
        for i in range(n):
            r = int(self.routes[i])
            best = self.own_minimum[i]
            for q in self.peers[i]:
                best = min(best, self.inbox[(r, q)][1])
            self.feasible[i] = best
        # average: peer aggregates and the local one, domain-ascending order
        for i in range(n):
            r = int(self.routes[i])
            parts = np.empty(len(self.peers[i]) + 1)
            slot = 0
            placed = False
            for q in self.peers[i]:
                if not placed and self.domain < q:
                    parts[slot] = self.own_aggregate[i]
                    slot += 1
                    placed = True
                parts[slot] = self.inbox[(r, q)][0]
                slot += 1
            if not placed:
                parts[slot] = self.own_aggregate[i]
            self.consensus[i] = (canonical_sum(parts) + self.route_values[i]) / self.divisors[i]
        # dual step and projection for each owned link
        for j in self.links:
            members = self.member_positions[j]
            if members.size == 0:
                continue
            target = self.consensus[members]
            self.link_duals[j] += self.link_values[j] - target
            self.link_values[j] = project_capped_simplex(
                target - self.link_duals[j], self.capacities[j]
            )
        # replicated route-owned copy: dual step then prox
        self.route_duals += self.route_values - self.consensus
        self.route_values = prox_values(
            self.alpha, self.weights, self.consensus - self.route_duals, self.penalty
        )
        # refresh local aggregates (the payload of this round's messages)
        outgoing: list[RouteMessage] = []
        for i in range(n):
            r = int(self.routes[i])
            slots = self.route_slots[i]
            vals = np.empty(len(slots))
            for s, (j, offset) in enumerate(slots):
                vals[s] = self.link_values[j][offset]
            self.own_aggregate[i] = canonical_sum(vals)
            self.own_minimum[i] = float(np.min(vals))
            for q in self.peers[i]:
                outgoing.append(
                    RouteMessage(
                        round_index=round_index,
                        sender=self.domain,
                        receiver=q,
                        route=r,
                        value=float(self.own_aggregate[i]),
                        feasible_value=float(self.own_minimum[i]),
                    )
                )
        return outgoing


def build_controllers(
    instance: Instance,
    partition: Partition,
    objective: FairnessObjective,
    penalty: float,
) -> list[ControllerNode]:
    """Controllers in the solver's initial state, inboxes pre-seeded.

    Seeding the first round's inboxes from the equal-split initialization
    makes round ``k`` of the simulation consume exactly the aggregates the
    vectorized solver consumes at iteration ``k``.
    """
    if not (penalty > 0 and np.isfinite(penalty)):
        raise SimulationError(f"penalty must be finite and > 0, got {penalty}")
    index = ConsensusIndex(instance, partition)
    base = initial_state(index, PenaltyState(value=penalty, frozen=True))
    nodes: list[ControllerNode] = []
    inc = instance.incidence
    domain_arr = partition.domain_of_link
    for p in range(1, partition.n_domains + 1):
        routes = np.array(partition.routes_by_domain[p], dtype=np.intp)
        pos_of = {int(r): i for i, r in enumerate(routes)}
        links = sorted(partition.links_by_domain[p])
        member_positions = {}
        link_values = {}
        link_duals = {}
        for j in links:
            members = inc.members(j)
            member_positions[j] = np.array([pos_of[int(r)] for r in members], dtype=np.intp)
            lo = inc.link_starts[j]
            hi = inc.link_starts[j + 1]
            link_values[j] = base.link_values[lo:hi].copy()
            link_duals[j] = np.zeros(hi - lo)
        route_slots: list[list[tuple[int, int]]] = []
        peers: list[tuple[int, ...]] = []
        divisors = np.empty(routes.size)
        for i, r in enumerate(routes):
            r = int(r)
            slots = []
            for j in sorted(instance.routes[r].links):
                if domain_arr[j] == p:
                    offset = int(np.searchsorted(inc.members(j), r))
                    slots.append((j, offset))
            route_slots.append(slots)
            peers.append(tuple(q for q in partition.domains_of_route[r] if q not in (0, p)))
            divisors[i] = len(instance.routes[r].links) + 1
        own_aggregate = np.empty(routes.size)
        own_minimum = np.empty(routes.size)
        for i in range(routes.size):
            slots = route_slots[i]
            vals = np.array([link_values[j][offset] for j, offset in slots])
            own_aggregate[i] = canonical_sum(vals)
            own_minimum[i] = float(np.min(vals))
        nodes.append(
            ControllerNode(
                domain=p,
                alpha=objective.alpha,
                penalty=penalty,
                routes=routes,
                weights=objective.weights[routes],
                divisors=divisors,
                peers=peers,
                links=list(links),
                capacities={j: float(instance.capacities[j]) for j in links},
                member_positions=member_positions,
                route_slots=route_slots,
                link_values=link_values,
                link_duals=link_duals,
                route_values=base.route_values[routes].copy(),
                route_duals=np.zeros(routes.size),
                consensus=base.consensus[routes].copy(),
                feasible=base.extract[routes].copy(),
                own_aggregate=own_aggregate,
                own_minimum=own_minimum,
            )
        )
    # seed the first round's inboxes from the initialization aggregates
    by_domain = {node.domain: node for node in nodes}
    for node in nodes:
        for i, r in enumerate(node.routes):
            for q in node.peers[i]:
                by_domain[q].inbox[(int(r), node.domain)] = (
                    float(node.own_aggregate[i]),
                    float(node.own_minimum[i]),
                )
    return nodes


def run_round(
    controllers: list[ControllerNode],
    round_index: int,
    meter: OverheadMeter | None = None,
    log: list[RouteMessage] | None = None,
) -> None:
    """One synchronous round: all nodes compute, then all messages deliver."""
    outgoing: list[RouteMessage] = []
    for node in controllers:
        outgoing.extend(node.compute_round(round_index))
    for node in controllers:
        node.inbox.clear()
    by_domain = {node.domain: node for node in controllers}
    for msg in outgoing:
        by_domain[msg.receiver].inbox[(msg.route, msg.sender)] = (msg.value, msg.feasible_value)
        if meter is not None:
            meter.add(round_index, msg.sender, msg.receiver, 2)
        if log is not None:
            log.append(msg)


def inject_weight_update(controllers: list[ControllerNode], weights: np.ndarray) -> None:
    """Swap in new positive route weights without touching solver state."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise SimulationError("weights must be positive and finite")
    for node in controllers:
        if node.routes.size and int(node.routes.max()) >= w.size:
            raise SimulationError("weight vector shorter than the highest route id")
        node.weights = w[node.routes]


def gather_allocation(controllers: list[ControllerNode], n_routes: int) -> np.ndarray:
    """Collect the enforced allocation, checking replicas agree exactly."""
    out = np.full(n_routes, np.nan)
    for node in controllers:
        for i, r in enumerate(node.routes):
            r = int(r)
            if np.isnan(out[r]):
                out[r] = node.feasible[i]
            elif out[r] != node.feasible[i]:
                raise SimulationError(f"route {r}: feasible replicas diverged")
    if np.any(np.isnan(out)):
        raise SimulationError("some route is held by no controller")
    return out


def gather_route_replicas(controllers: list[ControllerNode], n_routes: int, attr: str) -> np.ndarray:
    """Collect a replicated per-route array (consensus / route_values / route_duals),
    raising if any two domains disagree bitwise."""
    out = np.full(n_routes, np.nan)
    for node in controllers:
        arr = getattr(node, attr)
        for i, r in enumerate(node.routes):
            r = int(r)
            if np.isnan(out[r]):
                out[r] = arr[i]
            elif out[r] != arr[i]:
                raise SimulationError(f"route {r}: {attr} replicas diverged")
    return out


def gather_link_values(controllers: list[ControllerNode], instance: Instance) -> np.ndarray:
    """Flatten per-link copies back into the instance's incidence layout."""
    inc = instance.incidence
    flat = np.full(inc.n_copies, np.nan)
    for node in controllers:
        for j in node.links:
            lo = inc.link_starts[j]
            hi = inc.link_starts[j + 1]
            flat[lo:hi] = node.link_values[j]
    if np.any(np.isnan(flat)):
        raise SimulationError("some link is owned by no controller")
    return flat


@dataclass(frozen=True)
class OverheadReport:
    rounds: int
    floats_per_round: int
    total_floats: int
    per_pair: dict[tuple[int, int], int]


def measure_overhead(
    instance: Instance,
    partition: Partition,
    objective: FairnessObjective,
    penalty: float,
    rounds: int,
) -> OverheadReport:
    """Run the simulation and report measured wire traffic.

    Per round, domain ``p`` sends two floats to every other domain for each
    route they share, so the per-round total is
    ``2 * sum_r holders(r) * (holders(r) - 1)``.
    """
    controllers = build_controllers(instance, partition, objective, penalty)
    meter = OverheadMeter()
    for k in range(rounds):
        run_round(controllers, round_index=k, meter=meter)
    index = ConsensusIndex(instance, partition)
    return OverheadReport(
        rounds=rounds,
        floats_per_round=index.floats_per_round,
        total_floats=meter.total_floats,
        per_pair=dict(meter.per_pair),
    )


def export_message_log(log: list[RouteMessage], path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("round,sender,receiver,route,value,feasible_value\n")
        for m in log:
            fh.write(
                f"{m.round_index},{m.sender},{m.receiver},{m.route},"
                f"{format_value(m.value)},{format_value(m.feasible_value)}\n"
            )
