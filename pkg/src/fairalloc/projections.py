"""Euclidean projections onto per-link capacity sets and the full polyhedron.

The workhorse is projection onto one link's capped simplex
``{x >= 0, sum(x) <= C}`` via the sort-and-threshold rule.  A batched variant
applies it to many links at once with arithmetic bit-identical to the 1-D
routine, which is what lets a vectorized solver and a per-node simulation of
the same algorithm agree to the last bit.  Projection onto the intersection
of all link sets uses Dykstra's alternating method with correction terms.

Every projected point is exactly feasible in floating point: after the
threshold step a repair pass removes any last-ulp excess, measured with the
same canonical summation used by feasibility checks elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Instance
from .numerics import canonical_sum, segment_sums


class ProjectionError(ValueError):
    """Raised for malformed projection inputs."""


class DykstraError(RuntimeError):
    """Cycle budget exhausted; carries the last iterate and its residual."""

    def __init__(self, message: str, last_point: np.ndarray, residual: float):
        super().__init__(message)
        self.last_point = last_point
        self.residual = residual


@dataclass(frozen=True)
class LinkSet:
    """One link's feasible set over its member routes (ascending ids)."""

    link: int
    routes: tuple[int, ...]
    capacity: float


def _enforce_cap(x: np.ndarray, cap: float) -> None:
    """Remove any rounding excess in place so ``canonical_sum(x) <= cap`` exactly."""
    for _ in range(64):
        total = canonical_sum(x)
        if total <= cap:
            return
        i = int(np.argmax(x))
        x[i] = max(x[i] - (total - cap), 0.0)
    raise ProjectionError("could not repair rounding excess")  # pragma: no cover


def project_capped_simplex(values: np.ndarray, cap: float) -> np.ndarray:
    """Project onto ``{x >= 0, sum(x) <= cap}`` by sort-and-threshold.

    When the clipped point already fits under the cap it is returned as is;
    otherwise the unique threshold ``theta > 0`` with
    ``sum(max(values - theta, 0)) == cap`` is found from the descending prefix
    sums.  The output satisfies ``canonical_sum(result) <= cap`` exactly.
    """
    y = np.asarray(values, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ProjectionError("values must be a nonempty 1-D array")
    if not (cap > 0 and np.isfinite(cap)):
        raise ProjectionError(f"capacity must be finite and > 0, got {cap}")
    x = np.maximum(y, 0.0)
    if canonical_sum(x) <= cap:
        return x
    s = np.sort(y)[::-1]
    csum = np.cumsum(s)
    ranks = np.arange(1, y.size + 1, dtype=np.float64)
    positive = s - (csum - cap) / ranks > 0
    k = y.size - 1 - int(np.argmax(positive[::-1]))
    theta = (csum[k] - cap) / (k + 1.0)
    x = np.maximum(y - theta, 0.0)
    _enforce_cap(x, cap)
    return x


def project_link(link_set: LinkSet, values: np.ndarray) -> np.ndarray:
    y = np.asarray(values, dtype=np.float64)
    if y.shape != (len(link_set.routes),):
        raise ProjectionError(
            f"link {link_set.link}: expected {len(link_set.routes)} values, got shape {y.shape}"
        )
    return project_capped_simplex(y, link_set.capacity)


class BatchedLinkProjector:
    """Per-link capped-simplex projection over a flat copy layout.

    Links are grouped by member count so each group projects as rows of one
    2-D array.  Row-wise sort, cumsum, and segmented sums are bit-identical to
    their 1-D counterparts, so ``apply`` matches ``project_capped_simplex``
    link by link, including the exact-feasibility repair.
    """

    def __init__(self, link_starts: np.ndarray, capacities: np.ndarray):
        self._groups: list[tuple[np.ndarray, np.ndarray]] = []
        sizes = np.diff(link_starts)
        for q in np.unique(sizes):
            if q == 0:
                continue
            links = np.nonzero(sizes == q)[0]
            rows = link_starts[links][:, None] + np.arange(q)[None, :]
            self._groups.append((rows, np.asarray(capacities, dtype=np.float64)[links]))

    def apply(self, flat_values: np.ndarray, out: np.ndarray) -> None:
        for rows, caps in self._groups:
            n, q = rows.shape
            y = flat_values[rows]
            x = np.maximum(y, 0.0)
            row_starts = np.arange(0, n * q, q, dtype=np.intp)
            over = segment_sums(x.ravel(), row_starts) > caps
            if np.any(over):
                yo = y[over]
                co = caps[over]
                s = np.sort(yo, axis=1)[:, ::-1]
                csum = np.cumsum(s, axis=1)
                ranks = np.arange(1, q + 1, dtype=np.float64)[None, :]
                positive = s - (csum - co[:, None]) / ranks > 0
                k = q - 1 - np.argmax(positive[:, ::-1], axis=1)
                theta = (csum[np.arange(k.size), k] - co) / (k + 1.0)
                xo = np.maximum(yo - theta[:, None], 0.0)
                for i in range(xo.shape[0]):
                    _enforce_cap(xo[i], co[i])
                x[over] = xo
            out[rows.ravel()] = x.ravel()


def feasible_extract(instance: Instance, link_values: dict[int, np.ndarray]) -> np.ndarray:
    """Per-route minimum over the per-link copy vectors.

    If every ``link_values[j]`` lies in link ``j``'s capped simplex, the
    extract is feasible for the whole instance: on each link the extract is
    dominated coordinatewise by that link's copy, and link loads are computed
    with the same monotone summation used to verify the copies.
    """
    inc = instance.incidence
    out = np.full(instance.n_routes, np.inf)
    for j in range(instance.n_links):
        members = inc.members(j)
        if members.size == 0:
            continue
        vals = np.asarray(link_values[j], dtype=np.float64)
        if vals.shape != members.shape:
            raise ProjectionError(f"link {j}: expected {members.size} values, got {vals.size}")
        np.minimum.at(out, members, vals)
    if np.any(np.isinf(out)):
        raise ProjectionError("some route traverses no link with a supplied value")
    return out


def project_polyhedron(
    instance: Instance,
    point: np.ndarray,
    tolerance: float = 1e-9,
    max_cycles: int = 100_000,
) -> np.ndarray:
    """Dykstra's alternating projection onto ``{x >= 0, loads <= capacities}``.

    Cycles through every link's capped simplex and the nonnegative orthant,
    each visit offset by that set's running correction term.  Stops once the
    iterate moves less than ``tolerance/10`` (sup norm) over a full cycle —
    a practical Cauchy certificate that the limit is within ``tolerance``.
    Raises :class:`DykstraError` with the last iterate once ``max_cycles``
    is exhausted.
    """
    inc = instance.incidence
    y = np.asarray(point, dtype=np.float64)
    if y.shape != (instance.n_routes,):
        raise ProjectionError(f"point has shape {y.shape}, expected ({instance.n_routes},)")
    x = y.copy()
    corrections = [np.zeros(inc.members(j).size) for j in range(instance.n_links)]
    orthant_correction = np.zeros_like(x)
    caps = instance.capacities
    stop = tolerance / 10.0
    residual = np.inf
    for _ in range(max_cycles):
        previous = x.copy()
        for j in range(instance.n_links):
            members = inc.members(j)
            if members.size == 0:
                continue
            w = x[members] + corrections[j]
            z = project_capped_simplex(w, caps[j])
            corrections[j] = w - z
            x[members] = z
        w = x + orthant_correction
        z = np.maximum(w, 0.0)
        orthant_correction = w - z
        x = z
        residual = float(np.max(np.abs(x - previous))) if x.size else 0.0
        if residual <= stop:
            return x
    raise DykstraError(
        f"no convergence within {max_cycles} cycles (last residual {residual:.3e})",
        last_point=x,
        residual=residual,
    )
