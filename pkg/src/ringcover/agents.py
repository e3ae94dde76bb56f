"""Agent positions, service cost, targets, and analytic diagnostics.

Each agent serves the slice between its bar and the next one. The service
cost of a configuration is the density-weighted integral of a move cost
f(p_i, q) over each slice. For the squared-distance cost the per-slice
optimum is the slice centroid and the gradient/Hessian have closed forms;
a generic built-in cost goes through multi-start descent plus a boundary
sweep. The sign-condition box test certifies existence of a gradient zero,
and the radial second moment about a point backs the stability diagnostic
reported by the simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .geometry import TWO_PI, moment_table, radial_moment, region_integral
from .partition import PartitionState


class DegenerateSubregionError(ValueError):
    """Requested a centroid/target on a slice with no workload."""


class TargetSearchError(RuntimeError):
    """No descent start converged while locating a slice optimum."""


@dataclass(frozen=True)
class CostModel:
    """Move-cost f(p, q) between an agent at p and an event at q.

    Kinds:
      squared_distance   f = |p - q|^2 (closed-form optimum: the centroid)
      generic_builtin    f = |p - q|^2 + beta * |p - q|^4 with
                         beta = parameters[0] (default 0.25); beta = 0
                         reproduces the squared-distance cost through the
                         generic code path.
    """

    kind: str = "squared_distance"
    parameters: tuple = ()

    @property
    def is_squared_distance(self) -> bool:
        return self.kind == "squared_distance"

    def _beta(self) -> float:
        return self.parameters[0] if self.parameters else 0.25

    def value(self, p, x, y):
        dx = np.asarray(x, dtype=float) - p[0]
        dy = np.asarray(y, dtype=float) - p[1]
        d2 = dx * dx + dy * dy
        if self.kind == "squared_distance":
            return d2
        if self.kind == "generic_builtin":
            return d2 + self._beta() * d2 * d2
        raise ValueError(f"unknown cost kind {self.kind!r}")

    def grad(self, p, x, y):
        """Gradient of f with respect to p, componentwise over events."""
        dx = p[0] - np.asarray(x, dtype=float)
        dy = p[1] - np.asarray(y, dtype=float)
        if self.kind == "squared_distance":
            return 2.0 * dx, 2.0 * dy
        if self.kind == "generic_builtin":
            d2 = dx * dx + dy * dy
            factor = 2.0 + 4.0 * self._beta() * d2
            return factor * dx, factor * dy
        raise ValueError(f"unknown cost kind {self.kind!r}")


@dataclass
class AgentState:
    """Agent positions, the tracking gain, and the current targets."""

    positions: np.ndarray
    kappa_p: float
    targets: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2).copy()
        if self.kappa_p <= 0.0:
            raise ValueError("kappa_p must be positive")
        if self.targets is not None:
            self.targets = np.asarray(self.targets, dtype=float).reshape(-1, 2).copy()

    @property
    def n(self) -> int:
        return self.positions.shape[0]


def slice_bounds(state: PartitionState, i: int):
    """(phi_lo, phi_hi) of slice i in wrapped coordinates."""
    wrapped = state.wrapped
    return float(wrapped[i]), float(wrapped[(i + 1) % state.n])


def _slice_span(phi_lo: float, phi_hi: float) -> float:
    span = phi_hi - phi_lo
    if phi_hi < phi_lo:
        span += TWO_PI
    return span


def all_centroids(state: PartitionState, region, density) -> np.ndarray:
    """Density-weighted centroids of all slices, shape (N, 2)."""
    table = moment_table(region, density)
    moments = table.slice_moments(state.wrapped)
    mass = moments[0]
    if np.any(mass <= 0.0):
        bad = int(np.argmin(mass))
        raise DegenerateSubregionError(f"slice {bad} has no workload")
    return np.stack([moments[1] / mass, moments[2] / mass], axis=1)


def centroid(state: PartitionState, region, density, i: int) -> np.ndarray:
    """Centroid of slice i."""
    table = moment_table(region, density)
    moments = table.slice_moments(state.wrapped)[:, i]
    if moments[0] <= 0.0:
        raise DegenerateSubregionError(f"slice {i} has no workload")
    return np.array([moments[1] / moments[0], moments[2] / moments[0]])


def subregion_cost(state: PartitionState, region, density, cost_model: CostModel,
                   i: int, position, rel_tol: float = 1e-8) -> float:
    """Service cost of slice i for an agent at `position` (adaptive quadrature)."""
    phi_lo, phi_hi = slice_bounds(state, i)
    return region_integral(region, density, phi_lo, phi_hi, "cost",
                           cost_model=cost_model, position=np.asarray(position, float),
                           rel_tol=rel_tol)


def total_cost(partition_state: PartitionState, agent_state: AgentState, region,
               density, cost_model: CostModel, rel_tol: float = 1e-8) -> float:
    """Total service cost: sum of per-slice costs at the agents' positions."""
    if agent_state.n != partition_state.n:
        raise ValueError("agent and partition states disagree on N")
    return sum(
        subregion_cost(partition_state, region, density, cost_model, i,
                       agent_state.positions[i], rel_tol)
        for i in range(partition_state.n)
    )


def squared_distance_cost(partition_state: PartitionState, positions, region, density) -> float:
    """Closed-form total cost for the squared-distance model via the moment table.

    Expands |p - q|^2 into tabulated moments; used by the simulation logger
    and validated against the quadrature path in the tests.
    """
    table = moment_table(region, density)
    moments = table.slice_moments(partition_state.wrapped)
    p = np.asarray(positions, dtype=float).reshape(-1, 2)
    norms = np.sum(p * p, axis=1)
    return float(np.sum(moments[3] - 2.0 * (p[:, 0] * moments[1] + p[:, 1] * moments[2])
                        + norms * moments[0]))


def gradient_at(partition_state: PartitionState, region, density,
                cost_model: CostModel, i: int, position,
                rel_tol: float = 1e-8) -> np.ndarray:
    """Gradient of the slice-i cost at an arbitrary probe position."""
    position = np.asarray(position, dtype=float)
    if cost_model.is_squared_distance:
        table = moment_table(region, density)
        moments = table.slice_moments(partition_state.wrapped)[:, i]
        mass = moments[0]
        c = np.array([moments[1] / mass, moments[2] / mass])
        return 2.0 * mass * (position - c)
    phi_lo, phi_hi = slice_bounds(partition_state, i)
    gx = region_integral(region, density, phi_lo, phi_hi, "cost_grad_x",
                         cost_model=cost_model, position=position, rel_tol=rel_tol)
    gy = region_integral(region, density, phi_lo, phi_hi, "cost_grad_y",
                         cost_model=cost_model, position=position, rel_tol=rel_tol)
    return np.array([gx, gy])


def cost_gradient(partition_state: PartitionState, agent_state: AgentState, region,
                  density, cost_model: CostModel, i: int,
                  rel_tol: float = 1e-8) -> np.ndarray:
    """Gradient of the total cost with respect to agent i's position."""
    return gradient_at(partition_state, region, density, cost_model, i,
                       agent_state.positions[i], rel_tol)


def control_input(agent_state: AgentState, i: int) -> np.ndarray:
    """Velocity command driving agent i toward its target."""
    if agent_state.targets is None:
        raise ValueError("targets are not set")
    return -agent_state.kappa_p * (agent_state.positions[i] - agent_state.targets[i])


def _point_in_slice(region, phi_lo: float, span: float, point) -> bool:
    if not region.contains(point):
        return False
    theta = math.atan2(point[1] - region.origin[1], point[0] - region.origin[0])
    offset = (theta - phi_lo) % TWO_PI
    return offset <= span


def _boundary_points(region, phi_lo: float, span: float, per_edge: int = 16):
    """Deterministic sweep of the slice boundary: two arcs plus two bars."""
    ts = (np.arange(per_edge) + 0.5) / per_edge
    thetas = phi_lo + span * ts
    pts = []
    for curve in (region.inner, region.outer):
        r = curve.radius(thetas)
        pts.append(np.stack([r * np.cos(thetas), r * np.sin(thetas)], axis=1))
    for angle in (phi_lo, phi_lo + span):
        r_in = region.inner.radius(angle)
        r_out = region.outer.radius(angle)
        r = r_in + (r_out - r_in) * ts
        pts.append(np.stack([r * np.cos(angle), r * np.sin(angle)], axis=1))
    return np.concatenate(pts, axis=0)


def optimal_target(partition_state: PartitionState, region, density,
                   cost_model: CostModel, i: int, rel_tol: float = 1e-8) -> np.ndarray:
    """Best serving position for slice i.

    Squared distance reduces analytically to the centroid. A generic cost is
    searched with nine descent starts on a 3x3 polar grid of the slice plus a
    64-point boundary sweep; the candidate with the least slice cost wins.
    """
    if cost_model.is_squared_distance:
        return centroid(partition_state, region, density, i)

    phi_lo, phi_hi = slice_bounds(partition_state, i)
    span = _slice_span(phi_lo, phi_hi)
    if span <= 0.0:
        raise DegenerateSubregionError(f"slice {i} has no angular extent")

    def cost_at(p):
        return subregion_cost(partition_state, region, density, cost_model, i, p,
                              rel_tol=rel_tol)

    def grad_at(p):
        return gradient_at(partition_state, region, density, cost_model, i, p,
                           rel_tol=rel_tol)

    candidates = []
    residuals = []
    for frac_theta in (0.25, 0.5, 0.75):
        theta = phi_lo + span * frac_theta
        r_in = region.inner.radius(theta)
        r_out = region.outer.radius(theta)
        for frac_r in (0.25, 0.5, 0.75):
            r = r_in + (r_out - r_in) * frac_r
            start = np.array([r * math.cos(theta), r * math.sin(theta)])
            result = minimize(cost_at, start, jac=grad_at, method="BFGS",
                              options={"gtol": 1e-8})
            residuals.append(float(np.linalg.norm(result.jac)))
            if result.success and _point_in_slice(region, phi_lo, span, result.x):
                candidates.append((float(result.fun), result.x))

    if not candidates:
        raise TargetSearchError("no interior descent converged; residual gradient "
                                f"norms: {sorted(residuals)}")

    for point in _boundary_points(region, phi_lo, span):
        candidates.append((cost_at(point), point))

    best = min(candidates, key=lambda item: item[0])
    return np.asarray(best[1], dtype=float)


def miranda_box_test(partition_state: PartitionState, region, density,
                     cost_model: CostModel, i: int, box,
                     boundary_samples: int = 64, rel_tol: float = 1e-8) -> bool:
    """Boundary sign certificate for a gradient zero inside an axis-aligned box.

    box = ((a_lo, a_hi), (b_lo, b_hi)). The box is mapped onto the unit
    square; the test passes iff the slice-cost gradient has positive inner
    product with the outward parameter z at every boundary sample. A true
    result certifies (at sample resolution) that the gradient vanishes
    somewhere in the box; false never claims nonexistence.
    """
    (a_lo, a_hi), (b_lo, b_hi) = box
    if a_hi <= a_lo or b_hi <= b_lo:
        raise ValueError("box sides must have positive length")
    scale = 0.5 * np.array([a_hi - a_lo, b_hi - b_lo])
    center = 0.5 * np.array([a_hi + a_lo, b_hi + b_lo])

    ts = np.arange(boundary_samples) * (4.0 / boundary_samples)
    for t in ts:
        edge, frac = divmod(t, 1.0)
        u = 2.0 * frac - 1.0
        if edge == 0:
            z = np.array([u, -1.0])
        elif edge == 1:
            z = np.array([1.0, u])
        elif edge == 2:
            z = np.array([-u, 1.0])
        else:
            z = np.array([-1.0, -u])
        point = scale * z + center
        g = gradient_at(partition_state, region, density, cost_model, i, point,
                        rel_tol=rel_tol)
        if float(g @ z) <= 0.0:
            return False
    return True


def radial_second_moment_about(region, density, theta: float, point,
                               rel_tol: float = 1e-8) -> float:
    """Radial integral of |s - q|^2 * rho * r along the ray at `theta`.

    Expanded into three weighted radial moments; equals the direct quadrature
    of the squared distance along the ray.
    """
    s = np.asarray(point, dtype=float)
    m_plain = radial_moment(region, density, theta, "plain", rel_tol=rel_tol)
    m_x = radial_moment(region, density, theta, "x", rel_tol=rel_tol)
    m_y = radial_moment(region, density, theta, "y", rel_tol=rel_tol)
    m_r2 = radial_moment(region, density, theta, "r2", rel_tol=rel_tol)
    return m_r2 + float(s @ s) * m_plain - 2.0 * (s[0] * m_x + s[1] * m_y)


def cost_hessian(partition_state: PartitionState, agent_state: AgentState, region,
                 density, cost_model: CostModel, i: int,
                 rel_tol: float = 1e-8, fd_step: float = 1e-5):
    """(2x2 Hessian of the slice cost, rank) at agent i's position.

    Squared distance is exactly 2 * m_i * I. Generic costs use central
    differences of the gradient. Rank counts singular values above 1e-8
    relative to the largest one.
    """
    if cost_model.is_squared_distance:
        table = moment_table(region, density)
        mass = float(table.slice_moments(partition_state.wrapped)[0, i])
        hessian = 2.0 * mass * np.eye(2)
    else:
        p = agent_state.positions[i]
        hessian = np.empty((2, 2))
        for axis in range(2):
            step = np.zeros(2)
            step[axis] = fd_step * max(1.0, float(np.linalg.norm(p)))
            g_plus = gradient_at(partition_state, region, density, cost_model, i,
                                 p + step, rel_tol=rel_tol)
            g_minus = gradient_at(partition_state, region, density, cost_model, i,
                                  p - step, rel_tol=rel_tol)
            hessian[:, axis] = (g_plus - g_minus) / (2.0 * step[axis])
        hessian = 0.5 * (hessian + hessian.T)
    singular = np.linalg.svd(hessian, compute_uv=False)
    rank = int(np.sum(singular > 1e-8 * singular[0])) if singular[0] > 0 else 0
    return hessian, rank
