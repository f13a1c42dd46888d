"""Small dense constrained trajectory optimizer over fleet input sequences.

Problems are posed by single shooting: the decision variable is an N-step
input sequence z of shape (N, n_agents, 2) and predicted states are
eliminated by Euler rollout from a fixed initial fleet state. The objective
is a weighted quadratic deviation from a target input sequence plus
optional stage costs on the predicted states; constraints are box bounds
per decision entry, inequality residuals g(z) >= 0 on predicted states
(separation and wall margins), and equality residuals h(z) = 0.

Method: augmented-Lagrangian outer loop over the residual constraints with
a projected quasi-Newton inner minimizer (L-BFGS-B) over the box. All
gradients are analytic, assembled by one reverse sweep through the rollout
per evaluation. Distance margins enter as squared-distance residuals
scaled to meter units, (d^2 - delta^2) / (2 delta), which stays smooth at
coincident points and makes feas_tol read as a length tolerance.

The solver is deterministic: identical problem, config, and warm start
produce identical iterates (wall_time excepted).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import Bounds, minimize

from .dynamics import FleetInput, rollout_poses
from .errors import InvalidProblemError

__all__ = [
    "SolverConfig",
    "SolveResult",
    "NlpProblem",
    "PairwiseMarginBlock",
    "WallMarginBlock",
    "TerminalRestBlock",
    "FormationTrackingCost",
    "SoftSeparationCost",
    "solve",
    "gradient_check",
]

_MU_MAX = 1e8
# Reduction factor the constraint violation must beat per outer iteration,
# else the penalty grows.
_VIOLATION_DECREASE = 0.25


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and iteration budgets for the augmented-Lagrangian solver."""

    feas_tol: float = 1e-6
    stat_tol: float = 1e-4
    max_outer: int = 30
    max_inner: int = 200
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    multiplier_bound: float = 1e8

    def __post_init__(self):
        if not (
            self.feas_tol > 0
            and self.stat_tol > 0
            and self.max_outer > 0
            and self.max_inner > 0
            and self.penalty_init > 0
            and self.multiplier_bound > 0
        ):
            raise ValueError("solver tolerances and budgets must be positive")
        if not self.penalty_growth > 1:
            raise ValueError("penalty_growth must exceed 1")


@dataclass
class SolveResult:
    """Best iterate plus feasibility/stationarity diagnostics.

    status is one of "optimal", "feasible-suboptimal", "infeasible",
    "iteration-limit". status == "optimal" implies max violations
    <= feas_tol and stationarity <= stat_tol. multipliers/penalty hold the
    final dual state so a caller solving a near-identical problem next
    can warm-start the outer loop.
    """

    z: np.ndarray
    status: str
    objective: float
    max_ineq_violation: float
    max_eq_violation: float
    stationarity: float
    iterations: int
    outer_iterations: int
    wall_time: float
    multipliers: tuple[np.ndarray, np.ndarray] | None = None
    penalty: float = 0.0

    @property
    def inputs(self) -> tuple[FleetInput, ...]:
        return tuple(FleetInput(step) for step in self.z)

    @property
    def max_violation(self) -> float:
        return max(self.max_ineq_violation, self.max_eq_violation)

    @property
    def feasible(self) -> bool:
        return self.status in ("optimal", "feasible-suboptimal")


def _pair_incidence(n_agents: int, iu, ju) -> np.ndarray:
    """(n, n_pairs) signed incidence matrix scattering pair terms to agents."""
    M = np.zeros((n_agents, iu.size))
    M[iu, np.arange(iu.size)] = 1.0
    M[ju, np.arange(ju.size)] = -1.0
    return M


class PairwiseMarginBlock:
    """Inequality residuals: inter-agent separation margin at one predicted step.

    Residual per pair (i < j): (d_ij^2 - delta^2) / (2 delta), in meters.
    """

    kind = "ineq"

    def __init__(self, step: int, min_distance: float, n_agents: int):
        self.step = step
        self.delta = float(min_distance)
        self.iu, self.ju = np.triu_indices(n_agents, 1)
        self.size = self.iu.size
        self._incidence = _pair_incidence(n_agents, self.iu, self.ju)

    def residuals(self, states, z):
        p = states[self.step, :, :2]
        diff = p[self.iu] - p[self.ju]
        return (np.einsum("ij,ij->i", diff, diff) - self.delta**2) / (2.0 * self.delta)

    def add_weighted_jacobian(self, states, z, w, dstates, dz):
        p = states[self.step, :, :2]
        diff = p[self.iu] - p[self.ju]
        g = (w / self.delta)[:, None] * diff
        dstates[self.step, :, :2] += self._incidence @ g


class WallMarginBlock:
    """Inequality residuals: wall clearance margin at one predicted step.

    4 * n residuals ordered (x - x_min, x_max - x, y - y_min, y_max - y),
    each group over all agents, each minus the required clearance.
    """

    kind = "ineq"

    def __init__(self, step: int, arena, clearance: float, n_agents: int):
        self.step = step
        self.arena = tuple(float(v) for v in arena)
        self.clearance = float(clearance)
        self.n = n_agents
        self.size = 4 * n_agents

    def residuals(self, states, z):
        x_min, x_max, y_min, y_max = self.arena
        px = states[self.step, :, 0]
        py = states[self.step, :, 1]
        return np.concatenate(
            [px - x_min, x_max - px, py - y_min, y_max - py]
        ) - self.clearance

    def add_weighted_jacobian(self, states, z, w, dstates, dz):
        n = self.n
        dstates[self.step, :, 0] += w[:n] - w[n : 2 * n]
        dstates[self.step, :, 1] += w[2 * n : 3 * n] - w[3 * n :]


class TerminalRestBlock:
    """Equality residuals: translational velocity of the last input, per agent."""

    kind = "eq"

    def __init__(self, n_agents: int):
        self.step = None
        self.size = n_agents

    def residuals(self, states, z):
        return z[-1, :, 0].copy()

    def add_weighted_jacobian(self, states, z, w, dstates, dz):
        dz[-1, :, 0] += w


class FormationTrackingCost:
    """Stage cost: squared position error against references at steps 1..N."""

    def __init__(self, refs: np.ndarray, weight: float):
        # refs has shape (N, n, 2), aligned with predicted states 1..N
        self.refs = np.asarray(refs, dtype=float)
        self.weight = float(weight)

    def value(self, states, z):
        err = states[1:, :, :2] - self.refs
        return self.weight * float(np.einsum("kij,kij->", err, err))

    def add_gradient(self, states, z, dstates, dz):
        err = states[1:, :, :2] - self.refs
        dstates[1:, :, :2] += (2.0 * self.weight) * err


class SoftSeparationCost:
    """Stage cost: hinge^2 penalty on pairs closer than a soft margin."""

    def __init__(self, margin: float, weight: float, n_agents: int):
        self.margin = float(margin)
        self.weight = float(weight)
        self.iu, self.ju = np.triu_indices(n_agents, 1)
        self._incidence = _pair_incidence(n_agents, self.iu, self.ju)

    def _gaps(self, states):
        p = states[1:, :, :2]
        diff = p[:, self.iu] - p[:, self.ju]
        dist = np.sqrt(np.einsum("kij,kij->ki", diff, diff))
        gap = np.maximum(0.0, self.margin - dist)
        return diff, dist, gap

    def value(self, states, z):
        if self.iu.size == 0:
            return 0.0
        _, _, gap = self._gaps(states)
        return self.weight * float(np.sum(gap * gap))

    def add_gradient(self, states, z, dstates, dz):
        if self.iu.size == 0:
            return
        diff, dist, gap = self._gaps(states)
        safe = np.maximum(dist, 1e-12)
        coef = (-2.0 * self.weight) * (gap / safe)
        contrib = coef[:, :, None] * diff
        dstates[1:, :, :2] += np.einsum("np,kpj->knj", self._incidence, contrib)


class NlpProblem:
    """Least-deviation problem over an N-step fleet input sequence.

    Parameters
    ----------
    x0 : (n, 3) array
        Fixed initial fleet poses (single shooting root).
    horizon : int
        Number of input steps N >= 1.
    dt : float
        Euler step shared with the plant.
    lb, ub : array-like
        Box bounds, broadcastable to (N, n, 2).
    target, weights : array-like
        Quadratic deviation term sum(weights * (z - target)^2),
        broadcastable to (N, n, 2).
    stage_costs : sequence
        Objects with value(states, z) and add_gradient(states, z, dstates, dz).
    blocks : sequence
        Constraint blocks with kind in {"ineq", "eq"}, residuals(...) and
        add_weighted_jacobian(...). Inequalities are g(z) >= 0.
    """

    def __init__(
        self,
        x0: np.ndarray,
        horizon: int,
        dt: float,
        lb,
        ub,
        target,
        weights,
        stage_costs=(),
        blocks=(),
    ):
        self.x0 = np.asarray(x0, dtype=float)
        if self.x0.ndim != 2 or self.x0.shape[1] != 3:
            raise ValueError("x0 must have shape (n, 3)")
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.horizon = int(horizon)
        self.n_agents = self.x0.shape[0]
        self.dt = float(dt)
        shape = (self.horizon, self.n_agents, 2)
        self.lb = np.broadcast_to(np.asarray(lb, dtype=float), shape).copy()
        self.ub = np.broadcast_to(np.asarray(ub, dtype=float), shape).copy()
        if np.any(self.lb > self.ub):
            raise ValueError("inconsistent box bounds")
        self.target = np.broadcast_to(np.asarray(target, dtype=float), shape).copy()
        self.weights = np.broadcast_to(np.asarray(weights, dtype=float), shape).copy()
        self.stage_costs = tuple(stage_costs)
        self.ineq = tuple(b for b in blocks if b.kind == "ineq")
        self.eq = tuple(b for b in blocks if b.kind == "eq")
        self.n_ineq = sum(b.size for b in self.ineq)
        self.n_eq = sum(b.size for b in self.eq)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.horizon, self.n_agents, 2)

    @property
    def dim(self) -> int:
        return self.horizon * self.n_agents * 2

    def rollout(self, z: np.ndarray) -> np.ndarray:
        return rollout_poses(self.x0, z, self.dt)

    def objective(self, z: np.ndarray, states=None) -> float:
        if states is None and self.stage_costs:
            states = self.rollout(z)
        dev = z - self.target
        val = float(np.sum(self.weights * dev * dev))
        for cost in self.stage_costs:
            val += cost.value(states, z)
        return val

    def constraint_values(self, z: np.ndarray, states=None):
        """(g, h) residual vectors; empty arrays when absent."""
        if states is None:
            states = self.rollout(z)
        g = (
            np.concatenate([b.residuals(states, z) for b in self.ineq])
            if self.ineq
            else np.empty(0)
        )
        h = (
            np.concatenate([b.residuals(states, z) for b in self.eq])
            if self.eq
            else np.empty(0)
        )
        return g, h

    def violations(self, z: np.ndarray, states=None) -> tuple[float, float]:
        """Max inequality violation and max |equality residual| at z."""
        g, h = self.constraint_values(z, states)
        vg = float(np.max(-g, initial=0.0))
        vh = float(np.max(np.abs(h), initial=0.0))
        return vg, vh


def _forward_with_trig(problem, z):
    """Rollout that also returns the per-step heading trig used by each
    Euler step, so the backward sweep does not recompute it."""
    N, n = problem.horizon, problem.n_agents
    dt = problem.dt
    states = np.empty((N + 1, n, 3))
    states[0] = problem.x0
    cos_t = np.empty((N, n))
    sin_t = np.empty((N, n))
    for k in range(N):
        th = states[k, :, 2]
        c = np.cos(th)
        s = np.sin(th)
        cos_t[k] = c
        sin_t[k] = s
        v = z[k, :, 0]
        states[k + 1, :, 0] = states[k, :, 0] + dt * v * c
        states[k + 1, :, 1] = states[k, :, 1] + dt * v * s
        states[k + 1, :, 2] = th + dt * z[k, :, 1]
    return states, cos_t, sin_t


def _adjoint_sweep(problem, states, z, dstates, dz, trig=None):
    """Fold per-state gradients back onto the inputs through the rollout.

    dstates[k] holds direct d/dX_k contributions for k = 0..N; dz holds
    direct d/dz contributions and receives the total gradient in place.
    """
    dt = problem.dt
    lam = dstates[problem.horizon].copy()
    for k in range(problem.horizon - 1, -1, -1):
        if trig is not None:
            c, s = trig[0][k], trig[1][k]
        else:
            th = states[k, :, 2]
            c, s = np.cos(th), np.sin(th)
        v = z[k, :, 0]
        dz[k, :, 0] += dt * (lam[:, 0] * c + lam[:, 1] * s)
        dz[k, :, 1] += dt * lam[:, 2]
        lam[:, 2] += dt * v * (lam[:, 1] * c - lam[:, 0] * s)
        lam += dstates[k]
    return dz


def _objective_and_grad(problem, z, states):
    dev = z - problem.target
    val = float(np.sum(problem.weights * dev * dev))
    dz = 2.0 * problem.weights * dev
    dstates = np.zeros_like(states)
    for cost in problem.stage_costs:
        val += cost.value(states, z)
        cost.add_gradient(states, z, dstates, dz)
    return val, dstates, dz


def _al_value_and_grad(z_flat, problem, lam_g, lam_h, mu):
    """Augmented Lagrangian (PHR form for g >= 0) and its analytic gradient."""
    z = z_flat.reshape(problem.shape)
    states, cos_t, sin_t = _forward_with_trig(problem, z)
    val, dstates, dz = _objective_and_grad(problem, z, states)

    offset = 0
    for block in problem.ineq:
        g = block.residuals(states, z)
        lam = lam_g[offset : offset + block.size]
        shifted = np.maximum(0.0, lam - mu * g)
        val += float(np.sum(shifted * shifted - lam * lam)) / (2.0 * mu)
        block.add_weighted_jacobian(states, z, -shifted, dstates, dz)
        offset += block.size
    offset = 0
    for block in problem.eq:
        h = block.residuals(states, z)
        lam = lam_h[offset : offset + block.size]
        val += float(np.sum(0.5 * mu * h * h - lam * h))
        block.add_weighted_jacobian(states, z, mu * h - lam, dstates, dz)
        offset += block.size

    _adjoint_sweep(problem, states, z, dstates, dz, trig=(cos_t, sin_t))
    return val, dz.ravel()


def _lagrangian_grad(problem, z, lam_g, lam_h):
    states = problem.rollout(z)
    _, dstates, dz = _objective_and_grad(problem, z, states)
    offset = 0
    for block in problem.ineq:
        block.add_weighted_jacobian(
            states, z, -lam_g[offset : offset + block.size], dstates, dz
        )
        offset += block.size
    offset = 0
    for block in problem.eq:
        block.add_weighted_jacobian(
            states, z, -lam_h[offset : offset + block.size], dstates, dz
        )
        offset += block.size
    _adjoint_sweep(problem, states, z, dstates, dz)
    return dz


def _projected_gradient_norm(problem, z, grad):
    stepped = np.clip(z - grad, problem.lb, problem.ub)
    return float(np.max(np.abs(stepped - z), initial=0.0))


def solve(
    problem: NlpProblem,
    warm_start=None,
    cfg: SolverConfig | None = None,
    warm_multipliers=None,
    warm_penalty: float | None = None,
) -> SolveResult:
    """Solve the problem, returning the best iterate with honest status.

    Parameters
    ----------
    problem : NlpProblem
    warm_start : (N, n, 2) array or None
        Starting input sequence; clipped to the box. Defaults to the
        clipped target. A feasible warm start is never beaten by a worse
        returned point (final candidate comparison).
    cfg : SolverConfig
    warm_multipliers, warm_penalty
        Final dual state of a previous, structurally identical solve;
        ignored when the sizes do not match.

    An iteration budget exhaustion returns the best iterate found with
    status "iteration-limit" (or "infeasible" once the penalty is maxed
    out); it never raises.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()

    if warm_start is not None:
        z0 = np.clip(np.asarray(warm_start, dtype=float), problem.lb, problem.ub)
        if z0.shape != problem.shape:
            raise ValueError(f"warm start shape {z0.shape} != {problem.shape}")
    else:
        z0 = np.clip(problem.target, problem.lb, problem.ub)

    states0 = problem.rollout(z0)
    g0, h0 = problem.constraint_values(z0, states0)
    f0 = problem.objective(z0, states0)
    if not (
        np.isfinite(f0) and np.all(np.isfinite(g0)) and np.all(np.isfinite(h0))
    ):
        raise InvalidProblemError(
            "objective or constraints are non-finite at the start point"
        )

    lam_g = np.zeros(problem.n_ineq)
    lam_h = np.zeros(problem.n_eq)
    mu = cfg.penalty_init
    if warm_multipliers is not None:
        wg, wh = warm_multipliers
        if wg.shape == lam_g.shape and wh.shape == lam_h.shape:
            lam_g = np.clip(np.asarray(wg, dtype=float), 0.0, cfg.multiplier_bound)
            lam_h = np.clip(
                np.asarray(wh, dtype=float),
                -cfg.multiplier_bound,
                cfg.multiplier_bound,
            )
            if warm_penalty is not None and warm_penalty > 0:
                mu = min(float(warm_penalty), _MU_MAX)
    bounds = Bounds(problem.lb.ravel(), problem.ub.ravel())
    inner_gtol = min(max(0.1 * cfg.stat_tol, 1e-8), 1e-5)

    def measure(z):
        states = problem.rollout(z)
        g, h = problem.constraint_values(z, states)
        vg = float(np.max(-g, initial=0.0)) if g.size else 0.0
        vh = float(np.max(np.abs(h), initial=0.0)) if h.size else 0.0
        return problem.objective(z, states), max(vg, 0.0), vh

    def better(cand, incumbent):
        # prefer feasible with lower objective, else lower violation
        f_c, v_c = cand
        f_i, v_i = incumbent
        c_ok = v_c <= cfg.feas_tol
        i_ok = v_i <= cfg.feas_tol
        if c_ok != i_ok:
            return c_ok
        return (f_c < f_i) if c_ok else (v_c < v_i)

    z = z0.copy()
    f_z, vg, vh = measure(z)
    best = (z.copy(), f_z, max(vg, vh), vg, vh)
    total_inner = 0
    outer_done = 0
    prev_violation = np.inf
    converged = False

    for outer in range(cfg.max_outer):
        outer_done = outer + 1
        res = minimize(
            _al_value_and_grad,
            z.ravel(),
            args=(problem, lam_g, lam_h, mu),
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={
                "maxiter": cfg.max_inner,
                "ftol": 1e-12,
                "gtol": inner_gtol,
                "maxcor": 12,
            },
        )
        z = res.x.reshape(problem.shape)
        total_inner += int(res.nit)
        f_z, vg, vh = measure(z)
        violation = max(vg, vh)
        if better((f_z, violation), (best[1], best[2])):
            best = (z.copy(), f_z, violation, vg, vh)

        g, h = problem.constraint_values(z)
        lam_g = np.clip(lam_g - mu * g, 0.0, cfg.multiplier_bound)
        lam_h = np.clip(
            lam_h - mu * h, -cfg.multiplier_bound, cfg.multiplier_bound
        )
        if violation <= cfg.feas_tol and res.status in (0, 2):
            converged = True
            break
        if violation > _VIOLATION_DECREASE * prev_violation:
            mu = min(mu * cfg.penalty_growth, _MU_MAX)
        prev_violation = min(prev_violation, violation)
        if problem.n_ineq == 0 and problem.n_eq == 0:
            # box-only problem: one inner solve is the whole story
            converged = res.status in (0, 2)
            break

    z_best, f_best, viol_best, vg_best, vh_best = best

    # a feasible warm start must never lose to a worse returned point
    if warm_start is not None:
        f_w, vg_w, vh_w = measure(z0)
        if max(vg_w, vh_w) <= cfg.feas_tol and better(
            (f_w, max(vg_w, vh_w)), (f_best, viol_best)
        ):
            z_best, f_best, vg_best, vh_best = z0, f_w, vg_w, vh_w
            viol_best = max(vg_w, vh_w)

    stationarity = _projected_gradient_norm(
        problem, z_best, _lagrangian_grad(problem, z_best, lam_g, lam_h)
    )

    if viol_best <= cfg.feas_tol:
        if stationarity <= cfg.stat_tol and converged:
            status = "optimal"
        else:
            status = "feasible-suboptimal"
    elif mu >= _MU_MAX:
        status = "infeasible"
    else:
        status = "iteration-limit"

    return SolveResult(
        z=z_best,
        status=status,
        objective=f_best,
        max_ineq_violation=vg_best,
        max_eq_violation=vh_best,
        stationarity=stationarity,
        iterations=total_inner,
        outer_iterations=outer_done,
        wall_time=time.perf_counter() - t0,
        multipliers=(lam_g.copy(), lam_h.copy()),
        penalty=mu,
    )


def constraint_jacobians(problem: NlpProblem, z: np.ndarray):
    """Dense Jacobians (Jg, Jh) assembled row by row via the adjoint sweep."""
    states = problem.rollout(z)

    def rows(blocks, total):
        J = np.zeros((total, problem.dim))
        row = 0
        for block in blocks:
            for r in range(block.size):
                w = np.zeros(block.size)
                w[r] = 1.0
                dstates = np.zeros_like(states)
                dz = np.zeros(problem.shape)
                block.add_weighted_jacobian(states, z, w, dstates, dz)
                _adjoint_sweep(problem, states, z, dstates, dz)
                J[row] = dz.ravel()
                row += 1
        return J

    return rows(problem.ineq, problem.n_ineq), rows(problem.eq, problem.n_eq)


def objective_gradient(problem: NlpProblem, z: np.ndarray) -> np.ndarray:
    states = problem.rollout(z)
    _, dstates, dz = _objective_and_grad(problem, z, states)
    _adjoint_sweep(problem, states, z, dstates, dz)
    return dz


def gradient_check(problem: NlpProblem, z: np.ndarray, fd_step: float = 1e-6) -> float:
    """Max relative error of analytic gradients vs central finite differences.

    Compares the objective gradient and every constraint residual row.
    Requires z strictly inside the box so the symmetric stencil stays in
    the domain.
    """
    z = np.asarray(z, dtype=float)
    if not (np.all(z > problem.lb) and np.all(z < problem.ub)):
        raise ValueError("z must be strictly inside the box")
    if not fd_step > 0:
        raise ValueError("fd_step must be positive")

    grad_f = objective_gradient(problem, z).ravel()
    Jg, Jh = constraint_jacobians(problem, z)

    dim = problem.dim
    num_f = np.empty(dim)
    num_g = np.empty((problem.n_ineq, dim))
    num_h = np.empty((problem.n_eq, dim))
    flat = z.ravel().copy()
    for d in range(dim):
        flat[d] += fd_step
        zp = flat.reshape(problem.shape)
        fp = problem.objective(zp)
        gp, hp = problem.constraint_values(zp)
        flat[d] -= 2 * fd_step
        zm = flat.reshape(problem.shape)
        fm = problem.objective(zm)
        gm, hm = problem.constraint_values(zm)
        flat[d] += fd_step
        num_f[d] = (fp - fm) / (2 * fd_step)
        if problem.n_ineq:
            num_g[:, d] = (gp - gm) / (2 * fd_step)
        if problem.n_eq:
            num_h[:, d] = (hp - hm) / (2 * fd_step)

    def rel(analytic, numeric):
        scale = max(1.0, float(np.max(np.abs(numeric), initial=0.0)))
        return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale

    worst = rel(grad_f, num_f)
    for r in range(problem.n_ineq):
        worst = max(worst, rel(Jg[r], num_g[r]))
    for r in range(problem.n_eq):
        worst = max(worst, rel(Jh[r], num_h[r]))
    return worst
