"""Independent oracles used by the optimizer and acceptance tests.

The brute-force search enumerates candidate input sequences on a coarse
lattice and checks feasibility through the dynamics and constraints
modules only, never through solver internals.
"""

import itertools

import numpy as np

from msfsim.constraints import min_pairwise_distance, min_wall_clearance
from msfsim.dynamics import rollout_poses


def brute_force_best(
    problem,
    cs,
    v_lattice,
    delta_a=None,
    delta_w=None,
):
    """Best feasible objective over a v-only lattice (omega = 0).

    Enumerates translational velocities per agent for steps 0..N-2 from
    v_lattice, pins the final step to the zero input, and evaluates
    feasibility of the rolled trajectory against the margins (defaults:
    the constraint set's own). Returns (best_objective, best_z) with
    best_z None when no lattice point is feasible.
    """
    delta_a = cs.delta_a if delta_a is None else delta_a
    delta_w = cs.delta_w if delta_w is None else delta_w
    N, n, _ = problem.shape
    free_slots = (N - 1) * n
    best_obj, best_z = np.inf, None
    for combo in itertools.product(v_lattice, repeat=free_slots):
        z = np.zeros((N, n, 2))
        z[: N - 1, :, 0] = np.reshape(combo, (N - 1, n))
        states = rollout_poses(problem.x0, z, problem.dt)
        feasible = True
        for k in range(1, N + 1):
            pos = states[k, :, :2]
            if min_pairwise_distance(pos) < delta_a or (
                min_wall_clearance(pos, cs.arena) < delta_w
            ):
                feasible = False
                break
        if not feasible:
            continue
        obj = problem.objective(z)
        if obj < best_obj:
            best_obj, best_z = obj, z
    return best_obj, best_z


def candidate_lattice(cs, points=9):
    return np.linspace(cs.v_bounds[0], cs.v_bounds[1], points)
