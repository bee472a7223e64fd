"""Deterministic random-number plumbing.

Reproducibility contract: every stochastic quantity in the package is a pure
function of (master seed, a small integer path).  Trajectory-level streams are
counter-based (Philox) and keyed directly by (seed, trajectory index), so an
ensemble can be evaluated in any order, split across any number of workers,
and still produce bitwise-identical results.

Seed-path registry (who derives what):

    derive_seed(master, 0, i)      -- decay command, i-th sequence variant
    derive_seed(master, 1, p, i)   -- spectrum sweep, profile p, tau-grid point i
    derive_seed(master, 2, i)      -- process-tomography spec i
    trajectory_stream(seed, t)     -- trajectory t inside any single run

Keep new paths out of the ranges above.
"""

from __future__ import annotations

import numpy as np

__all__ = ["derive_seed", "trajectory_stream", "draw_kick_angles"]


def derive_seed(master: int, *path: int) -> int:
    """Derive a child seed from a master seed and an integer path.

    Distinct paths give statistically independent children (SeedSequence
    spawning); the same path always gives the same child.
    """
    ss = np.random.SeedSequence((int(master),) + tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def trajectory_stream(seed: int, traj_index: int) -> np.random.Generator:
    """Counter-based generator for one trajectory of one run.

    Philox keyed by (seed, trajectory index): stream t can be constructed
    without generating streams 0..t-1, which is what makes the parallel
    ensemble map deterministic regardless of scheduling.
    """
    key = np.array([int(seed), int(traj_index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def draw_kick_angles(seed, n_traj, n_kicks, theta, phase_mode):
    """Draw the kick-angle arrays for a whole ensemble.

    Returns (eps, phi) with shape (n_traj, n_kicks) each; phi is None in
    fixed_y mode.  Draw order inside each trajectory stream is fixed: the full
    eps vector first, then (uniform_phase only) the full phi vector.  Any
    other consumer of trajectory streams must follow the same order, otherwise
    reference implementations and vectorized kernels diverge.
    """
    eps = np.empty((n_traj, n_kicks), dtype=np.float64)
    if phase_mode == "fixed_y":
        for t in range(n_traj):
            g = trajectory_stream(seed, t)
            eps[t] = g.uniform(-theta, theta, size=n_kicks)
        return eps, None
    elif phase_mode == "uniform_phase":
        phi = np.empty((n_traj, n_kicks), dtype=np.float64)
        for t in range(n_traj):
            g = trajectory_stream(seed, t)
            eps[t] = g.uniform(0.0, theta, size=n_kicks)
            phi[t] = g.uniform(0.0, 2.0 * np.pi, size=n_kicks)
        return eps, phi
    raise ValueError(f"unknown phase_mode: {phase_mode!r}")
