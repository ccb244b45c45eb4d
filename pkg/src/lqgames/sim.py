"""Seeded stochastic trajectory engine for the model-free setting.

Rollouts follow x_{h+1} = (A_h - B_h K_h - D_h L_h) x_h + xi_h.  All batch
operations draw from counter-based Philox streams addressed by explicit
indices, so results are bit-reproducible for a fixed seed regardless of how
work is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import LqGame, StructuredGain


@dataclass(frozen=True)
class RngStream:
    """A named, counter-based random stream.

    Identical (seed, indices) always produce bit-identical draws; distinct
    index tuples give statistically independent streams.
    """

    seed: int
    indices: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.indices)
        return np.random.Generator(np.random.Philox(seq))

    def child(self, *indices: int) -> "RngStream":
        return RngStream(self.seed, self.indices + tuple(indices))


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (N+1, m)
    cost: float
    seed_id: int


def _stage_cost(game: LqGame, h: int, x: np.ndarray, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    return (np.einsum("...i,ij,...j->...", x, game.Q[h], x)
            + np.einsum("...i,ij,...j->...", u, game.Ru[h], u)
            - np.einsum("...i,ij,...j->...", w, game.Rw[h], w))


def batch_rollout(game: LqGame, K: StructuredGain, L: StructuredGain, count: int,
                  rng: np.random.Generator, *,
                  K_perturb: np.ndarray | None = None,
                  L_perturb: np.ndarray | None = None,
                  return_states: bool = False):
    """Simulate ``count`` independent trajectories in one vectorized pass.

    ``K_perturb`` / ``L_perturb`` optionally add a per-sample gain offset of
    shape (count, N, p, m); this is how zeroth-order perturbations enter.
    Returns (costs, states) with states of shape (count, N+1, m) or None.
    """
    N, m = game.horizon, game.m
    xi = game.noise.sample(count, rng)  # (count, N+1, m)
    x = xi[:, 0, :].copy()
    costs = np.zeros(count)
    states = np.empty((count, N + 1, m)) if return_states else None
    for h in range(N):
        if states is not None:
            states[:, h, :] = x
        u = x @ K.blocks[h].T
        if K_perturb is not None:
            u += np.einsum("cpm,cm->cp", K_perturb[:, h], x)
        w = x @ L.blocks[h].T
        if L_perturb is not None:
            w += np.einsum("cpm,cm->cp", L_perturb[:, h], x)
        costs += _stage_cost(game, h, x, u, w)
        x = x @ game.A[h].T - u @ game.B[h].T - w @ game.D[h].T + xi[:, h + 1, :]
    costs += np.einsum("ci,ij,cj->c", x, game.Q[N], x)
    if states is not None:
        states[:, N, :] = x
    return costs, states


def rollout(game: LqGame, K: StructuredGain, L: StructuredGain, rng: RngStream) -> Trajectory:
    """Simulate one trajectory and its incurred cost."""
    costs, states = batch_rollout(game, K, L, 1, rng.generator(), return_states=True)
    seed_id = rng.indices[-1] if rng.indices else rng.seed
    return Trajectory(states=states[0], cost=float(costs[0]), seed_id=int(seed_id))


def empirical_covariance(trajectory: Trajectory) -> list[np.ndarray]:
    """Per-stage outer products x_h x_h' (one rank-one PSD block per stage)."""
    return [np.outer(x, x) for x in trajectory.states]


def mean_covariance_blocks(states: np.ndarray) -> list[np.ndarray]:
    """Mean per-stage second moments over a batch of state arrays."""
    count = states.shape[0]
    return [states[:, h, :].T @ states[:, h, :] / count for h in range(states.shape[1])]


@dataclass(frozen=True)
class CovarianceEstimate:
    blocks: tuple[np.ndarray, ...]
    lambda_min: float
    gate_ok: bool


def batch_mean_covariance(game: LqGame, K: StructuredGain, L: StructuredGain,
                          count: int, rng: np.random.Generator) -> CovarianceEstimate:
    """Average empirical covariance over ``count`` fresh rollouts.

    Reports the smallest block eigenvalue against the phi/2 invertibility
    gate; callers decide how to react.
    """
    _, states = batch_rollout(game, K, L, count, rng, return_states=True)
    blocks = mean_covariance_blocks(states)
    lam = min(float(np.linalg.eigvalsh(0.5 * (b + b.T)).min()) for b in blocks)
    return CovarianceEstimate(tuple(blocks), lam, lam >= game.noise.phi / 2.0)


def monte_carlo_objective(game: LqGame, K: StructuredGain, L: StructuredGain,
                          count: int, rng: np.random.Generator,
                          chunk: int = 200_000) -> tuple[float, float]:
    """Sample mean and standard error of the single-trajectory cost."""
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < count:
        c = min(chunk, count - done)
        costs, _ = batch_rollout(game, K, L, c, rng)
        total += math.fsum(costs)
        total_sq += math.fsum(costs * costs)
        done += c
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0)
    return mean, math.sqrt(var / count)
