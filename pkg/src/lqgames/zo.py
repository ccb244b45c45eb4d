"""Single-point zeroth-order gradient estimation and the nested model-free solver.

Gradient estimates use one fresh perturbed-cost trajectory per sample plus
an independent unperturbed trajectory for the covariance estimate, then
precondition by the estimated covariance to form a natural gradient step.
The model is touched only for diagnostics (gap logging and feasibility
reports); the updates themselves are purely simulation-driven.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import certify
from .exact import DIVERGENCE_FACTOR, DivergenceError
from .model import LqGame, StructuredGain, zero_gain
from .sim import RngStream, batch_rollout, mean_covariance_blocks
from .trace import RunTrace, TraceRow

# stream purpose indices: keep stable so runs are reproducible across versions
_COST, _COV = 0, 1


class CovarianceGateError(RuntimeError):
    """Estimated covariance failed the invertibility gate twice."""


@dataclass(frozen=True)
class ZoConfig:
    r1: float = 0.5
    r2: float = 0.08
    M1: int = 10_000
    M2: int = 10_000
    tau1: float = 0.04
    tau2: float = 4.67e-4
    T_in: int = 10
    T: int = 60
    gate_policy: Literal["regularize", "reject-and-resample"] = "regularize"
    seed: int = 0

    def __post_init__(self):
        if min(self.r1, self.r2, self.tau1, self.tau2) <= 0:
            raise ValueError("radii and stepsizes must be positive")
        if min(self.M1, self.M2) < 1:
            raise ValueError("batch sizes must be at least 1")
        if self.gate_policy not in ("regularize", "reject-and-resample"):
            raise ValueError(f"unknown gate policy {self.gate_policy!r}")


def gain_dims(game: LqGame, side: Literal["K", "L"]) -> tuple[int, int, int]:
    """(stage rows, stage cols, total free dimension) of a gain side."""
    p = game.d if side == "K" else game.n
    return p, game.m, p * game.m * game.horizon


def sample_unit_sphere(game: LqGame, side: Literal["K", "L"], count: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Uniform draws on the unit Frobenius sphere of the structured subspace.

    Returns stage blocks of shape (count, N, p, m); the lift of each draw has
    Frobenius norm exactly 1.
    """
    p, m, dim = gain_dims(game, side)
    flat = rng.standard_normal((count, dim))
    norms = np.linalg.norm(flat, axis=1, keepdims=True)
    while (norms == 0.0).any():  # probability-zero guard
        bad = norms[:, 0] == 0.0
        flat[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(flat, axis=1, keepdims=True)
    flat /= norms
    return flat.reshape(count, game.horizon, p, m)


def zo_gradient(game: LqGame, K: StructuredGain, L: StructuredGain,
                side: Literal["K", "L"], r: float, count: int,
                rng: np.random.Generator) -> StructuredGain:
    """Single-point estimate of the objective gradient w.r.t. one gain side.

    Each sample perturbs the chosen side on a radius-r sphere, rolls out one
    trajectory, and weights the direction by (dim / r) times the incurred
    cost.  Unbiased for the gradient of the r-smoothed objective.
    """
    _, _, dim = gain_dims(game, side)
    U = sample_unit_sphere(game, side, count, rng)
    perturb = {"K_perturb": r * U} if side == "K" else {"L_perturb": r * U}
    costs, _ = batch_rollout(game, K, L, count, rng, **perturb)
    blocks = (dim / r) * np.einsum("c,chpm->hpm", costs, U) / count
    return StructuredGain(side, tuple(blocks))


def _apply_covariance_gate(game: LqGame, blocks: list[np.ndarray], policy: str) -> tuple[list[np.ndarray], bool]:
    """Enforce lambda_min >= phi/2 before inversion; returns (blocks, gated)."""
    phi_half = game.noise.phi / 2.0
    lam = min(float(np.linalg.eigvalsh(0.5 * (b + b.T)).min()) for b in blocks)
    if lam >= phi_half:
        return blocks, False
    if policy == "regularize":
        bump = phi_half - lam
        return [b + bump * np.eye(b.shape[0]) for b in blocks], True
    return blocks, True  # reject policy: caller resamples


def natural_step(grad: StructuredGain, cov_blocks: list[np.ndarray]) -> StructuredGain:
    """Right-precondition a structured gradient by block covariance solves."""
    out = []
    for h, g in enumerate(grad.blocks):
        out.append(np.linalg.solve(cov_blocks[h].T, g.T).T)
    return StructuredGain(grad.side, tuple(out))


def _estimate_step(game: LqGame, K: StructuredGain, L: StructuredGain,
                   side: Literal["K", "L"], r: float, count: int,
                   stream: RngStream, policy: str) -> tuple[StructuredGain, int, int]:
    """One (gradient, covariance) estimation round; returns (step, gate hits, samples)."""
    gate_hits = 0
    samples = 0
    for attempt in range(2):
        grad = zo_gradient(game, K, L, side, r, count,
                           stream.child(_COST, attempt).generator())
        _, states = batch_rollout(game, K, L, count,
                                  stream.child(_COV, attempt).generator(),
                                  return_states=True)
        samples += 2 * count
        cov = mean_covariance_blocks(states)
        cov, gated = _apply_covariance_gate(game, cov, policy)
        if gated:
            gate_hits += 1
            if policy == "reject-and-resample" and attempt == 0:
                continue
            if policy == "reject-and-resample":
                raise CovarianceGateError(
                    f"covariance gate failed twice (phi/2 = {game.noise.phi / 2:g})")
        # the raw gradient is 2 F Sigma, so the natural-gradient direction
        # matching the exact solver's F/E updates is half the preconditioned
        # estimate
        return natural_step(grad, cov).scale(0.5), gate_hits, samples
    raise AssertionError("unreachable")


def inner_zo_oracle(game: LqGame, K: StructuredGain, L0: StructuredGain,
                    config: ZoConfig, stream: RngStream,
                    diagnostics: bool = False) -> tuple[StructuredGain, list[float], int, int]:
    """Model-free inner maximization: T_in preconditioned ascent steps on L.

    Returns (L, gap trace, samples used, gate hits).  The gap trace is
    model-based and purely diagnostic; it never feeds the update.
    """
    L = L0
    gap_trace: list[float] = []
    samples = 0
    gate_hits = 0
    opt_val = None
    if diagnostics:
        opt_val = certify.primal_value(game, K)
    for k in range(config.T_in):
        if diagnostics:
            gap_trace.append(opt_val - certify.objective(game, K, L))
        step, hits, used = _estimate_step(
            game, K, L, "L", config.r1, config.M1, stream.child(k), config.gate_policy)
        gate_hits += hits
        samples += used
        L = L + step.scale(config.tau1)
    if diagnostics:
        gap_trace.append(opt_val - certify.objective(game, K, L))
    return L, gap_trace, samples, gate_hits


def outer_zo_npg(game: LqGame, K0: StructuredGain, config: ZoConfig,
                 nash_value: float | None = None) -> tuple[StructuredGain, RunTrace]:
    """Model-free nested natural policy gradient on K.

    Calls the inner oracle once per outer iteration, then forms the outer
    gradient estimate against the fixed inner output.  The trace logs the
    model-based primal gap, estimated natural-gradient norm, margins, and
    cumulative sample counts.
    """
    if nash_value is None:
        nash_value = certify.solve_nash(game).value
    root = RngStream(config.seed)
    anchor = certify.anchor_certificate(game, K0)
    cov0 = game.noise.covariance_blocks
    K = K0
    trace = RunTrace(stochastic=True)
    initial_obj: float | None = None
    inner_samples_total = 0
    outer_samples_total = 0
    gate_hits_total = 0
    t0 = time.perf_counter()
    for t in range(config.T):
        br = certify.best_response_L(game, K)
        if not br.feasible:
            raise DivergenceError(
                f"iterate {t} left the feasible set at stage {br.violating_stage}", trace)
        primal = float(sum(np.trace(p @ c) for p, c in zip(br.P_blocks, cov0)))
        if initial_obj is None:
            initial_obj = primal
        if primal > DIVERGENCE_FACTOR * initial_obj:
            raise DivergenceError(
                f"objective {primal:g} exceeded {DIVERGENCE_FACTOR:g}x its initial value", trace)
        L_t, _, inner_used, inner_hits = inner_zo_oracle(
            game, K, zero_gain(game, "L"), config, root.child(0, t))
        step, outer_hits, outer_used = _estimate_step(
            game, K, L_t, "K", config.r2, config.M2, root.child(1, t), config.gate_policy)
        inner_samples_total += inner_used
        outer_samples_total += outer_used
        gate_hits_total += inner_hits + outer_hits
        lamH = min(float(np.linalg.eigvalsh(h).min()) for h in br.H_blocks)
        khat = certify.in_Khat_set(game, K, anchor)
        trace.append(TraceRow(
            t=t, objective_gap=primal - nash_value, frob_F=step.frobenius_norm(),
            lambda_min_H=lamH, in_Khat=khat.member,
            wallclock_ms=(time.perf_counter() - t0) * 1e3,
            samples_used_inner=inner_samples_total,
            samples_used_outer=outer_samples_total,
            covariance_gate_hits=gate_hits_total))
        K = K - step.scale(config.tau2)
    return K, trace


def smoothed_objective_fd(game: LqGame, K: StructuredGain, L: StructuredGain,
                          side: Literal["K", "L"], r: float, count: int,
                          rng: np.random.Generator) -> StructuredGain:
    """High-accuracy Monte Carlo reference for the smoothed-objective gradient.

    Averages exact model objectives (not rollouts) of sphere-perturbed gains,
    so its only error is the directional sampling noise.  Used to validate
    the rollout-based estimator's unbiasedness.
    """
    p, m, dim = gain_dims(game, side)
    U = sample_unit_sphere(game, side, count, rng)
    acc = np.zeros((game.horizon, p, m))
    for i in range(count):
        blocks = tuple(U[i, h] for h in range(game.horizon))
        pert = StructuredGain(side, blocks).scale(r)
        if side == "K":
            val = certify.objective(game, K + pert, L)
        else:
            val = certify.objective(game, K, L + pert)
        acc += val * U[i]
    blocks = (dim / r) * acc / count
    return StructuredGain(side, tuple(blocks))
