"""Deterministic nested natural policy gradient with exact gradients.

Inner loop ascends the maximizer's natural gradient; the outer loop descends
the minimizer's, using either an approximately or exactly maximized inner
solution.  No projections or line searches: feasibility is maintained
implicitly by small enough stepsizes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import certify
from .model import CompactOperators, StructuredGain, zero_gain
from .trace import RunTrace, TraceRow

DIVERGENCE_FACTOR = 10.0


class DivergenceError(RuntimeError):
    """Objective blew past the divergence guard; carries the partial trace."""

    def __init__(self, message: str, trace: RunTrace):
        super().__init__(message)
        self.trace = trace


class InnerLoopError(RuntimeError):
    def __init__(self, message: str, gaps: list[float]):
        super().__init__(message)
        self.gaps = gaps


@dataclass(frozen=True)
class ExactSolverConfig:
    tau1: float = 0.1
    tau2: float = 4.67e-4
    inner_mode: Literal["fixed", "gap", "exact"] = "exact"
    T_in: int = 10
    eps1: float = 1e-6
    inner_cap: int = 100_000
    T: int = 300
    stop_gap: float | None = None

    def __post_init__(self):
        if self.tau1 <= 0 or self.tau2 <= 0:
            raise ValueError("stepsizes must be positive")
        if self.inner_mode not in ("fixed", "gap", "exact"):
            raise ValueError(f"unknown inner mode {self.inner_mode!r}")


def inner_npg_exact(ops: CompactOperators, K: StructuredGain, L0: StructuredGain,
                    config: ExactSolverConfig) -> tuple[StructuredGain, list[float]]:
    """Natural gradient ascent on L at fixed K; returns (L, gap trace).

    In gap mode the loop stops once the suboptimality against the exact best
    response drops below ``eps1``.
    """
    br = certify.best_response_L(ops, K)
    if not br.feasible:
        raise certify.NashInfeasibleError(br.violating_stage or 0, br.lam_min or 0.0)
    cov = ops.game.noise.covariance_blocks
    opt_val = float(sum(np.trace(p @ c) for p, c in zip(br.P_blocks, cov)))
    L = L0
    gaps: list[float] = []
    limit = config.T_in if config.inner_mode == "fixed" else config.inner_cap
    for k in range(limit):
        gap = opt_val - certify.objective(ops, K, L)
        gaps.append(gap)
        if config.inner_mode == "gap" and gap <= config.eps1:
            return L, gaps
        _, E = certify.natural_gradients(ops, K, L)
        L = L + E.scale(config.tau1)
    gap = opt_val - certify.objective(ops, K, L)
    gaps.append(gap)
    if config.inner_mode == "gap" and gap > config.eps1:
        raise InnerLoopError(
            f"inner loop failed to reach gap {config.eps1:g} in {config.inner_cap} iterations "
            f"(last gap {gap:g})", gaps)
    return L, gaps


@dataclass
class OuterState:
    K: StructuredGain
    trace: RunTrace = field(default_factory=RunTrace)


def outer_npg_exact(ops: CompactOperators, K0: StructuredGain,
                    config: ExactSolverConfig,
                    nash_value: float | None = None) -> tuple[StructuredGain, RunTrace]:
    """Nested natural gradient descent on K with exact gradients.

    ``inner_mode="exact"`` uses the closed-form best response each step; the
    other modes run the inner ascent loop.  Records gap, gradient norm,
    disturbance margin, and anchored-set membership per iterate.
    """
    if nash_value is None:
        nash_value = certify.solve_nash(ops).value
    anchor = certify.anchor_certificate(ops, K0)
    cov = ops.game.noise.covariance_blocks
    K = K0
    trace = RunTrace()
    initial_obj: float | None = None
    t0 = time.perf_counter()
    for t in range(config.T):
        br = certify.best_response_L(ops, K)
        if not br.feasible:
            raise DivergenceError(
                f"iterate {t} left the feasible set at stage {br.violating_stage} "
                f"(lambda_min={br.lam_min:g}); stepsize too large", trace)
        primal = float(sum(np.trace(p @ c) for p, c in zip(br.P_blocks, cov)))
        if initial_obj is None:
            initial_obj = primal
        if primal > DIVERGENCE_FACTOR * initial_obj:
            raise DivergenceError(
                f"objective {primal:g} exceeded {DIVERGENCE_FACTOR:g}x its initial value", trace)
        if config.inner_mode == "exact":
            L = br.L
        else:
            L, _ = inner_npg_exact(ops, K, zero_gain(ops.game, "L"), config)
        P = certify.value_blocks(ops, K, L)
        F, _ = certify.natural_gradients(ops, K, L, P)
        gap = primal - nash_value
        lamH = min(float(np.linalg.eigvalsh(h).min()) for h in br.H_blocks)
        khat = certify.in_Khat_set(ops, K, anchor)
        trace.append(TraceRow(
            t=t, objective_gap=gap, frob_F=F.frobenius_norm(), lambda_min_H=lamH,
            in_Khat=khat.member, wallclock_ms=(time.perf_counter() - t0) * 1e3))
        if config.stop_gap is not None and gap <= config.stop_gap:
            return K, trace
        K = K - F.scale(config.tau2)
    return K, trace
