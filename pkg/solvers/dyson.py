"""
Vector and matrix Dyson equation solvers

The vector equation at spectral point (zeta, eta), d_i = |a_i - zeta|^2:

    1/v1 = eta + S v2 + d / (eta + S^T v1)
    1/v2 = eta + S^T v1 + d / (eta + S v2)

The matrix equation at (zeta, w), Im w > 0, per index i:

    -M_i^{-1} = [[w + (S m2)_i, zeta - a_i], [conj(zeta - a_i), w + (S^T m1)_i]]

Both are solved by damped fixed-point iteration with Anderson mixing and
eta-continuation. Every node of a batch carries its own damping, history and
stopping decision, so a node's result does not depend on which batch it was
solved in.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from exceptions import DomainError, NonConvergence
from profiles import DiscretizedModel, ProfileSpec

MIN_DAMPING = 2.0 ** -10
IMAG_FLOOR = 1e-300
STAGE_ITER_CAP = 5000
# Sanity constant C in <v1>(1 + eta) <= C
VDE_BOUND_CONSTANT = 1e2


class SolverConfig(BaseModel):
    """Fixed-point iteration settings"""

    model_config = ConfigDict(frozen=True)

    tol: float = Field(default=1e-12, gt=0)
    max_iter: int = Field(default=100000, ge=1)
    damping: float = Field(default=0.5, gt=0, le=1)
    continuation: Optional[Tuple[float, ...]] = None
    continuation_start: float = Field(default=1e3, gt=0)
    continuation_steps: int = Field(default=64, ge=2)
    stage_tol: float = Field(default=1e-9, gt=0)
    anderson_depth: int = Field(default=3, ge=0, le=20)
    restarts: int = Field(default=2, ge=0)
    lump: bool = True

    @field_validator("continuation")
    @classmethod
    def _check_continuation(cls, value: Optional[Tuple[float, ...]]) -> Optional[Tuple[float, ...]]:
        if value is None:
            return value
        if any(eta <= 0 for eta in value):
            raise ValueError("continuation values must be positive")
        if any(hi <= lo for hi, lo in zip(value, value[1:])):
            raise ValueError("continuation values must be strictly descending")
        return value

    def escalated(self, attempt: int) -> "SolverConfig":
        """Config for restart number `attempt`: damping halved, iteration cap doubled per restart"""
        if attempt <= 0:
            return self
        return self.model_copy(
            update={
                "damping": max(self.damping / 2 ** attempt, MIN_DAMPING),
                "max_iter": self.max_iter * 2 ** attempt,
            }
        )

    def schedule(self, eta: np.ndarray) -> np.ndarray:
        """
        Continuation stages for each target eta

        Returns:
            (stages, B) array; the last row equals `eta`
        """
        eta = np.asarray(eta, dtype=float)
        if self.continuation is not None:
            stages = np.maximum(np.asarray(self.continuation, dtype=float)[:, None], eta[None, :])
            return np.vstack([stages, eta[None, :]])
        start = np.maximum(self.continuation_start, eta)
        return np.geomspace(start, eta, self.continuation_steps)


@dataclass(frozen=True)
class DysonOperator:
    """
    Variance operator acting on per-group vectors

    Indices sharing a block (identical variance row, column and deformation)
    form one group. `plus @ u` gives S u and `minus @ u` gives S^T u for
    group-constant u; `weights` are the group fractions used for averages.
    """

    plus: np.ndarray
    minus: np.ndarray
    weights: np.ndarray
    a: np.ndarray
    index: np.ndarray

    @property
    def groups(self) -> int:
        return self.plus.shape[0]

    @property
    def n(self) -> int:
        return self.index.shape[0]

    @classmethod
    def from_model(cls, model: DiscretizedModel, lump: bool = True) -> "DysonOperator":
        if lump:
            labels = np.asarray(model.labels)
            uniq, reps, index, counts = np.unique(labels, return_index=True, return_inverse=True, return_counts=True)
            rep_of = reps[index]
            exact = np.array_equal(model.S, model.S[np.ix_(rep_of, rep_of)]) and np.array_equal(model.a, model.a[rep_of])
            if exact:
                S_rep = model.S[np.ix_(reps, reps)]
                return cls(
                    plus=S_rep * counts[None, :],
                    minus=S_rep.T * counts[None, :],
                    weights=counts / model.n,
                    a=model.a[reps].astype(complex),
                    index=index,
                )
            logger.debug("Block labels do not describe the model exactly, solving without lumping")
        n = model.n
        return cls(
            plus=model.S.copy(),
            minus=model.S.T.copy(),
            weights=np.full(n, 1.0 / n),
            a=model.a.astype(complex),
            index=np.arange(n),
        )

    @classmethod
    def from_spec(cls, spec: ProfileSpec) -> "DysonOperator":
        """K-dimensional reduced operator of the continuum equation (block weights |I_k|)"""
        s = spec.variance_matrix
        lengths = spec.block_lengths
        return cls(
            plus=s * lengths[None, :],
            minus=s.T * lengths[None, :],
            weights=lengths.copy(),
            a=spec.deformation,
            index=np.arange(spec.K),
        )

    def apply_plus(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("gh,bh->bg", self.plus, u)

    def apply_minus(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("gh,bh->bg", self.minus, u)

    def mean(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("h,bh->b", self.weights, u)

    def expand(self, u: np.ndarray) -> np.ndarray:
        """Group values to per-index values along the last axis"""
        return u[..., self.index]


@dataclass
class VdeSolution:
    """
    Solution of the vector Dyson equation

    `residual` is the relative stopping metric max|v * rhs - 1|; the
    absolute residual max|1/v - rhs| is at most residual / min(v), see
    `vde_residual`.
    """

    zeta: complex
    eta: float
    v1: np.ndarray
    v2: np.ndarray
    residual: float
    iterations: int

    @property
    def mean_v1(self) -> float:
        return float(np.mean(self.v1))


@dataclass
class MdeSolution:
    """
    Diagonal (m1, m2) and off-diagonal (x = M_12, y = M_21) entries of the 2x2 blocks

    `residual` is the stopping metric: the entrywise residual divided by
    1 + max(|u|, |zeta - a|), see `mde_residual(..., scaled=True)`.
    """

    zeta: complex
    w: complex
    m1: np.ndarray
    m2: np.ndarray
    x: np.ndarray
    y: np.ndarray
    residual: float
    iterations: int

    @property
    def mean_trace(self) -> complex:
        return complex(0.5 * (np.mean(self.m1) + np.mean(self.m2)))


@dataclass
class VdeBatch:
    """Solutions at many (zeta, eta) points; arrays are (B, groups)"""

    operator: DysonOperator
    zetas: np.ndarray
    etas: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    residual: np.ndarray
    ok: np.ndarray
    iterations: np.ndarray

    def mean_v1(self) -> np.ndarray:
        return self.operator.mean(self.v1)

    def solution(self, b: int) -> VdeSolution:
        return VdeSolution(
            zeta=complex(self.zetas[b]),
            eta=float(self.etas[b]),
            v1=self.operator.expand(self.v1[b]),
            v2=self.operator.expand(self.v2[b]),
            residual=float(self.residual[b]),
            iterations=int(self.iterations[b]),
        )


@dataclass
class MdeBatch:
    operator: DysonOperator
    zetas: np.ndarray
    ws: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    x: np.ndarray
    y: np.ndarray
    residual: np.ndarray
    ok: np.ndarray
    iterations: np.ndarray

    def mean_trace(self) -> np.ndarray:
        """(2n)^{-1} tr M per point"""
        return 0.5 * (self.operator.mean(self.m1) + self.operator.mean(self.m2))

    def solution(self, b: int) -> MdeSolution:
        op = self.operator
        return MdeSolution(
            zeta=complex(self.zetas[b]),
            w=complex(self.ws[b]),
            m1=op.expand(self.m1[b]),
            m2=op.expand(self.m2[b]),
            x=op.expand(self.x[b]),
            y=op.expand(self.y[b]),
            residual=float(self.residual[b]),
            iterations=int(self.iterations[b]),
        )


# =====================================================================
# Generic batched fixed-point driver
# =====================================================================

StepFn = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]
ProjectFn = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


def _iterate(
    step: StepFn,
    x: np.ndarray,
    tol: float,
    max_iter: int,
    damping: float,
    depth: int,
    project: Optional[ProjectFn] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Damped fixed-point iteration with Anderson mixing, one state row per node

    Args:
        step: maps (states, node indices) to (mapped states, residuals)
        x: (B, D) initial states
        tol: residual target
        max_iter: iteration cap
        damping: initial mixing weight alpha
        depth: Anderson history length (0 for plain damping)
        project: optional map (states, node indices) -> (states, needs_backoff)

    Returns:
        states, residuals, converged mask, iteration counts
    """
    x = x.copy()
    B, D = x.shape
    m = depth
    alpha = np.full(B, damping)
    done = np.zeros(B, dtype=bool)
    residual = np.full(B, np.inf)
    prev_res = np.full(B, np.inf)
    iterations = np.zeros(B, dtype=int)
    has_prev = np.zeros(B, dtype=bool)
    filled = np.zeros(B, dtype=int)
    x_prev = np.zeros_like(x)
    f_prev = np.zeros_like(x)
    dX = np.zeros((B, m, D))
    dF = np.zeros((B, m, D))

    for _ in range(max_iter):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break

        fx, res = step(x[act], act)
        res = np.where(np.isfinite(res), res, np.inf)
        iterations[act] += 1
        residual[act] = res
        conv = res <= tol
        done[act[conv]] = True

        keep = ~conv
        act, fx, res = act[keep], fx[keep], res[keep]
        if act.size == 0:
            break

        xa = x[act]
        f = fx - xa
        worse = res > prev_res[act]
        alpha[act] = np.where(worse, np.maximum(alpha[act] / 2, MIN_DAMPING), np.minimum(alpha[act] * 2, damping))
        prev_res[act] = res

        if m > 0:
            push = has_prev[act] & ~worse
            filled[act[worse]] = 0
            if push.any():
                idx = act[push]
                dX[idx] = np.concatenate([(xa[push] - x_prev[idx])[:, None, :], dX[idx, :-1]], axis=1)
                dF[idx] = np.concatenate([(f[push] - f_prev[idx])[:, None, :], dF[idx, :-1]], axis=1)
                filled[idx] = np.minimum(filled[idx] + 1, m)

        a = alpha[act][:, None]
        x_new = xa + a * f

        if m > 0 and np.any(filled[act] > 0):
            cols = (np.arange(m)[None, :] < filled[act][:, None]).astype(float)
            dFa = dF[act] * cols[:, :, None]
            dXa = dX[act] * cols[:, :, None]
            gram = np.einsum("bjd,bkd->bjk", dFa, dFa)
            rhs = np.einsum("bjd,bd->bj", dFa, f)
            reg = 1e-10 * np.einsum("bjj->b", gram) / m + 1e-300
            gamma = np.linalg.solve(gram + reg[:, None, None] * np.eye(m)[None], rhs[..., None])[..., 0]
            correction = np.einsum("bjd,bj->bd", dXa + a[:, :, None] * dFa, gamma)
            mixed = x_new - correction
            usable = np.isfinite(mixed).all(axis=1)
            x_new = np.where(usable[:, None], mixed, x_new)

        x_prev[act] = xa
        f_prev[act] = f
        has_prev[act] = True

        broken = ~np.isfinite(x_new).all(axis=1)
        backoff = broken.copy()
        x_new[broken] = xa[broken]
        if project is not None:
            x_new, needs = project(x_new, act)
            backoff |= needs
        if backoff.any():
            alpha[act[backoff]] = np.maximum(alpha[act[backoff]] / 2, MIN_DAMPING)
            filled[act[backoff]] = 0
        x[act] = x_new

    return x, residual, done, iterations


def _retrying(cfg: SolverConfig, where: str) -> Retrying:
    def _log_retry(retry_state) -> None:
        exc = retry_state.outcome.exception()
        logger.warning(f"{where}: restart {retry_state.attempt_number} after non-convergence: {exc}")

    return Retrying(
        stop=stop_after_attempt(cfg.restarts + 1),
        retry=retry_if_exception_type(NonConvergence),
        before_sleep=_log_retry,
        reraise=True,
    )


# =====================================================================
# Vector Dyson equation
# =====================================================================

def _vde_rhs(op: DysonOperator, v1: np.ndarray, v2: np.ndarray, eta: np.ndarray, d: np.ndarray):
    A1 = eta[:, None] + op.apply_plus(v2)
    A2 = eta[:, None] + op.apply_minus(v1)
    return A1 + d / A2, A2 + d / A1


def _solve_vde_nodes(
    op: DysonOperator,
    zetas: np.ndarray,
    etas: np.ndarray,
    cfg: SolverConfig,
    init: Optional[Tuple[np.ndarray, np.ndarray]] = None,
):
    G = op.groups
    d_all = np.abs(op.a[None, :] - zetas[:, None]) ** 2

    if init is None:
        stages = cfg.schedule(etas)
        top = stages[0][:, None]
        v0 = top / (top ** 2 + d_all)
        x = np.concatenate([np.log(v0), np.log(v0)], axis=1)
    else:
        stages = etas[None, :]
        fresh = etas[:, None] / (etas[:, None] ** 2 + d_all)
        w1 = np.where((init[0] > 0) & np.isfinite(init[0]), init[0], fresh)
        w2 = np.where((init[1] > 0) & np.isfinite(init[1]), init[1], fresh)
        x = np.concatenate([np.log(w1), np.log(w2)], axis=1)

    def project(xs: np.ndarray, idx: np.ndarray):
        # <v1> = <v2> holds at every solution with eta > 0
        v1, v2 = np.exp(xs[:, :G]), np.exp(xs[:, G:])
        shift = 0.5 * (np.log(op.mean(v2)) - np.log(op.mean(v1)))
        xs = xs.copy()
        xs[:, :G] += shift[:, None]
        xs[:, G:] -= shift[:, None]
        return xs, np.zeros(xs.shape[0], dtype=bool)

    total = np.zeros(zetas.shape[0], dtype=int)
    residual = ok = None
    last = stages.shape[0] - 1
    for k, stage_eta in enumerate(stages):
        final = k == last
        tol = cfg.tol if final else max(cfg.stage_tol, cfg.tol)
        cap = cfg.max_iter if final else min(cfg.max_iter, STAGE_ITER_CAP)

        def step(xs: np.ndarray, idx: np.ndarray, stage_eta=stage_eta):
            v1, v2 = np.exp(xs[:, :G]), np.exp(xs[:, G:])
            R1, R2 = _vde_rhs(op, v1, v2, stage_eta[idx], d_all[idx])
            res = np.maximum(np.abs(v1 * R1 - 1).max(axis=1), np.abs(v2 * R2 - 1).max(axis=1))
            return np.concatenate([-np.log(R1), -np.log(R2)], axis=1), res

        x, residual, ok, its = _iterate(step, x, tol, cap, cfg.damping, cfg.anderson_depth, project)
        total += its

    return np.exp(x[:, :G]), np.exp(x[:, G:]), residual, ok, total


def solve_vde_batch(
    model: Optional[DiscretizedModel],
    zetas: Sequence[complex],
    etas: Sequence[float],
    cfg: SolverConfig,
    init: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    operator: Optional[DysonOperator] = None,
) -> VdeBatch:
    """
    Solve the vector Dyson equation at many (zeta, eta) points

    Non-converged points are retried with escalated settings; points that
    still fail are flagged in `ok` instead of raising.

    Args:
        model: discretized model
        zetas: B spectral points
        etas: B positive regularizations (a scalar broadcasts)
        cfg: solver settings
        init: optional (v1, v2) group-level warm start, each (B, groups); disables continuation
        operator: prebuilt operator (defaults to DysonOperator.from_model)

    Returns:
        VdeBatch
    """
    op = operator or DysonOperator.from_model(model, cfg.lump)
    zetas = np.atleast_1d(np.asarray(zetas, dtype=complex))
    etas = np.broadcast_to(np.asarray(etas, dtype=float), zetas.shape).copy()
    if np.any(etas <= 0) or not np.all(np.isfinite(etas)):
        raise DomainError("eta must be positive and finite", "dyson.solve_vde")

    B, G = zetas.shape[0], op.groups
    v1 = np.zeros((B, G))
    v2 = np.zeros((B, G))
    residual = np.full(B, np.inf)
    ok = np.zeros(B, dtype=bool)
    iterations = np.zeros(B, dtype=int)

    try:
        for attempt in _retrying(cfg, "dyson.solve_vde"):
            with attempt:
                number = attempt.retry_state.attempt_number - 1
                todo = np.flatnonzero(~ok)
                sub_init = None if init is None else (init[0][todo], init[1][todo])
                r1, r2, res, conv, its = _solve_vde_nodes(op, zetas[todo], etas[todo], cfg.escalated(number), sub_init)
                better = res < residual[todo]
                for arr, new in ((v1, r1), (v2, r2)):
                    arr[todo[better]] = new[better]
                residual[todo[better]] = res[better]
                ok[todo] = conv
                iterations[todo] += its
                if not ok.all():
                    worst = int(np.argmax(np.where(ok, -np.inf, residual)))
                    raise NonConvergence(
                        f"{int((~ok).sum())} of {B} points not converged",
                        "dyson.solve_vde",
                        residual=float(residual[worst]),
                        eta=float(etas[worst]),
                        iterations=int(iterations[worst]),
                    )
    except NonConvergence as exc:
        logger.warning(f"dyson.solve_vde: giving up on {int((~ok).sum())} points: {exc}")

    bound = op.mean(v1) * (1 + etas)
    if np.any(ok & (bound > VDE_BOUND_CONSTANT)):
        logger.warning(f"dyson.solve_vde: <v1>(1+eta) reached {bound[ok].max():.3e}, above sanity constant {VDE_BOUND_CONSTANT}")

    return VdeBatch(op, zetas, etas, v1, v2, residual, ok, iterations)


def _group_init(op: DysonOperator, sol: VdeSolution) -> Tuple[np.ndarray, np.ndarray]:
    if sol.v1.shape[0] != op.n:
        raise DomainError(f"warm start has dimension {sol.v1.shape[0]}, model has n={op.n}", "dyson.solve_vde")
    _, reps = np.unique(op.index, return_index=True)
    return sol.v1[reps][None, :], sol.v2[reps][None, :]


def solve_vde(
    model: DiscretizedModel,
    zeta: complex,
    eta: float,
    init: Optional[VdeSolution] = None,
    cfg: Optional[SolverConfig] = None,
) -> VdeSolution:
    """
    Solve the n-dependent vector Dyson equation at one spectral point

    Args:
        model: discretized model
        zeta: spectral parameter
        eta: positive regularization
        init: warm start (skips continuation)
        cfg: solver settings

    Returns:
        VdeSolution with relative residual max|v * rhs - 1| <= cfg.tol

    Raises:
        DomainError: eta <= 0
        NonConvergence: iteration cap exceeded after all restarts
    """
    cfg = cfg or SolverConfig()
    if not eta > 0:
        raise DomainError(f"eta must be positive, got {eta}", "dyson.solve_vde")
    op = DysonOperator.from_model(model, cfg.lump)
    group_init = _group_init(op, init) if init is not None else None
    batch = solve_vde_batch(model, [zeta], [eta], cfg, init=group_init, operator=op)
    if not batch.ok[0]:
        raise NonConvergence(
            "vector Dyson iteration did not converge",
            "dyson.solve_vde",
            residual=float(batch.residual[0]),
            eta=float(eta),
            iterations=int(batch.iterations[0]),
        )
    return batch.solution(0)


def solve_vde_reduced(spec: ProfileSpec, zeta: complex, eta: float, cfg: Optional[SolverConfig] = None) -> VdeSolution:
    """K-dimensional vector Dyson equation of the continuum model; v entries are per block"""
    cfg = cfg or SolverConfig()
    if not eta > 0:
        raise DomainError(f"eta must be positive, got {eta}", "dyson.solve_vde_reduced")
    batch = solve_vde_batch(None, [zeta], [eta], cfg, operator=DysonOperator.from_spec(spec))
    if not batch.ok[0]:
        raise NonConvergence(
            "reduced vector Dyson iteration did not converge",
            "dyson.solve_vde_reduced",
            residual=float(batch.residual[0]),
            eta=float(eta),
            iterations=int(batch.iterations[0]),
        )
    return batch.solution(0)


def vde_map(
    model: DiscretizedModel, zeta: complex, eta: float, v1: np.ndarray, v2: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """One undamped application of the vector Dyson iteration map"""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    d = np.abs(model.a - zeta) ** 2
    A1 = eta + model.S @ v2
    A2 = eta + model.S.T @ v1
    return 1.0 / (A1 + d / A2), 1.0 / (A2 + d / A1)


def vde_residual(model: DiscretizedModel, sol: VdeSolution, relative: bool = True) -> float:
    """
    Residual of a VDE solution: max|v * rhs - 1| (relative) or max|1/v - rhs|

    The solver stops on the relative form, which stays meaningful when
    1/v grows like |zeta|^2.
    """
    m1, m2 = vde_map(model, sol.zeta, sol.eta, sol.v1, sol.v2)
    if relative:
        return float(max(np.abs(sol.v1 / m1 - 1).max(), np.abs(sol.v2 / m2 - 1).max()))
    return float(max(np.abs(1 / sol.v1 - 1 / m1).max(), np.abs(1 / sol.v2 - 1 / m2).max()))


def eta_sweep(
    model: DiscretizedModel,
    zeta: complex,
    etas: Sequence[float],
    cfg: Optional[SolverConfig] = None,
) -> List[VdeSolution]:
    """
    Solve along a descending eta schedule, each solve warm-started from the previous one

    Raises:
        DomainError: schedule not strictly descending or not positive
        NonConvergence: annotated with the failing eta
    """
    cfg = cfg or SolverConfig()
    etas = [float(e) for e in etas]
    if any(e <= 0 for e in etas):
        raise DomainError("eta schedule must be positive", "dyson.eta_sweep")
    if any(hi <= lo for hi, lo in zip(etas, etas[1:])):
        raise DomainError("eta schedule must be strictly descending", "dyson.eta_sweep")

    solutions: List[VdeSolution] = []
    for eta in etas:
        init = solutions[-1] if solutions else None
        try:
            solutions.append(solve_vde(model, zeta, eta, init=init, cfg=cfg))
        except NonConvergence as exc:
            raise NonConvergence(
                f"sweep failed at eta={eta}", "dyson.eta_sweep", residual=exc.residual, eta=eta, iterations=exc.iterations
            ) from exc
    return solutions


def eta_sweep_batch(
    model: DiscretizedModel,
    zetas: Sequence[complex],
    etas: Sequence[float],
    cfg: SolverConfig,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Warm-started descending eta sweep for many zetas at once

    Returns:
        mean_v1 of shape (len(etas), B), worst residual per zeta, ok mask per zeta
    """
    op = DysonOperator.from_model(model, cfg.lump)
    zetas = np.atleast_1d(np.asarray(zetas, dtype=complex))
    B = zetas.shape[0]
    means = np.full((len(etas), B), np.nan)
    worst = np.zeros(B)
    ok = np.ones(B, dtype=bool)

    init = None
    for k, eta in enumerate(etas):
        batch = solve_vde_batch(model, zetas, np.full(B, eta), cfg, init=init, operator=op)
        means[k] = batch.mean_v1()
        worst = np.maximum(worst, batch.residual)
        ok &= batch.ok
        init = (batch.v1, batch.v2)
    return means, worst, ok


# =====================================================================
# Matrix Dyson equation
# =====================================================================

def _mde_blocks(op: DysonOperator, m1: np.ndarray, m2: np.ndarray, w: np.ndarray, b: np.ndarray):
    u1 = w[:, None] + op.apply_plus(m2)
    u2 = w[:, None] + op.apply_minus(m1)
    D = u1 * u2 - np.abs(b) ** 2
    return u1, u2, D


def _block_residual(m1, m2, x, y, u1, u2, b) -> np.ndarray:
    """Entrywise max-modulus of M^{-1} + W + Sigma[M] per point; inf for singular blocks"""
    det = m1 * m2 - x * y
    with np.errstate(divide="ignore", invalid="ignore"):
        E = np.stack(
            [m2 / det + u1, m1 / det + u2, -x / det + b, -y / det + np.conj(b)],
            axis=0,
        )
        out = np.abs(E).max(axis=0)
    out = np.where((det == 0) | ~np.isfinite(out), np.inf, out)
    return out.max(axis=-1)


def _solve_mde_nodes(op: DysonOperator, zetas: np.ndarray, ws: np.ndarray, cfg: SolverConfig):
    G = op.groups
    b_all = zetas[:, None] - op.a[None, :]
    d_all = np.abs(b_all) ** 2

    stages = cfg.schedule(ws.imag)
    w_top = ws.real[:, None] + 1j * stages[0][:, None]
    m0 = -w_top / (w_top ** 2 - d_all)
    z = np.concatenate([m0.real, m0.real, m0.imag, m0.imag], axis=1)

    def unpack(zs: np.ndarray):
        return zs[:, :G] + 1j * zs[:, 2 * G:3 * G], zs[:, G:2 * G] + 1j * zs[:, 3 * G:]

    def pack(m1: np.ndarray, m2: np.ndarray) -> np.ndarray:
        return np.concatenate([m1.real, m2.real, m1.imag, m2.imag], axis=1)

    def project(zs: np.ndarray, idx: np.ndarray):
        imag = zs[:, 2 * G:]
        bad = (imag <= 0).any(axis=1)
        zs = zs.copy()
        zs[:, 2 * G:] = np.maximum(imag, IMAG_FLOOR)
        m1, m2 = unpack(zs)
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = np.sqrt(op.mean(m2) / op.mean(m1))
            g1, g2 = lam[:, None] * m1, m2 / lam[:, None]
        keep = np.isfinite(lam) & (g1.imag > 0).all(axis=1) & (g2.imag > 0).all(axis=1)
        zs[keep] = pack(g1[keep], g2[keep])
        return zs, bad

    total = np.zeros(zetas.shape[0], dtype=int)
    residual = ok = None
    last = stages.shape[0] - 1
    for k, stage_eta in enumerate(stages):
        final = k == last
        tol = cfg.tol if final else max(cfg.stage_tol, cfg.tol)
        cap = cfg.max_iter if final else min(cfg.max_iter, STAGE_ITER_CAP)
        stage_w = ws.real + 1j * stage_eta

        def step(zs: np.ndarray, idx: np.ndarray, stage_w=stage_w):
            m1, m2 = unpack(zs)
            b = b_all[idx]
            u1, u2, D = _mde_blocks(op, m1, m2, stage_w[idx], b)
            x, y = b / D, np.conj(b) / D
            scale = 1 + np.maximum(np.maximum(np.abs(u1), np.abs(u2)), np.abs(b)).max(axis=1)
            res = _block_residual(m1, m2, x, y, u1, u2, b) / scale
            return pack(-u2 / D, -u1 / D), res

        z, residual, ok, its = _iterate(step, z, tol, cap, cfg.damping, cfg.anderson_depth, project)
        total += its

    m1, m2 = unpack(z)
    b = b_all
    _, _, D = _mde_blocks(op, m1, m2, ws, b)
    return m1, m2, b / D, np.conj(b) / D, residual, ok, total


def solve_mde_batch(
    model: DiscretizedModel,
    zetas: Sequence[complex],
    ws: Sequence[complex],
    cfg: SolverConfig,
    operator: Optional[DysonOperator] = None,
) -> MdeBatch:
    """Solve the matrix Dyson equation at many (zeta, w) points; failures flagged in `ok`"""
    op = operator or DysonOperator.from_model(model, cfg.lump)
    zetas = np.atleast_1d(np.asarray(zetas, dtype=complex))
    ws = np.broadcast_to(np.asarray(ws, dtype=complex), zetas.shape).copy()
    if np.any(ws.imag <= 0):
        raise DomainError("spectral parameter w must have positive imaginary part", "dyson.solve_mde")

    B, G = zetas.shape[0], op.groups
    out = {key: np.zeros((B, G), dtype=complex) for key in ("m1", "m2", "x", "y")}
    residual = np.full(B, np.inf)
    ok = np.zeros(B, dtype=bool)
    iterations = np.zeros(B, dtype=int)

    try:
        for attempt in _retrying(cfg, "dyson.solve_mde"):
            with attempt:
                number = attempt.retry_state.attempt_number - 1
                todo = np.flatnonzero(~ok)
                m1, m2, x, y, res, conv, its = _solve_mde_nodes(op, zetas[todo], ws[todo], cfg.escalated(number))
                better = res < residual[todo]
                for key, new in (("m1", m1), ("m2", m2), ("x", x), ("y", y)):
                    out[key][todo[better]] = new[better]
                residual[todo[better]] = res[better]
                ok[todo] = conv
                iterations[todo] += its
                if not ok.all():
                    worst = int(np.argmax(np.where(ok, -np.inf, residual)))
                    raise NonConvergence(
                        f"{int((~ok).sum())} of {B} points not converged",
                        "dyson.solve_mde",
                        residual=float(residual[worst]),
                        eta=float(ws[worst].imag),
                        iterations=int(iterations[worst]),
                    )
    except NonConvergence as exc:
        logger.warning(f"dyson.solve_mde: giving up on {int((~ok).sum())} points: {exc}")

    return MdeBatch(op, zetas, ws, out["m1"], out["m2"], out["x"], out["y"], residual, ok, iterations)


def solve_mde(
    model: DiscretizedModel,
    zeta: complex,
    w: complex,
    cfg: Optional[SolverConfig] = None,
) -> MdeSolution:
    """
    Solve the matrix Dyson equation at a general spectral parameter w

    Args:
        model: discretized model
        zeta: spectral parameter of the deformation shift
        w: Hermitization spectral parameter with Im w > 0
        cfg: solver settings

    Returns:
        MdeSolution with Im m1, Im m2 > 0

    Raises:
        DomainError: Im w <= 0
        NonConvergence: iteration cap exceeded after all restarts
    """
    cfg = cfg or SolverConfig()
    w = complex(w)
    if not w.imag > 0:
        raise DomainError(f"Im w must be positive, got w={w}", "dyson.solve_mde")
    batch = solve_mde_batch(model, [zeta], [w], cfg)
    if not batch.ok[0]:
        raise NonConvergence(
            "matrix Dyson iteration did not converge",
            "dyson.solve_mde",
            residual=float(batch.residual[0]),
            eta=w.imag,
            iterations=int(batch.iterations[0]),
        )
    return batch.solution(0)


def mde_residual(model: DiscretizedModel, sol: MdeSolution, scaled: bool = False) -> float:
    """
    Sup over indices of the entrywise max-modulus of M_i^{-1} + W_i + Sigma[M]_i

    With `scaled` the sup is divided by 1 + max(|u|, |zeta - a|), the
    metric the solver stops on. Returns +inf if any block M_i is singular.
    """
    m1 = np.asarray(sol.m1, dtype=complex)[None, :]
    m2 = np.asarray(sol.m2, dtype=complex)[None, :]
    x = np.asarray(sol.x, dtype=complex)[None, :]
    y = np.asarray(sol.y, dtype=complex)[None, :]
    b = (sol.zeta - model.a)[None, :]
    u1 = sol.w + (model.S @ m2[0])[None, :]
    u2 = sol.w + (model.S.T @ m1[0])[None, :]
    res = float(_block_residual(m1, m2, x, y, u1, u2, b)[0])
    if scaled:
        res /= 1 + float(np.maximum(np.maximum(np.abs(u1), np.abs(u2)), np.abs(b)).max())
    return res
