"""Two-layer hybrid search: penalty transform, GA, then quasi-Newton polish.

The constrained gait problem is folded into a scalar score
``f(z) + r_eq * sum(h^2) + r_ineq * sum(max(0, g)^2)`` with a staged,
strictly increasing weight schedule.  A real-coded genetic algorithm
explores the 15-dimensional coefficient space globally; its winner seeds
a BFGS descent with central finite-difference gradients that runs the
weight stages in sequence.  The whole pipeline is a pure function of the
configurations and the seed: rerunning with the same seed reproduces
every number bit for bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .constraints import (
    ConstraintReport,
    GaitProblemConfig,
    INFEASIBLE_SENTINEL,
    equality_residuals,
    evaluate_gait_grid,
    inequality_overages,
    report_from_evaluation,
)
from .impact import RelabelMaps, default_relabel_maps
from .model import RobotParams
from .trajectory import N_FREE_PARAMS, PolynomialGait, assemble_gait, extract_free_params

DEFAULT_SEED = 20240 + 5


@dataclass(frozen=True)
class PenaltyConfig:
    """Staged penalty weights; the last stage defines the final score.

    The residual groups live in different units (N*m for the torque-free
    row, rad/s for the impact closure, m for foot height), so per-group
    scale factors bring them to comparable pressure before the staged
    weights apply.
    """

    r_eq: tuple[float, ...] = (1e2, 1e4, 1e6)
    r_ineq: tuple[float, ...] = (1e4, 1e6, 1e8)
    impact_scale: float = 8.0
    foot_height_scale: float = 100.0
    threshold: float = 0.01

    def __post_init__(self):
        for name in ("r_eq", "r_ineq"):
            seq = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, seq)
            if not seq or any(v <= 0.0 for v in seq):
                raise ValueError(f"{name} must be positive")
            if any(b <= a for a, b in zip(seq, seq[1:])):
                raise ValueError(f"{name} must be strictly increasing")
        if len(self.r_eq) != len(self.r_ineq):
            raise ValueError("penalty schedules must have the same number of stages")
        for name in ("impact_scale", "foot_height_scale", "threshold"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def n_stages(self) -> int:
        return len(self.r_eq)


@dataclass(frozen=True)
class GaConfig:
    population: int = 300
    init_low: float = -12.0
    init_high: float = 12.0
    elite_count: int = 15
    crossover_fraction: float = 0.8
    migration_fraction: float = 0.2  # kept for config parity; single deme
    stall_generations: int = 50
    eval_budget: int = 10401
    rng_seed: int | None = None

    def __post_init__(self):
        if self.population <= self.elite_count:
            raise ValueError("population must exceed the elite count")
        for name in ("crossover_fraction", "migration_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.eval_budget <= self.population:
            raise ValueError("evaluation budget must exceed the population size")
        if self.init_high <= self.init_low:
            raise ValueError("initial range is empty")
        if self.stall_generations < 1:
            raise ValueError("stall_generations must be at least 1")


@dataclass(frozen=True)
class RefineConfig:
    max_iterations: int = 20
    violation_tol: float = 0.01
    fd_step: float = 1e-6
    z_tol: float = 1e-10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        for name in ("violation_tol", "fd_step", "z_tol"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass
class GaSearchResult:
    z: np.ndarray
    best_value: float
    history: list[float]
    n_evaluations: int
    stalled: bool


@dataclass
class RefineResult:
    z: np.ndarray
    value: float
    iterations: int
    history: list[float]
    success: bool
    no_progress: bool


@dataclass
class GaitReport:
    """Final gait plus every number needed to audit the run.

    All reported figures are recomputed from ``z`` after the search, so
    they match an independent re-evaluation exactly.
    """

    z: np.ndarray
    gait: PolynomialGait
    objective: float
    constraints: ConstraintReport
    feasible: bool
    seed: int
    ga_history: list[float]
    refine_history: list[float]
    n_ga_evaluations: int
    refine_iterations: int
    boundary_regenerated: bool = False
    wall_clock: float = 0.0  # informational; excluded from serialized reports

    def to_dict(self) -> dict:
        gait_flat = np.concatenate([self.gait.alpha.reshape(-1), [self.gait.duration]])
        return {
            "seed": self.seed,
            "feasible": self.feasible,
            "objective": self.objective,
            "constraints": self.constraints.to_dict(),
            "z": self.z.tolist(),
            "gait": gait_flat.tolist(),
            "ga_history": list(self.ga_history),
            "refine_history": list(self.refine_history),
            "n_ga_evaluations": self.n_ga_evaluations,
            "refine_iterations": self.refine_iterations,
            "boundary_regenerated": self.boundary_regenerated,
        }


def _simpson_weights(n: int, step: float) -> np.ndarray:
    """Composite Simpson quadrature weights for an odd uniform grid."""
    if n < 3 or n % 2 == 0:
        raise ValueError("Simpson weights need an odd number of grid points")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (step / 3.0)


@dataclass(frozen=True)
class GaitProblem:
    """Bundle of robot, bounds and relabel maps scored by the optimizer."""

    params: RobotParams
    config: GaitProblemConfig
    maps: RelabelMaps = field(default_factory=default_relabel_maps)

    def assemble(self, z) -> PolynomialGait:
        return assemble_gait(z, self.config.q_init, self.config.q_final, self.config.duration)

    def equality_scales(self, penalty: PenaltyConfig) -> np.ndarray:
        """Unit-balancing scale for each equality residual component."""
        return np.concatenate([
            np.ones(self.config.grid_size),
            np.full(5, penalty.impact_scale),
            [penalty.foot_height_scale],
        ])

    def residuals(self, z, r_eq: float, r_ineq: float, eq_scales=None) -> np.ndarray:
        """Residual vector whose squared norm is the penalized score.

        The torque block carries Simpson quadrature weights, so its
        squared norm is the torque-cost integral; the equality and
        overage blocks carry the penalty weights.  A rank-deficient
        impact map contributes the finite sentinel instead.
        """
        cfg = self.config
        ev = evaluate_gait_grid(self.assemble(z), self.params, cfg, self.maps)
        quad = _simpson_weights(cfg.grid_size, ev.time[1] - ev.time[0])
        tau_block = (np.sqrt(quad)[:, None] * ev.torques).reshape(-1)
        if ev.rank_deficient:
            return np.concatenate([tau_block, [np.sqrt(INFEASIBLE_SENTINEL)]])
        eq = equality_residuals(ev)
        if eq_scales is not None:
            eq = eq * eq_scales
        over = inequality_overages(ev, cfg)
        return np.concatenate([tau_block, np.sqrt(r_eq) * eq, np.sqrt(r_ineq) * over])

    def penalized(self, z, r_eq: float, r_ineq: float, eq_scales=None) -> float:
        r = self.residuals(z, r_eq, r_ineq, eq_scales)
        return float(r @ r)

    def report(self, z) -> ConstraintReport:
        ev = evaluate_gait_grid(self.assemble(z), self.params, self.config, self.maps)
        return report_from_evaluation(ev, self.config)


def penalized_objective(z, problem: GaitProblem, r_eq: float, r_ineq: float, eq_scales=None) -> float:
    """Torque cost plus weighted squared violations (finite for any z)."""
    return problem.penalized(z, r_eq, r_ineq, eq_scales)


def ga_search(fitness: Callable[[np.ndarray], float], cfg: GaConfig, seed: int | None = None) -> GaSearchResult:
    """Real-coded GA: rank selection, blend crossover, Gaussian mutation.

    Elites are carried (with cached scores) so the per-generation best is
    non-increasing; the loop stops at the stall limit or when the next
    generation would exceed the evaluation budget.
    """
    if seed is None:
        seed = cfg.rng_seed if cfg.rng_seed is not None else 0
    rng = np.random.default_rng(seed)
    npop = cfg.population
    pop = rng.uniform(cfg.init_low, cfg.init_high, size=(npop, N_FREE_PARAMS))
    scores = np.array([fitness(x) for x in pop])
    n_evals = npop

    n_children = npop - cfg.elite_count
    n_crossover = int(round(cfg.crossover_fraction * n_children))
    n_mutation = n_children - n_crossover
    max_generations = max(1, (cfg.eval_budget - npop) // max(1, n_children))
    # harmonic rank selection concentrates parenthood on the front runners
    rank_weights = 1.0 / np.arange(1.0, npop + 1.0)
    rank_weights /= rank_weights.sum()
    mutation_scale0 = 0.1 * (cfg.init_high - cfg.init_low)

    order = np.argsort(scores, kind="stable")
    pop, scores = pop[order], scores[order]
    history = [float(scores[0])]
    best_value = float(scores[0])
    stall = 0
    stalled = False
    generation = 0
    while n_evals + n_children <= cfg.eval_budget:
        generation += 1
        parents = rng.choice(npop, size=(n_crossover, 2), p=rank_weights)
        pa, pb = pop[parents[:, 0]], pop[parents[:, 1]]
        lo = np.minimum(pa, pb)
        hi = np.maximum(pa, pb)
        span = hi - lo
        children_x = rng.uniform(lo - 0.1 * span, hi + 0.1 * span)
        mut_idx = rng.choice(npop, size=n_mutation, p=rank_weights)
        scale = mutation_scale0 * max(0.005, 1.0 - generation / max_generations) ** 3
        children_m = pop[mut_idx] + rng.normal(0.0, scale, size=(n_mutation, N_FREE_PARAMS))
        np.clip(children_m, -100.0, 100.0, out=children_m)
        children = np.vstack([children_x, children_m])
        child_scores = np.array([fitness(x) for x in children])
        n_evals += n_children
        pop = np.vstack([pop[: cfg.elite_count], children])
        scores = np.concatenate([scores[: cfg.elite_count], child_scores])
        order = np.argsort(scores, kind="stable")
        pop, scores = pop[order], scores[order]
        history.append(float(scores[0]))
        if scores[0] < best_value - 1e-12:
            best_value = float(scores[0])
            stall = 0
        else:
            stall += 1
            if stall >= cfg.stall_generations:
                stalled = True
                break
    return GaSearchResult(
        z=pop[0].copy(),
        best_value=float(scores[0]),
        history=history,
        n_evaluations=n_evals,
        stalled=stalled,
    )


def _fd_jacobian(res_fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, step: float) -> np.ndarray:
    """Central finite-difference Jacobian of a residual vector."""
    cols = []
    for i in range(x.size):
        probe = x.copy()
        probe[i] = x[i] + step
        hi = res_fn(probe)
        probe[i] = x[i] - step
        lo = res_fn(probe)
        cols.append((hi - lo) / (2.0 * step))
    return np.stack(cols, axis=1)


def _gauss_newton_descend(res_fn, x0, max_iter, fd_step, x_tol):
    """Damped Gauss-Newton (Levenberg-Marquardt) on a residual vector.

    One major iteration builds one central-difference Jacobian and
    adapts the damping until a step decreases the squared norm.  Returns
    the best iterate seen, the iteration count and the score history.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = res_fn(x)
    f = float(r @ r)
    best_x, best_f = x.copy(), f
    history = [f]
    damping = 1e-3
    iterations = 0
    for _ in range(max_iter):
        jac = _fd_jacobian(res_fn, x, fd_step)
        grad = jac.T @ r
        normal = jac.T @ jac
        scale = np.diag(normal).copy()
        scale[scale <= 0.0] = 1.0
        iterations += 1
        accepted = False
        step = None
        for _trial in range(15):
            try:
                step = np.linalg.solve(normal + damping * np.diag(scale), -grad)
            except np.linalg.LinAlgError:
                damping *= 10.0
                continue
            x_new = x + step
            r_new = res_fn(x_new)
            f_new = float(r_new @ r_new)
            if np.isfinite(f_new) and f_new < f:
                x, r, f = x_new, r_new, f_new
                damping = max(damping * 0.3, 1e-12)
                accepted = True
                break
            damping *= 10.0
        history.append(f)
        if not accepted:
            break
        if f < best_f:
            best_x, best_f = x.copy(), f
        if float(np.linalg.norm(step)) <= x_tol:
            break
    return best_x, best_f, iterations, history


def local_refine(
    stage_residuals: Sequence[Callable[[np.ndarray], np.ndarray]],
    z0: np.ndarray,
    cfg: RefineConfig,
    max_violation: Callable[[np.ndarray], float] | None = None,
) -> RefineResult:
    """Polish through the staged penalty weights, best iterate wins.

    Each stage maps z to a residual vector whose squared norm is that
    stage's penalized score; descent is damped Gauss-Newton with central
    finite-difference Jacobians, capped at ``cfg.max_iterations`` major
    iterations across all stages.  The final stage's score selects the
    returned point, with ``z0`` always in the running, so refinement can
    never worsen it.  ``success`` reflects the caller's violation
    measure when one is supplied; ``no_progress`` flags a first
    iteration that could not produce any acceptable step.
    """
    z0 = np.asarray(z0, dtype=float).copy()
    if not np.all(np.isfinite(z0)):
        raise ValueError("refinement start point must be finite")
    final_res = stage_residuals[-1]

    def final_score(z):
        r = final_res(z)
        return float(r @ r)

    candidates = [z0]
    history: list[float] = []
    remaining = cfg.max_iterations
    x = z0
    total_iterations = 0
    for idx, res_fn in enumerate(stage_residuals):
        stages_left = len(stage_residuals) - idx
        allowance = min(remaining, max(1, int(np.ceil(remaining / stages_left))))
        if allowance <= 0:
            break
        x, _, used, stage_hist = _gauss_newton_descend(res_fn, x, allowance, cfg.fd_step, cfg.z_tol)
        remaining -= used
        total_iterations += used
        history.extend(stage_hist)
        candidates.append(x.copy())
        if remaining <= 0:
            break
    final_scores = [final_score(c) for c in candidates]
    best_idx = int(np.argmin(final_scores))
    best = candidates[best_idx]
    made_progress = any(
        not np.array_equal(c, z0) for c in candidates[1:]
    ) and final_scores[best_idx] < final_scores[0]
    if not made_progress:
        best = z0
    success = True
    if max_violation is not None:
        success = bool(max_violation(best) <= cfg.violation_tol)
    return RefineResult(
        z=best.copy(),
        value=float(min(final_scores)),
        iterations=total_iterations,
        history=history,
        success=success,
        no_progress=not made_progress,
    )


def optimize_gait(
    params: RobotParams,
    problem_cfg: GaitProblemConfig,
    ga_cfg: GaConfig | None = None,
    refine_cfg: RefineConfig | None = None,
    penalty_cfg: PenaltyConfig | None = None,
    seed: int = DEFAULT_SEED,
    maps: RelabelMaps | None = None,
    boundary_regenerated: bool = False,
) -> GaitReport:
    """Run penalty -> GA -> quasi-Newton and report the audited result."""
    ga_cfg = ga_cfg or GaConfig()
    refine_cfg = refine_cfg or RefineConfig()
    penalty_cfg = penalty_cfg or PenaltyConfig()
    maps = maps or default_relabel_maps()
    problem = GaitProblem(params=params, config=problem_cfg, maps=maps)

    started = time.perf_counter()
    scales = problem.equality_scales(penalty_cfg)
    ga_fit = lambda z: problem.penalized(z, penalty_cfg.r_eq[0], penalty_cfg.r_ineq[0], scales)
    ga = ga_search(ga_fit, ga_cfg, seed=seed)
    stage_residuals = [
        (lambda z, re=re, ri=ri: problem.residuals(z, re, ri, scales))
        for re, ri in zip(penalty_cfg.r_eq, penalty_cfg.r_ineq)
    ]
    # the GA already works at the first-stage weights, so the polish
    # spends its iteration budget on the remaining stages
    if len(stage_residuals) > 1:
        stage_residuals = stage_residuals[1:]
    refined = local_refine(
        stage_residuals,
        ga.z,
        refine_cfg,
        max_violation=lambda z: problem.report(z).max_violation,
    )
    gait = problem.assemble(refined.z)
    constraints = problem.report(refined.z)
    return GaitReport(
        z=refined.z.copy(),
        gait=gait,
        objective=constraints.objective,
        constraints=constraints,
        feasible=constraints.feasible,
        seed=seed,
        ga_history=ga.history,
        refine_history=refined.history,
        n_ga_evaluations=ga.n_evaluations,
        refine_iterations=refined.iterations,
        boundary_regenerated=boundary_regenerated,
        wall_clock=time.perf_counter() - started,
    )
