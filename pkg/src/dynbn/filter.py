"""Per-timestep filtering: prior tree -> DGLM updates -> propagation -> evolution.

A scenario is validated once into :class:`StepPlan` objects (junction trees,
design vectors, conditionals); :func:`run` then folds :func:`init_step`,
:func:`assimilate` and :func:`evolve` over the plans.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import dglm, divergence, oracle
from .divergence import GridSpec, DEFAULT_GRID
from .errors import (ConditioningError, DomainError, DynbnError, ModelMismatchError,
                     ScenarioError, StructuralError)
from .gauss_bp import (DesignVector, TreeBelief, check_psd, collect_distribute,
                       condition_on_lambda, lambda_prior, tree_belief_from_joint)
from .graph import Dag, JunctionTree, build_junction_tree
from .scenario import Scenario, Step, as_matrix, as_vector

log = logging.getLogger(__name__)

ABORT, SKIP = "abort", "skip"


@dataclass(frozen=True, eq=False)
class PlannedConditional:
    child: str
    parents: tuple[str, ...]
    coeffs: tuple[np.ndarray, ...]
    intercept: np.ndarray
    noise_cov: np.ndarray


@dataclass(frozen=True, eq=False)
class PlannedObservation:
    index: int
    family: dglm.Family
    design: DesignVector
    y: float

    @property
    def clique(self) -> int:
        return self.design.clique


@dataclass(frozen=True, eq=False)
class StepPlan:
    index: int
    dag: Dag
    tree: JunctionTree
    carried: tuple[str, ...]
    conditionals: tuple[PlannedConditional, ...]
    observations: tuple[PlannedObservation, ...]
    frontier: tuple[str, ...]


def _family(spec, where) -> dglm.Family:
    try:
        if spec.type == "normal":
            if spec.V is None:
                raise ScenarioError(f"{where}: normal family needs V")
            return dglm.Normal(spec.V)
        if spec.type == "lognormal":
            if spec.V is None:
                raise ScenarioError(f"{where}: lognormal family needs V")
            return dglm.LogNormal(spec.V)
        if spec.V is not None:
            raise ScenarioError(f"{where}: poisson family takes no V")
        return dglm.Poisson()
    except DomainError as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def plan_step(step: Step, index: int, carried: Sequence[str] = ()) -> StepPlan:
    """Validate one step and precompute its structure."""
    where = f"step {index}"
    try:
        dag = Dag(tuple((v.id, v.dim) for v in step.variables), tuple(step.edges))
    except StructuralError as exc:
        raise ScenarioError(f"{where}: {exc}", step=index) from exc
    dims = dag.dims
    carried = tuple(carried)
    for v in carried:
        if v not in dims:
            raise ScenarioError(f"{where}: carried variable {v!r} is not declared", step=index)
        if dag.parents(v):
            raise ScenarioError(f"{where}: carried variable {v!r} cannot have parents", step=index)

    conds = {}
    for c in step.conditionals:
        if c.child not in dims:
            raise ScenarioError(f"{where}: conditional for undeclared {c.child!r}", step=index)
        if c.child in conds or c.child in carried:
            raise ScenarioError(f"{where}: {c.child!r} specified twice", step=index)
        if set(c.parents) != set(dag.parents(c.child)) or len(c.parents) != len(set(c.parents)):
            raise ScenarioError(f"{where}: parents of {c.child!r} do not match the dag edges",
                                step=index)
        if len(c.coeffs) != len(c.parents):
            raise ScenarioError(f"{where}: {c.child!r} needs one coefficient block per parent",
                                step=index)
        d = dims[c.child]
        try:
            coeffs = tuple(as_matrix(b, d, dims[p], f"{where}: coeffs of {c.child}<-{p}")
                           for b, p in zip(c.coeffs, c.parents))
            intercept = as_vector(c.intercept, d, f"{where}: intercept of {c.child}")
            noise = as_matrix(c.noise_cov, d, d, f"{where}: noise_cov of {c.child}")
        except ScenarioError as exc:
            raise ScenarioError(str(exc), step=index) from exc
        if not np.allclose(noise, noise.T) or np.linalg.eigvalsh(noise)[0] <= 0:
            raise ScenarioError(f"{where}: noise_cov of {c.child!r} must be positive definite",
                                step=index)
        conds[c.child] = PlannedConditional(c.child, tuple(c.parents), coeffs, intercept, noise)
    missing = [v for v in dag.ids if v not in conds and v not in carried]
    if missing:
        raise ScenarioError(f"{where}: no conditional for {missing}", step=index)

    tree = build_junction_tree(dag, cover=[carried] if carried else ())
    if step.frontier:
        unknown = [v for v in step.frontier if v not in dims]
        if unknown:
            raise ScenarioError(f"{where}: frontier variables {unknown} not declared", step=index)
        if tree.find_clique(step.frontier) is None:
            raise ScenarioError(f"{where}: frontier {list(step.frontier)} is not contained in a "
                                "single clique", step=index)

    observations = []
    for k, ob in enumerate(step.observations):
        owhere = f"{where}, observation {k}"
        family = _family(ob.family, owhere)
        targets = [v for v in ob.F if v in dims]
        if len(targets) != len(ob.F) or not targets:
            raise ScenarioError(f"{owhere}: design references undeclared variables", step=index)
        if ob.clique_hint is not None:
            if not 0 <= ob.clique_hint < len(tree) or not set(targets) <= set(tree.cliques[ob.clique_hint]):
                raise ScenarioError(f"{owhere}: clique_hint {ob.clique_hint} does not hold "
                                    f"{targets}", step=index)
            ci = ob.clique_hint
        else:
            ci = tree.find_clique(targets)
            if ci is None:
                raise ScenarioError(f"{owhere}: {targets} do not lie in one clique", step=index)
        F = []
        for v in tree.cliques[ci]:
            F.append(as_vector(ob.F[v], dims[v], f"{owhere}: F[{v}]") if v in ob.F
                     else np.zeros(dims[v]))
        try:
            design = DesignVector(ci, np.concatenate(F))
        except DomainError as exc:
            raise ScenarioError(f"{owhere}: {exc}", step=index) from exc
        if isinstance(family, dglm.Poisson) and (ob.y < 0 or ob.y != int(ob.y)):
            raise ScenarioError(f"{owhere}: Poisson count must be a nonnegative integer",
                                step=index)
        if isinstance(family, dglm.LogNormal) and not ob.y > 0:
            raise ScenarioError(f"{owhere}: log-normal observation must be positive", step=index)
        observations.append(PlannedObservation(k, family, design, float(ob.y)))

    return StepPlan(index, dag, tree, carried, tuple(conds[v] for v in dag.topological_order()
                                                     if v in conds),
                    tuple(observations), tuple(step.frontier))


def plan(scenario: Scenario) -> list[StepPlan]:
    """Validate every step of ``scenario``; raises :class:`ScenarioError`."""
    plans = []
    carried: tuple[str, ...] = ()
    for t, step in enumerate(scenario.steps):
        plans.append(plan_step(step, t, carried))
        carried = tuple(step.frontier)
    if not plans:
        raise ScenarioError("scenario has no steps")
    return plans


# -- belief construction -----------------------------------------------------

def step_joint(step: StepPlan, carried=None) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Dense Gaussian over the step's variables in declaration order.

    ``carried`` is ``(ids, mean, cov)`` for the variables handed over from the
    previous step, or ``None`` for the first step.
    """
    dims = step.dag.dims
    order = step.dag.ids
    offsets, pos = {}, 0
    for v in order:
        offsets[v] = np.arange(pos, pos + dims[v])
        pos += dims[v]
    mean = np.zeros(pos)
    cov = np.zeros((pos, pos))
    if step.carried:
        if carried is None:
            raise ScenarioError(f"step {step.index}: carried variables but no previous belief",
                                step=step.index)
        ids, cm, cc = carried
        idx = np.concatenate([offsets[v] for v in ids])
        mean[idx] = cm
        cov[np.ix_(idx, idx)] = cc
    done = list(step.carried)
    for c in step.conditionals:
        ci = offsets[c.child]
        mu = c.intercept.copy()
        # cross covariance of the child with everything placed so far
        placed = np.concatenate([offsets[v] for v in done]) if done else np.zeros(0, int)
        cross = np.zeros((len(ci), len(placed)))
        for B, p in zip(c.coeffs, c.parents):
            pi = offsets[p]
            mu += B @ mean[pi]
            cross += B @ cov[np.ix_(pi, placed)]
        var = c.noise_cov.copy()
        for B, p in zip(c.coeffs, c.parents):
            for B2, p2 in zip(c.coeffs, c.parents):
                var += B @ cov[np.ix_(offsets[p], offsets[p2])] @ B2.T
        mean[ci] = mu
        cov[np.ix_(ci, placed)] = cross
        cov[np.ix_(placed, ci)] = cross.T
        cov[np.ix_(ci, ci)] = 0.5 * (var + var.T)
        done.append(c.child)
    try:
        check_psd(cov, f"step {step.index} prior covariance")
    except ConditioningError as exc:
        raise ModelMismatchError(str(exc), step=step.index) from exc
    return order, mean, cov


def init_step(step: StepPlan, carried=None) -> TreeBelief:
    order, mean, cov = step_joint(step, carried)
    return tree_belief_from_joint(step.tree, order, mean, cov)


# -- assimilation ------------------------------------------------------------

@dataclass(frozen=True)
class DiagnosticsReport:
    dH_lambda: float
    dV_lambda: float
    dV_lower: float
    dV_upper: float
    error_bound: divergence.ErrorBoundReport | None = None


@dataclass(frozen=True)
class ObservationRecord:
    step: int
    obs_index: int
    clique: int
    family: str
    y: float
    m_prior: float
    w2_prior: float
    m_post: float = float("nan")
    w2_post: float = float("nan")
    gain: float = float("nan")
    skipped: bool = False
    reason: str = ""
    diagnostics: DiagnosticsReport | None = None


def lambda_diagnostics(family, m, w2, y, post, grid: GridSpec = DEFAULT_GRID) -> DiagnosticsReport:
    """Distances between the exact lambda posterior and its Gaussian approximation."""
    approx = divergence.NormalDensity(post.m_star, post.w2_star)
    if isinstance(family, dglm.Normal):
        # the normal update is exact Bayes
        dh = dv = 0.0
        bound = None
    else:
        truth = oracle.grid_posterior_lambda(m, w2, family, y, grid)
        dh = divergence.quadrature_hellinger(truth, approx, grid)
        dv = divergence.variation_quadrature(truth, approx, grid)
        bound = divergence.error_bound(m, w2, y, grid=grid) \
            if isinstance(family, dglm.Poisson) else None
    lo, hi = divergence.variation_bounds(dh)
    return DiagnosticsReport(dh, dv, lo, hi, bound)


def assimilate(tree_belief: TreeBelief, observations: Sequence[PlannedObservation], *,
               step: int = 0, diagnostics: bool = True, policy: str = ABORT,
               root: int = 0, grid: GridSpec = DEFAULT_GRID):
    """Fold one step's observations into ``tree_belief``.

    Observations on the same clique are applied in listed order, each starting
    from the clique belief left by the previous one.  Different cliques start
    from the prior tree; a single collect/distribute pass then calibrates.

    Returns ``(posterior TreeBelief, list of ObservationRecord)``.
    """
    if policy not in (ABORT, SKIP):
        raise ValueError(f"unknown error policy {policy!r}")
    updates = {}
    records = []
    for ob in observations:
        ci = ob.clique
        belief = updates.get(ci, tree_belief.beliefs[ci])
        name = dglm.family_name(ob.family)
        lam = None
        try:
            lam = lambda_prior(belief, ob.design)
            post = dglm.update(ob.family, lam.m, lam.w2, ob.y)
        except DomainError as exc:
            msg = f"step {step}, observation {ob.index} ({name}, y={ob.y:g}): {exc}"
            if policy == ABORT:
                raise ModelMismatchError(msg, step=step, obs_index=ob.index) from exc
            log.warning("skipping %s", msg)
            m, w2 = (lam.m, lam.w2) if lam is not None else (float("nan"), float("nan"))
            records.append(ObservationRecord(step, ob.index, ci, name, ob.y, m, w2,
                                             skipped=True, reason=str(exc)))
            continue
        belief = condition_on_lambda(belief, ob.design, post)
        updates[ci] = belief
        diag = lambda_diagnostics(ob.family, lam.m, lam.w2, ob.y, post, grid) if diagnostics else None
        records.append(ObservationRecord(step, ob.index, ci, name, ob.y, lam.m, lam.w2,
                                         post.m_star, post.w2_star, post.gain, diagnostics=diag))
    if not updates:
        return tree_belief, records
    posterior = collect_distribute(tree_belief.with_beliefs(updates), updates.keys(), root)
    return posterior, records


def frontier_marginal(tree_belief: TreeBelief, frontier: Sequence[str]):
    i = tree_belief.tree.find_clique(frontier)
    if i is None:
        raise ScenarioError(f"frontier {list(frontier)} is not contained in one clique")
    mean, cov = tree_belief.beliefs[i].marginal(list(frontier))
    return tuple(frontier), mean, cov


def evolve(tree_belief: TreeBelief, frontier: Sequence[str], next_step: StepPlan) -> TreeBelief:
    """Prior tree of ``next_step`` given the calibrated current tree."""
    carried = frontier_marginal(tree_belief, frontier) if frontier else None
    if tuple(frontier) != next_step.carried:
        raise ScenarioError(f"step {next_step.index}: carried variables do not match the "
                            "previous frontier", step=next_step.index)
    return init_step(next_step, carried)


# -- full run ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StepResult:
    plan: StepPlan
    prior: TreeBelief
    posterior: TreeBelief
    records: tuple[ObservationRecord, ...]
    oracle_error: float | None = None


@dataclass(frozen=True, eq=False)
class Trajectory:
    steps: tuple[StepResult, ...] = field(default_factory=tuple)

    def __len__(self):
        return len(self.steps)

    def marginal(self, step: int, variables: Sequence[str]):
        return self.steps[step].posterior.variable_marginal(variables)


def oracle_discrepancy(step: StepPlan, carried, posterior: TreeBelief) -> float | None:
    """Max abs gap to dense conditioning; ``None`` unless all observations are normal."""
    if not all(isinstance(o.family, dglm.Normal) for o in step.observations):
        return None
    order, mean, cov = step_joint(step, carried)
    offsets, pos = {}, 0
    for v in order:
        offsets[v] = np.arange(pos, pos + step.dag.dims[v])
        pos += step.dag.dims[v]
    rows = []
    for o in step.observations:
        row = np.zeros(pos)
        idx = np.concatenate([offsets[v] for v in step.tree.cliques[o.clique]])
        row[idx] = o.design.F
        rows.append(row)
    pm, pc = oracle.dense_condition(mean, cov, np.array(rows).reshape(-1, pos),
                                    [o.y for o in step.observations],
                                    [o.family.V for o in step.observations])
    worst = 0.0
    for b in posterior.beliefs:
        idx = np.concatenate([offsets[v] for v in b.members])
        worst = max(worst, np.abs(b.mean - pm[idx]).max(),
                    np.abs(b.cov - pc[np.ix_(idx, idx)]).max())
    return float(worst)


def run(scenario: Scenario | Sequence[StepPlan], *, diagnostics: bool = True,
        policy: str = ABORT, oracle_check: bool = False, root: int = 0,
        grid: GridSpec = DEFAULT_GRID) -> Trajectory:
    plans = plan(scenario) if isinstance(scenario, Scenario) else list(scenario)
    results = []
    prior = None
    carried = None
    for t, sp in enumerate(plans):
        try:
            if t == 0:
                prior = init_step(sp)
            else:
                prev = plans[t - 1]
                carried = frontier_marginal(results[-1].posterior, prev.frontier) \
                    if prev.frontier else None
                prior = evolve(results[-1].posterior, prev.frontier, sp)
            posterior, records = assimilate(prior, sp.observations, step=t,
                                            diagnostics=diagnostics, policy=policy,
                                            root=min(root, len(sp.tree) - 1), grid=grid)
            err = oracle_discrepancy(sp, carried, posterior) if oracle_check else None
        except ModelMismatchError:
            raise
        except DynbnError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ModelMismatchError(f"step {t}: {exc}", step=t) from exc
        if err is not None:
            log.info("step %d: oracle discrepancy %.3e", t, err)
        results.append(StepResult(sp, prior, posterior, tuple(records), err))
    return Trajectory(tuple(results))
