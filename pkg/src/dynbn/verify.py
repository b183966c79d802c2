"""Built-in property suites.

Every check returns :class:`Check` rows; ``run_suite`` prints one line per
row.  The tolerances here are the acceptance tolerances.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import dglm, divergence, oracle
from . import filter as flt
from .divergence import (GammaDensity, NormalDensity, hellinger_mvn, hellinger_normal_gamma,
                         hellinger_normal_normal, normal_gamma_i2, normal_gamma_i2_literal,
                         quadrature_hellinger, variation_quadrature)
from .graph import Dag, build_junction_tree
from .scenario import (Conditional, FamilySpec, Observation, Scenario, Step, VariableSpec,
                       as_matrix, as_vector, generate)

SUITES = ("gaussian-exactness", "dglm-conjugacy", "hellinger", "bounds", "dispersal")


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


# -- random gaussian scenarios and their dense oracle ---------------------------

def random_gaussian_scenario(rng: np.random.Generator, max_vars: int = 10,
                             max_steps: int = 3) -> Scenario:
    """Random scalar linear-Gaussian scenario with normal observations only."""
    n_steps = int(rng.integers(1, max_steps + 1))
    steps = []
    carried: list[str] = []
    serial = 0
    for t in range(n_steps):
        n_new = int(rng.integers(1, max_vars - len(carried) + 1))
        ids = list(carried)
        edges, conds = [], []
        for _ in range(n_new):
            v = f"v{serial}"
            serial += 1
            k = int(rng.integers(0, min(3, len(ids)) + 1))
            parents = sorted(rng.choice(ids, size=k, replace=False).tolist()) if k else []
            edges += [(p, v) for p in parents]
            conds.append(Conditional(child=v, parents=parents,
                                     coeffs=[float(rng.uniform(-1.2, 1.2)) for _ in parents],
                                     intercept=float(rng.normal()),
                                     noise_cov=float(rng.uniform(0.2, 2.0))))
            ids.append(v)
        variables = [VariableSpec(id=v) for v in ids]
        tree = build_junction_tree(Dag(tuple((v, 1) for v in ids), tuple(edges)),
                                   cover=[carried] if carried else ())
        obs = []
        for _ in range(int(rng.integers(0, 5))):
            clique = tree.cliques[int(rng.integers(len(tree)))]
            k = int(rng.integers(1, len(clique) + 1))
            targets = rng.choice(list(clique), size=k, replace=False).tolist()
            F = {v: float(rng.uniform(0.3, 1.5) * rng.choice([-1, 1])) for v in targets}
            obs.append(Observation(family=FamilySpec(type="normal", V=float(rng.uniform(0.1, 2.0))),
                                   F=F, y=float(rng.normal(0, 2))))
        last = t == n_steps - 1
        if last:
            frontier = []
        else:
            clique = tree.cliques[int(rng.integers(len(tree)))]
            k = int(rng.integers(1, min(len(clique), 3) + 1))
            frontier = sorted(rng.choice(list(clique), size=k, replace=False).tolist())
        steps.append(Step(variables=variables, edges=edges, conditionals=conds,
                          observations=obs, frontier=frontier))
        carried = frontier
    return Scenario(steps=steps)


def dense_filtering_marginals(scenario: Scenario):
    """Per step, the exact joint of that step's variables given observations so far.

    Builds one dense Gaussian over every variable of every step (carried ids
    are shared) and conditions on all observations up to each step at once.
    """
    order: list[str] = []
    dims: dict[str, int] = {}
    for step in scenario.steps:
        for v in step.variables:
            if v.id not in dims:
                order.append(v.id)
                dims[v.id] = v.dim
    offsets, pos = {}, 0
    for v in order:
        offsets[v] = np.arange(pos, pos + dims[v])
        pos += dims[v]
    mean, cov = np.zeros(pos), np.zeros((pos, pos))
    done: list[str] = []
    rows, ys, noise = [], [], []
    out = []
    for step in scenario.steps:
        pending = {c.child: c for c in step.conditionals}
        while pending:
            ready = [c for c in pending.values() if all(p in done for p in c.parents)]
            for c in ready:
                d = dims[c.child]
                ci = offsets[c.child]
                placed = np.concatenate([offsets[v] for v in done]) if done else np.zeros(0, int)
                mu = as_vector(c.intercept, d, "intercept").copy()
                cross = np.zeros((d, len(placed)))
                var = as_matrix(c.noise_cov, d, d, "noise").copy()
                blocks = [(as_matrix(b, d, dims[p], "coeff"), offsets[p])
                          for b, p in zip(c.coeffs, c.parents)]
                for B, pi in blocks:
                    mu += B @ mean[pi]
                    cross += B @ cov[np.ix_(pi, placed)]
                    for B2, pj in blocks:
                        var += B @ cov[np.ix_(pi, pj)] @ B2.T
                mean[ci] = mu
                cov[np.ix_(ci, placed)] = cross
                cov[np.ix_(placed, ci)] = cross.T
                cov[np.ix_(ci, ci)] = var
                done.append(c.child)
                del pending[c.child]
        for ob in step.observations:
            row = np.zeros(pos)
            for v, coef in ob.F.items():
                row[offsets[v]] = as_vector(coef, dims[v], "F")
            rows.append(row)
            ys.append(ob.y)
            noise.append(ob.family.V)
        pm, pc = oracle.dense_condition(mean, cov, np.array(rows).reshape(-1, pos), ys, noise)
        idx = {v.id: offsets[v.id] for v in step.variables}
        out.append((idx, pm, pc))
    return out


def compare_to_dense(scenario: Scenario, trajectory: flt.Trajectory) -> float:
    worst = 0.0
    for res, (idx, pm, pc) in zip(trajectory.steps, dense_filtering_marginals(scenario)):
        for b in res.posterior.beliefs:
            sel = np.concatenate([idx[v] for v in b.members])
            worst = max(worst, np.abs(b.mean - pm[sel]).max(),
                        np.abs(b.cov - pc[np.ix_(sel, sel)]).max())
    return float(worst)


def scalar_kalman(scenario: Scenario):
    """Textbook scalar Kalman recursions read straight off a kalman-chain file."""
    m = c = None
    out = []
    for t, step in enumerate(scenario.steps):
        (cond,) = step.conditionals
        if t == 0:
            m, c = float(cond.intercept), float(cond.noise_cov)
        else:
            g = float(cond.coeffs[0])
            m, c = g * m + float(cond.intercept), g * g * c + float(cond.noise_cov)
        for ob in step.observations:
            (f,) = ob.F.values()
            f = float(f)
            s = f * f * c + ob.family.V
            k = c * f / s
            m, c = m + k * (ob.y - f * m), c - k * f * c
        out.append((m, c))
    return out


# -- criteria ------------------------------------------------------------------

def check_gaussian_exactness(n: int = 200, seed: int = 20240501, tol: float = 1e-8,
                             budget: float = 10.0) -> list[Check]:
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(n):
        sc = random_gaussian_scenario(rng)
        worst = max(worst, compare_to_dense(sc, flt.run(sc, diagnostics=False)))
    elapsed = time.perf_counter() - start
    return [
        Check("gaussian exactness vs dense conditioning", worst <= tol,
              f"{n} scenarios, max abs error {worst:.2e} (tol {tol:g})"),
        Check("gaussian exactness runtime", elapsed < budget, f"{elapsed:.2f} s (< {budget:g} s)"),
    ]


def check_kalman_reduction(seed: int = 11, tol: float = 1e-10) -> list[Check]:
    sc = generate("kalman-chain", seed)
    traj = flt.run(sc, diagnostics=False)
    worst = 0.0
    for t, (m, c) in enumerate(scalar_kalman(sc)):
        mean, cov = traj.marginal(t, [f"x{t}"])
        worst = max(worst, abs(mean[0] - m), abs(cov[0, 0] - c))
    return [Check("kalman-chain matches scalar Kalman filter", worst <= tol and len(traj) == 10,
                  f"{len(traj)} steps, max abs error {worst:.2e} (tol {tol:g})")]


def check_dglm_conjugacy(budget: float = 1.0) -> list[Check]:
    start = time.perf_counter()
    grid = [0.5, 1, 2, 4, 8, 16]
    pois = logn = 0.0
    for m in grid:
        for w2 in grid:
            alpha, beta = m * m / w2, m / w2
            for y in range(21):
                post = dglm.update_poisson(m, w2, y)
                mean = (alpha + y) / (beta + 1)
                var = (alpha + y) / (beta + 1) ** 2
                pois = max(pois, abs(post.m_star - mean) / mean, abs(post.w2_star - var) / var)
                if y == 0:
                    continue
                for V in (0.25, 1.0, 4.0):
                    b = math.log(1 + w2 / (m * m))
                    a = math.log(m) - b / 2
                    b_post = b * V / (b + V)
                    a_post = (a * V + math.log(y) * b) / (b + V)
                    mean = math.exp(a_post + b_post / 2)
                    var = (math.exp(b_post) - 1) * mean * mean
                    post = dglm.update_lognormal(m, w2, y, V)
                    logn = max(logn, abs(post.m_star - mean) / mean, abs(post.w2_star - var) / var)
    elapsed = time.perf_counter() - start
    return [
        Check("poisson update equals conjugate gamma posterior", pois <= 1e-12,
              f"max rel error {pois:.2e} (tol 1e-12)"),
        Check("lognormal update equals log-space conjugate posterior", logn <= 1e-10,
              f"max rel error {logn:.2e} (tol 1e-10)"),
        Check("dglm conjugacy runtime", elapsed < budget, f"{elapsed:.3f} s (< {budget:g} s)"),
    ]


def _random_spd(rng, lo=0.5, hi=3.0):
    sd = rng.uniform(math.sqrt(lo), math.sqrt(hi), size=2)
    rho = rng.uniform(-0.8, 0.8)
    return np.array([[sd[0] ** 2, rho * sd[0] * sd[1]], [rho * sd[0] * sd[1], sd[1] ** 2]])


def check_hellinger(n: int = 100, seed: int = 7, tol: float = 1e-6,
                    slack: float = 1e-9) -> list[Check]:
    rng = np.random.default_rng(seed)
    err1 = err2 = 0.0
    axioms = sandwich = True
    worst_sym = 0.0
    worst_tri = worst_sand = math.inf
    for _ in range(n):
        mu = rng.uniform(-3, 3, size=3)
        var = rng.uniform(0.2, 4.0, size=3)
        d12 = hellinger_normal_normal(mu[0], var[0], mu[1], var[1])
        d21 = hellinger_normal_normal(mu[1], var[1], mu[0], var[0])
        d13 = hellinger_normal_normal(mu[0], var[0], mu[2], var[2])
        d23 = hellinger_normal_normal(mu[1], var[1], mu[2], var[2])
        f, h = NormalDensity(mu[0], var[0]), NormalDensity(mu[1], var[1])
        err1 = max(err1, abs(d12 - quadrature_hellinger(f, h)))
        worst_sym = max(worst_sym, abs(d12 - d21))
        worst_tri = min(worst_tri, d13 + d23 - d12)
        axioms &= hellinger_normal_normal(mu[0], var[0], mu[0], var[0]) == 0.0
        axioms &= 0.0 <= d12 <= 1.0
        dv = variation_quadrature(f, h)
        gap = min(dv - d12 ** 2, math.sqrt(2) * d12 - dv)
        worst_sand = min(worst_sand, gap)

        m1, m2 = rng.uniform(-2, 2, size=2), rng.uniform(-2, 2, size=2)
        s1, s2 = _random_spd(rng), _random_spd(rng)
        err2 = max(err2, abs(hellinger_mvn(m1, s1, m2, s2) - oracle.hellinger_2d_quadrature(m1, s1, m2, s2)))
    axioms &= worst_sym <= 1e-12 and worst_tri >= -slack
    sandwich = worst_sand >= -slack
    return [
        Check("normal-normal closed form vs quadrature", err1 <= tol, f"max abs error {err1:.2e} (tol {tol:g})"),
        Check("bivariate closed form vs 2-D quadrature", err2 <= tol, f"max abs error {err2:.2e} (tol {tol:g})"),
        Check("metric axioms", bool(axioms),
              f"symmetry gap {worst_sym:.1e}, worst triangle slack {worst_tri:.1e}"),
        Check("variation sandwich", bool(sandwich), f"worst slack {worst_sand:.2e} (>= -{slack:g})"),
    ]


def check_marginalization(seed: int = 3) -> list[Check]:
    rng = np.random.default_rng(seed)
    shared = []
    for _ in range(50):
        pair = divergence.shared_conditional_pair(
            rng.uniform(-2, 2), rng.uniform(0.3, 3), rng.uniform(-2, 2), rng.uniform(0.3, 3),
            rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(0.1, 2))
        shared.append((*pair, True))
    free = [(rng.uniform(-2, 2, 2), _random_spd(rng), rng.uniform(-2, 2, 2), _random_spd(rng), False)
            for _ in range(100)]
    r1 = divergence.marginalization_checks(shared)
    r2 = divergence.marginalization_checks(free)
    gap = max(abs(r.d_joint - r.d_margin) for r in r1.rows)
    slack = min(r.d_joint - r.d_margin for r in r2.rows)
    return [
        Check("shared conditional: joint distance equals margin distance", r1.all_ok,
              f"50 pairs, max gap {gap:.2e} (tol 1e-6)"),
        Check("marginalizing never increases the distance", r2.all_ok,
              f"100 pairs, min d_joint - d_margin {slack:.2e}"),
    ]


def normal_gamma_audit(alphas=(1, 5, 25, 100, 400)):
    rows = []
    for a in alphas:
        quad = hellinger_normal_gamma(float(a), float(a)).quadrature
        rows.append((a, quad, normal_gamma_i2_literal(a), normal_gamma_i2(a), (1 - quad ** 2) ** 2))
    return rows


def check_normal_gamma() -> list[Check]:
    rows = normal_gamma_audit()
    quads = [r[1] for r in rows]
    finite = all(math.isfinite(q) for q in quads)
    decreasing = all(b < a for a, b in zip(quads, quads[1:]))
    small = all(q < 0.05 for (a, q, *_) in rows if a >= 100)
    checks = [
        Check("normal vs moment-matched gamma: finite", finite, ", ".join(f"{q:.3e}" for q in quads)),
        Check("normal vs moment-matched gamma: decreasing in alpha", decreasing, ""),
        Check("normal vs moment-matched gamma: < 0.05 for alpha >= 100", small, ""),
    ]
    for a, q, lit, exact, i2q in rows:
        checks.append(Check(f"closed form audit alpha={a}", True,
                            f"quadrature dH {q:.6e}; I^2 quad {i2q:.10f}, literal {lit:.4g} "
                            f"(|dev| {abs(lit - i2q):.3g}), exp(-alpha/2) form {exact:.10f} "
                            f"(|dev| {abs(exact - i2q):.1e})"))
    return checks


def check_bounds(tol: float = 0.05) -> list[Check]:
    checks = []
    for v in (20, 25, 50):
        r = divergence.error_bound(v, v, v)
        ok = r.quadrature_dH < tol and (not r.applicable or r.quadrature_dH <= r.bound)
        checks.append(Check(f"poisson m=w2=y={v}", ok,
                            f"quadrature dH {r.quadrature_dH:.4f} (< {tol}), bound {r.bound:.4f} "
                            f"applicable={r.applicable}; vs 0.01 line: "
                            f"{'below' if r.quadrature_dH <= 0.01 else 'above'}"))
    return checks


def check_small_counts() -> list[Check]:
    big = divergence.error_bound(25, 25, 25).quadrature_dH
    checks = []
    for y in (0, 1):
        small = divergence.error_bound(1, 1, y).quadrature_dH
        checks.append(Check(f"small count degrades (m=w2=1, y={y})", small > big,
                            f"{small:.4f} > {big:.4f}"))
    return checks


def check_dispersal(seed: int = 7, budget: float = 5.0, slack: float = 1e-9) -> list[Check]:
    sc = generate("dispersal-chain", seed)
    start = time.perf_counter()
    traj = flt.run(sc)
    elapsed = time.perf_counter() - start
    records = [r for s in traj.steps for r in s.records]
    populated = bool(records) and all(
        r.diagnostics is not None and r.diagnostics.error_bound is not None
        and math.isfinite(r.diagnostics.dH_lambda) for r in records)
    calib = max(s.posterior.max_separator_discrepancy() for s in traj.steps)
    psd = all(np.linalg.eigvalsh(b.cov)[0] >= -1e-9 * np.trace(b.cov)
              for s in traj.steps for b in s.posterior.beliefs)
    sand = min(min(r.diagnostics.dV_lambda - r.diagnostics.dH_lambda ** 2,
                   math.sqrt(2) * r.diagnostics.dH_lambda - r.diagnostics.dV_lambda)
               for r in records)
    coherent = all(not r.diagnostics.error_bound.applicable
                   or r.diagnostics.error_bound.quadrature_dH <= r.diagnostics.error_bound.bound
                   for r in records)
    worst = max(r.diagnostics.dH_lambda for r in records if r.y >= 20) if records else math.nan
    return [
        Check("dispersal chain completes", len(traj) == 10, f"{len(traj)} steps in {elapsed:.2f} s"),
        Check("dispersal runtime", elapsed < budget, f"{elapsed:.2f} s (< {budget:g} s)"),
        Check("diagnostics populated", populated, f"{len(records)} observations"),
        Check("calibration consistency", calib <= 1e-9, f"max separator gap {calib:.1e}"),
        Check("covariances PSD", psd, ""),
        Check("variation sandwich on lambda posteriors", sand >= -slack, f"worst slack {sand:.2e}"),
        Check("quadrature dH within bound when applicable", coherent, ""),
        Check("dH for counts >= 20", worst < 0.05, f"max {worst:.4f} (< 0.05; 0.01 line informational)"),
    ]


SUITE_CHECKS: dict[str, list[Callable[[], list[Check]]]] = {
    "gaussian-exactness": [check_gaussian_exactness, check_kalman_reduction],
    "dglm-conjugacy": [check_dglm_conjugacy],
    "hellinger": [check_hellinger, check_marginalization],
    "bounds": [check_normal_gamma, check_bounds, check_small_counts],
    "dispersal": [check_dispersal],
}


def run_suite(name: str, echo: Callable[[str], None] = print) -> bool:
    if name not in SUITE_CHECKS:
        raise KeyError(name)
    ok = True
    for fn in SUITE_CHECKS[name]:
        for c in fn():
            echo(c.line())
            ok &= c.passed
    return ok
