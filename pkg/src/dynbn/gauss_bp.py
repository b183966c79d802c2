"""Gaussian clique beliefs and exact propagation on a junction tree.

Beliefs are kept in moment form (mean, covariance).  A :class:`TreeBelief`
also stores one marginal per separator, the Gaussian analogue of a Hugin
separator potential; collect/distribute uses it to combine independently
updated cliques without double counting the shared prior.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConditioningError, DegenerateDesignError
from .graph import JunctionTree

PINV_RTOL = 1e-10
SYM_TOL = 1e-12
PSD_RTOL = 1e-9
DESIGN_FLOOR = 1e-12
LOG_2PI = np.log(2.0 * np.pi)


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def check_psd(cov: np.ndarray, what: str = "covariance") -> None:
    if cov.size == 0:
        return
    lo = np.linalg.eigvalsh(cov)[0]
    if lo < -PSD_RTOL * max(np.trace(cov), 1e-300):
        raise ConditioningError(f"{what} not positive semidefinite (min eigenvalue {lo:.3e})")


def spd_pinv(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric pseudo-inverse and the projector onto its numerical null space."""
    w, v = np.linalg.eigh(symmetrize(m))
    cut = PINV_RTOL * max(abs(w).max(initial=0.0), 1e-300)
    keep = w > cut
    inv = (v[:, keep] / w[keep]) @ v[:, keep].T
    null = v[:, ~keep] @ v[:, ~keep].T
    return inv, null


def gaussian_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    d = np.atleast_1d(x) - mean
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("degenerate covariance in log-density") from exc
    z = np.linalg.solve(chol, d)
    return float(-0.5 * (len(d) * LOG_2PI + z @ z) - np.log(np.diag(chol)).sum())


@dataclass(frozen=True, eq=False)
class CliqueBelief:
    """Gaussian marginal over one clique's variables (blocks in member order)."""

    members: tuple[str, ...]
    dims: tuple[int, ...]
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = symmetrize(np.array(self.cov, dtype=float).reshape(len(mean), len(mean)))
        if len(mean) != sum(self.dims) or len(self.dims) != len(self.members):
            raise ValueError("mean/cov size does not match member dimensions")
        check_psd(cov, f"covariance of clique {self.members}")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return len(self.mean)

    def index(self, variables: Iterable[str]) -> np.ndarray:
        offsets = np.concatenate([[0], np.cumsum(self.dims)])
        pos = {v: i for i, v in enumerate(self.members)}
        out = []
        for v in variables:
            i = pos[v]
            out.extend(range(offsets[i], offsets[i + 1]))
        return np.array(out, dtype=int)

    def marginal(self, variables: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        idx = self.index(variables)
        return self.mean[idx], self.cov[np.ix_(idx, idx)]

    def variance(self, variable: str) -> np.ndarray:
        idx = self.index([variable])
        return np.diag(self.cov)[idx]

    def logpdf(self, x: np.ndarray) -> float:
        return gaussian_logpdf(x, self.mean, self.cov)


@dataclass(frozen=True)
class DesignVector:
    """Design F of a scalar linear predictor lambda = F' theta on one clique."""

    clique: int
    F: np.ndarray

    def __post_init__(self):
        F = np.array(self.F, dtype=float).reshape(-1)
        if not np.any(F):
            raise DegenerateDesignError("design vector is identically zero")
        object.__setattr__(self, "F", F)


@dataclass(frozen=True)
class LambdaBelief:
    m: float
    w2: float

    def __post_init__(self):
        if not self.w2 > 0:
            raise DegenerateDesignError(f"lambda variance must be positive, got {self.w2}")


def lambda_prior(belief: CliqueBelief, design: DesignVector) -> LambdaBelief:
    F = design.F
    if F.shape != belief.mean.shape:
        raise ValueError(f"design length {F.size} does not match clique dimension {belief.dim}")
    w2 = float(F @ belief.cov @ F)
    if w2 <= DESIGN_FLOOR:
        raise DegenerateDesignError(f"prior variance of lambda is {w2:.3e}")
    return LambdaBelief(float(F @ belief.mean), w2)


def condition_on_lambda(belief: CliqueBelief, design: DesignVector, posterior) -> CliqueBelief:
    """Partial marginal of a clique after its linear predictor moves to ``posterior``.

    ``posterior`` is anything with ``m``/``w2`` or ``m_star``/``w2_star``
    attributes.  The conditional of the clique given lambda is untouched.
    """
    prior = lambda_prior(belief, design)
    m_post = getattr(posterior, "m_star", None)
    if m_post is None:
        m_post, w2_post = posterior.m, posterior.w2
    else:
        w2_post = posterior.w2_star
    gain = belief.cov @ design.F / prior.w2
    mean = belief.mean + gain * (m_post - prior.m)
    cov = belief.cov + (w2_post - prior.w2) * np.outer(gain, gain)
    return replace(belief, mean=mean, cov=cov)


def absorb_marginal(target: CliqueBelief, separator: Sequence[str],
                    mu_s: np.ndarray, sigma_s: np.ndarray) -> CliqueBelief:
    """Replace the separator marginal of ``target`` and regress the rest on it."""
    separator = list(separator)
    s_idx = target.index(separator)
    rest = [v for v in target.members if v not in set(separator)]
    r_idx = target.index(rest)
    mu_s = np.asarray(mu_s, dtype=float)
    sigma_s = symmetrize(np.asarray(sigma_s, dtype=float))
    mu_t, sig_t = target.mean[s_idx], target.cov[np.ix_(s_idx, s_idx)]
    inv, null = spd_pinv(sig_t)
    if null.any():
        scale = max(np.abs(sig_t).max(), np.abs(sigma_s).max(), 1e-300)
        leak = max(np.abs(null @ (mu_s - mu_t)).max() / np.sqrt(scale),
                   np.abs(null @ (sigma_s - sig_t) @ null).max() / scale)
        if leak > 1e-8:
            raise ConditioningError(f"separator {separator} covariance is singular "
                                    "in a direction the incoming marginal changes")
    gain = target.cov[np.ix_(r_idx, s_idx)] @ inv
    mean = target.mean.copy()
    cov = target.cov.copy()
    mean[s_idx] = mu_s
    mean[r_idx] = target.mean[r_idx] + gain @ (mu_s - mu_t)
    cov[np.ix_(s_idx, s_idx)] = sigma_s
    cov[np.ix_(r_idx, r_idx)] = target.cov[np.ix_(r_idx, r_idx)] + gain @ (sigma_s - sig_t) @ gain.T
    cross = gain @ sigma_s
    cov[np.ix_(r_idx, s_idx)] = cross
    cov[np.ix_(s_idx, r_idx)] = cross.T
    return replace(target, mean=mean, cov=cov)


def absorb(target: CliqueBelief, source: CliqueBelief, separator: Sequence[str]) -> CliqueBelief:
    """``target`` absorbs from neighbouring ``source`` through ``separator``."""
    mu_s, sigma_s = source.marginal(list(separator))
    return absorb_marginal(target, separator, mu_s, sigma_s)


def fuse_separator(current, incoming, stored) -> tuple[np.ndarray, np.ndarray]:
    """Combine two beliefs on a separator that share the ``stored`` one as common factor.

    Information form: J = J_cur + J_in - J_stored.
    """
    (m1, s1), (m2, s2), (m0, s0) = current, incoming, stored
    j1, j2, j0 = (spd_pinv(s)[0] for s in (s1, s2, s0))
    prec = symmetrize(j1 + j2 - j0)
    try:
        cov = np.linalg.inv(prec)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("fused separator precision is singular") from exc
    cov = symmetrize(cov)
    if np.linalg.eigvalsh(cov)[0] <= 0:
        raise ConditioningError("fused separator precision is not positive definite")
    return cov @ (j1 @ m1 + j2 @ m2 - j0 @ m0), cov


def _same(a, b) -> bool:
    (ma, sa), (mb, sb) = a, b
    scale = max(np.abs(sa).max(initial=0.0), 1.0)
    return (np.allclose(ma, mb, rtol=0, atol=1e-13 * max(np.sqrt(scale), 1.0))
            and np.allclose(sa, sb, rtol=0, atol=1e-13 * scale))


@dataclass(frozen=True, eq=False)
class TreeBelief:
    """Clique beliefs on a junction tree plus the last calibrated separator marginals.

    ``separator_beliefs[i]`` belongs to the edge (i, tree.parents[i]) and is
    ``None`` for component roots.
    """

    tree: JunctionTree
    beliefs: tuple[CliqueBelief, ...]
    separator_beliefs: tuple = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "beliefs", tuple(self.beliefs))
        if self.separator_beliefs is None:
            seps = []
            for i, sep in enumerate(self.tree.separators):
                seps.append(self.beliefs[i].marginal(sep) if sep else None)
            object.__setattr__(self, "separator_beliefs", tuple(seps))

    def with_beliefs(self, updates: dict[int, CliqueBelief]) -> "TreeBelief":
        """Swap in partial marginals; separator marginals are left as they were."""
        beliefs = list(self.beliefs)
        for i, b in updates.items():
            beliefs[i] = b
        return TreeBelief(self.tree, tuple(beliefs), self.separator_beliefs)

    def variable_marginal(self, variables: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        i = self.tree.find_clique(variables)
        if i is None:
            raise KeyError(f"no clique contains {list(variables)}")
        return self.beliefs[i].marginal(list(variables))

    def max_separator_discrepancy(self) -> float:
        """Largest mismatch between the two sides of any separator."""
        worst = 0.0
        for i, r in enumerate(self.tree.parents):
            if r is None:
                continue
            sep = self.tree.separators[i]
            (ma, sa), (mb, sb) = self.beliefs[i].marginal(sep), self.beliefs[r].marginal(sep)
            worst = max(worst, np.abs(ma - mb).max(), np.abs(sa - sb).max())
        return float(worst)


def _edge_key(tree: JunctionTree, a: int, b: int) -> int:
    return a if tree.parents[a] == b else b


def collect_distribute(tree_belief: TreeBelief, updated: Iterable[int],
                       root: int | None = None) -> TreeBelief:
    """Calibrate after the cliques in ``updated`` received partial marginals.

    Collect absorbs towards the root along edges whose far side holds evidence;
    distribute then absorbs outward to every clique.  Components of a forest
    without the root are rooted at their first clique.
    """
    updated = set(updated)
    if not updated:
        return tree_belief
    tree = tree_belief.tree
    root = 0 if root is None else root
    if not 0 <= root < len(tree):
        raise IndexError(f"root {root} out of range")
    beliefs = list(tree_belief.beliefs)
    seps = list(tree_belief.separator_beliefs)

    def sep_vars(a, b):
        return tree.separators[_edge_key(tree, a, b)]

    def has_evidence(v, parent):
        if v in updated:
            return True
        return any(has_evidence(c, v) for c in tree.neighbours(v) if c != parent)

    def collect(v, parent):
        for c in tree.neighbours(v):
            if c == parent:
                continue
            collect(c, v)
            if not has_evidence(c, v):
                continue
            sep = sep_vars(c, v)
            key = _edge_key(tree, c, v)
            msg = beliefs[c].marginal(sep)
            current = beliefs[v].marginal(sep)
            stored = seps[key]
            new = msg if _same(current, stored) else fuse_separator(current, msg, stored)
            beliefs[v] = absorb_marginal(beliefs[v], sep, *new)
            seps[key] = msg

    def distribute(v, parent):
        for c in tree.neighbours(v):
            if c == parent:
                continue
            sep = sep_vars(c, v)
            key = _edge_key(tree, c, v)
            msg = beliefs[v].marginal(sep)
            beliefs[c] = absorb_marginal(beliefs[c], sep, *msg)
            seps[key] = msg
            distribute(c, v)

    for comp in tree.components():
        if not updated & set(comp):
            continue
        r = root if root in comp else comp[0]
        collect(r, None)
        distribute(r, None)
    return TreeBelief(tree, tuple(beliefs), tuple(seps))


def joint_log_density(tree_belief: TreeBelief, assignment) -> float:
    """Log of the clique-over-separator product for a full state vector.

    ``assignment`` is either a mapping from variable id to value(s) or a flat
    vector ordered by the tree's variable declaration order.
    """
    tree = tree_belief.tree
    if isinstance(assignment, dict):
        values = {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in assignment.items()}
    else:
        flat = np.asarray(assignment, dtype=float).reshape(-1)
        values, pos = {}, 0
        for v, d in tree.dims.items():
            values[v] = flat[pos:pos + d]
            pos += d

    def gather(vs):
        return np.concatenate([values[v] for v in vs])

    total = sum(b.logpdf(gather(b.members)) for b in tree_belief.beliefs)
    for i, sep in enumerate(tree.separators):
        if not sep:
            continue
        mu, cov = tree_belief.beliefs[i].marginal(sep)
        total -= gaussian_logpdf(gather(sep), mu, cov)
    return float(total)


def tree_belief_from_joint(tree: JunctionTree, order: Sequence[str],
                           mean: np.ndarray, cov: np.ndarray) -> TreeBelief:
    """Clique marginals read off a dense joint Gaussian over ``order``."""
    offsets, pos = {}, 0
    for v in order:
        offsets[v] = np.arange(pos, pos + tree.dims[v])
        pos += tree.dims[v]
    beliefs = []
    for clique in tree.cliques:
        idx = np.concatenate([offsets[v] for v in clique])
        beliefs.append(CliqueBelief(clique, tuple(tree.dims[v] for v in clique),
                                    mean[idx], cov[np.ix_(idx, idx)]))
    return TreeBelief(tree, tuple(beliefs))
