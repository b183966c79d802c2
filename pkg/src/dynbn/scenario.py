"""Scenario file schema (strict JSON), loading, emitting and synthetic templates."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ScenarioError

Number = float
Matrix = Union[Number, list[list[Number]]]
Vector = Union[Number, list[Number]]

SCHEMA_VERSION = 1
TEMPLATES = ("kalman-chain", "dispersal-chain", "growth")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class VariableSpec(_Strict):
    id: str
    dim: int = Field(1, ge=1)


class Conditional(_Strict):
    """``child = intercept + sum_p coeffs[p] @ parent_p + N(0, noise_cov)``."""

    child: str
    parents: list[str] = []
    coeffs: list[Matrix] = []
    intercept: Vector = 0.0
    noise_cov: Matrix


class FamilySpec(_Strict):
    type: Literal["normal", "poisson", "lognormal"]
    V: Optional[float] = None


class Observation(_Strict):
    clique_hint: Optional[int] = None
    family: FamilySpec
    F: dict[str, Vector]
    y: float


class Step(_Strict):
    variables: list[VariableSpec]
    edges: list[tuple[str, str]] = []
    conditionals: list[Conditional] = []
    observations: list[Observation] = []
    frontier: list[str] = []


class Scenario(_Strict):
    version: Literal[1] = SCHEMA_VERSION
    steps: list[Step]


def parse(text: str) -> Scenario:
    try:
        return Scenario.model_validate_json(text)
    except ValidationError as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from exc


def load(path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return parse(text)


def emit(scenario: Scenario) -> str:
    return json.dumps(scenario.model_dump(mode="json", exclude_none=True), indent=1) + "\n"


def save(scenario: Scenario, path) -> None:
    Path(path).write_text(emit(scenario), encoding="utf-8")


def as_matrix(value: Matrix, rows: int, cols: int, what: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.shape != (rows, cols):
        raise ScenarioError(f"{what}: expected shape {(rows, cols)}, got {arr.shape}")
    return arr


def as_vector(value: Vector, size: int, what: str) -> np.ndarray:
    arr = np.atleast_1d(np.array(value, dtype=float))
    if arr.ndim == 1 and arr.shape == (1,) and size > 1 and isinstance(value, (int, float)):
        arr = np.full(size, float(value))
    if arr.shape != (size,):
        raise ScenarioError(f"{what}: expected length {size}, got shape {arr.shape}")
    return arr


# -- templates ---------------------------------------------------------------

def _r(x: float) -> float:
    # keep generated files short and exactly reproducible
    return float(np.round(x, 6))


def kalman_chain(seed: int, steps: int = 10, q: float = 0.5, V: float = 1.0,
                 m0: float = 0.0, c0: float = 2.0) -> Scenario:
    """Scalar random walk ``x_t = x_{t-1} + N(0, q)`` observed with N(0, V) noise."""
    rng = np.random.default_rng(seed)
    truth = m0 + rng.normal(0, np.sqrt(c0))
    out = []
    for t in range(steps):
        cur = f"x{t}"
        if t == 0:
            variables = [VariableSpec(id=cur)]
            edges, conds = [], [Conditional(child=cur, intercept=m0, noise_cov=c0)]
        else:
            prev = f"x{t - 1}"
            truth += rng.normal(0, np.sqrt(q))
            variables = [VariableSpec(id=prev), VariableSpec(id=cur)]
            edges = [(prev, cur)]
            conds = [Conditional(child=cur, parents=[prev], coeffs=[1.0], noise_cov=q)]
        y = _r(truth + rng.normal(0, np.sqrt(V)))
        obs = [Observation(family=FamilySpec(type="normal", V=V), F={cur: 1.0}, y=y)]
        out.append(Step(variables=variables, edges=edges, conditionals=conds,
                        observations=obs, frontier=[cur]))
    return Scenario(steps=out)


def dispersal_chain(seed: int, steps: int = 10) -> Scenario:
    """Puff-mass chain with Poisson sensor counts.

    Each step emits a new puff whose mass is Markov in the previous puff's
    mass, and splits off a fragment carrying a share of it.  Sensors count
    particles from the puff and from the fragment.
    """
    rng = np.random.default_rng(seed)
    rho, level, q = 0.9, 40.0, 4.0
    share, frag_noise = 0.6, 2.0
    mass = rng.normal(level, 4.0)
    out = []
    for t in range(steps):
        puff, frag = f"m{t}", f"f{t}"
        if t == 0:
            variables = [VariableSpec(id=puff), VariableSpec(id=frag)]
            edges = [(puff, frag)]
            conds = [Conditional(child=puff, intercept=level, noise_cov=16.0)]
        else:
            prev = f"m{t - 1}"
            mass = rho * mass + (1 - rho) * level + rng.normal(0, np.sqrt(q))
            variables = [VariableSpec(id=prev), VariableSpec(id=puff), VariableSpec(id=frag)]
            edges = [(prev, puff), (puff, frag)]
            conds = [Conditional(child=puff, parents=[prev], coeffs=[rho],
                                 intercept=(1 - rho) * level, noise_cov=q)]
        conds.append(Conditional(child=frag, parents=[puff], coeffs=[share], noise_cov=frag_noise))
        frag_mass = share * mass + rng.normal(0, np.sqrt(frag_noise))
        obs = [
            Observation(family=FamilySpec(type="poisson"), F={puff: 1.0},
                        y=float(rng.poisson(max(mass, 0.0)))),
            Observation(family=FamilySpec(type="poisson"), F={frag: 1.0},
                        y=float(rng.poisson(max(frag_mass, 0.0)))),
        ]
        out.append(Step(variables=variables, edges=edges, conditionals=conds,
                        observations=obs, frontier=[puff]))
    return Scenario(steps=out)


def growth(seed: int, steps: int = 3) -> Scenario:
    """Structure that grows: step t hangs t+1 leaf pairs (with a collider) off the level."""
    rng = np.random.default_rng(seed)
    out = []
    for t in range(steps):
        lvl = f"x{t}"
        variables, edges, conds = [], [], []
        if t == 0:
            variables.append(VariableSpec(id=lvl))
            conds.append(Conditional(child=lvl, intercept=_r(rng.normal()), noise_cov=1.0))
        else:
            prev = f"x{t - 1}"
            variables += [VariableSpec(id=prev), VariableSpec(id=lvl)]
            edges.append((prev, lvl))
            conds.append(Conditional(child=lvl, parents=[prev], coeffs=[_r(rng.uniform(0.5, 1.0))],
                                     noise_cov=0.5))
        obs = []
        for k in range(t + 1):
            a, b, c = f"a{t}_{k}", f"b{t}_{k}", f"c{t}_{k}"
            variables += [VariableSpec(id=a), VariableSpec(id=b), VariableSpec(id=c)]
            edges += [(lvl, a), (lvl, b), (a, c), (b, c)]
            conds += [
                Conditional(child=a, parents=[lvl], coeffs=[_r(rng.uniform(0.5, 1.5))], noise_cov=0.4),
                Conditional(child=b, parents=[lvl], coeffs=[_r(rng.uniform(-1.0, 1.0))], noise_cov=0.3),
                Conditional(child=c, parents=[a, b], coeffs=[0.5, _r(rng.uniform(0.2, 0.8))],
                            noise_cov=0.2),
            ]
            obs.append(Observation(family=FamilySpec(type="normal", V=0.5), F={c: 1.0},
                                   y=_r(rng.normal(0, 1.5))))
            obs.append(Observation(family=FamilySpec(type="normal", V=1.0), F={a: 1.0, b: -0.5},
                                   y=_r(rng.normal(0, 1.5))))
        out.append(Step(variables=variables, edges=edges, conditionals=conds,
                        observations=obs, frontier=[lvl]))
    return Scenario(steps=out)


def generate(template: str, seed: int) -> Scenario:
    seed = int(seed) & (2 ** 64 - 1)
    if template == "kalman-chain":
        return kalman_chain(seed)
    if template == "dispersal-chain":
        return dispersal_chain(seed)
    if template == "growth":
        return growth(seed)
    raise ScenarioError(f"unknown template {template!r}; choose from {', '.join(TEMPLATES)}")
