"""Separable strongly concave objectives and the quadratic benchmark family."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class ProblemError(ValueError):
    """Raised for invalid problem parameters."""


class NodeObjective:
    """Interface for one node's strongly concave objective."""

    strong_concavity_mu: float

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def maximizer(self, c: np.ndarray) -> np.ndarray:
        """argmax over x of value(x) + c . x"""
        raise NotImplementedError


@dataclass(frozen=True)
class QuadraticNodeObjective(NodeObjective):
    """f(x) = -0.5 x' diag(a) x - b' x with a > 0 elementwise."""

    a: np.ndarray  # diagonal of the positive definite matrix, shape (p,)
    b: np.ndarray  # linear term, shape (p,)

    def __post_init__(self):
        if np.any(self.a <= 0):
            raise ProblemError("diagonal entries must be strictly positive")
        object.__setattr__(self, "strong_concavity_mu", float(np.min(self.a)))

    def value(self, x: np.ndarray) -> float:
        return float(-0.5 * x @ (self.a * x) - self.b @ x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return -self.a * x - self.b

    def maximizer(self, c: np.ndarray) -> np.ndarray:
        # stationary point of -0.5 x'Ax - b'x + c'x
        return (c - self.b) / self.a


@dataclass(frozen=True)
class ProblemInstance:
    """A collection of per-node objectives sharing one variable dimension."""

    p: int
    objectives: tuple[NodeObjective, ...]
    mu: float

    def __post_init__(self):
        if len(self.objectives) < 2:
            raise ProblemError("need at least 2 nodes")
        if self.p < 1:
            raise ProblemError("variable dimension must be >= 1")
        if self.mu <= 0:
            raise ProblemError("strong concavity parameter must be positive")

    @property
    def n(self) -> int:
        return len(self.objectives)


def make_instance(objectives, p: int | None = None) -> ProblemInstance:
    """Bundle objectives into an instance, inferring p for quadratics."""
    objs = tuple(objectives)
    if p is None:
        p = len(np.atleast_1d(objs[0].a))
    mu = min(o.strong_concavity_mu for o in objs)
    return ProblemInstance(p=p, objectives=objs, mu=mu)


def generate_quadratic(n: int, p: int, seed: int, condition: str = "1e2") -> ProblemInstance:
    """Random diagonal quadratic instance with a controlled condition number.

    condition="1e2" draws the first p/2 diagonal entries from [1e-1, 1] and
    the last p/2 from [1, 10], which pushes the aggregate's condition
    number toward 1e2.  condition="1e0" draws all entries from [1, 1.1],
    the well-conditioned analogue.  b entries are uniform in [0, 1].
    Deterministic given (n, p, seed, condition).
    """
    if p % 2 != 0:
        raise ProblemError(f"variable dimension p={p} must be even")
    if n < 2:
        raise ProblemError("need n >= 2")
    rng = np.random.default_rng(seed)
    objectives = []
    for _ in range(n):
        if condition == "1e2":
            lo = rng.uniform(1e-1, 1.0, size=p // 2)
            hi = rng.uniform(1.0, 10.0, size=p - p // 2)
            a = np.concatenate([lo, hi])
        elif condition == "1e0":
            a = rng.uniform(1.0, 1.1, size=p)
        else:
            raise ProblemError(f"unknown condition regime {condition!r}")
        b = rng.uniform(0.0, 1.0, size=p)
        objectives.append(QuadraticNodeObjective(a=a, b=b))
    return make_instance(objectives)


def _require_quadratic(prob: ProblemInstance):
    for o in prob.objectives:
        if not isinstance(o, QuadraticNodeObjective):
            raise ProblemError("operation requires quadratic objectives")


def exact_optimum(prob: ProblemInstance) -> np.ndarray:
    """Unconstrained maximizer of the aggregate: -(sum A_i)^-1 (sum b_i)."""
    _require_quadratic(prob)
    a_sum = np.sum([o.a for o in prob.objectives], axis=0)
    b_sum = np.sum([o.b for o in prob.objectives], axis=0)
    return -b_sum / a_sum


def aggregate_value(prob: ProblemInstance, x: np.ndarray) -> float:
    """Sum of the per-node objective values at a common point x."""
    return float(sum(o.value(x) for o in prob.objectives))


def aggregate_condition_number(prob: ProblemInstance) -> float:
    """Condition number of the aggregate quadratic's matrix."""
    _require_quadratic(prob)
    a_sum = np.sum([o.a for o in prob.objectives], axis=0)
    return float(np.max(a_sum) / np.min(a_sum))


def to_json(prob: ProblemInstance, seed: int | None = None) -> str:
    """Serialize a quadratic instance; floats round-trip bit-exactly."""
    _require_quadratic(prob)
    doc = {
        "n": prob.n,
        "p": prob.p,
        "seed": seed,
        "a": [list(map(float, o.a)) for o in prob.objectives],
        "b": [list(map(float, o.b)) for o in prob.objectives],
    }
    return json.dumps(doc)


def from_json(text: str) -> ProblemInstance:
    doc = json.loads(text)
    objectives = [
        QuadraticNodeObjective(a=np.array(a), b=np.array(b))
        for a, b in zip(doc["a"], doc["b"])
    ]
    return make_instance(objectives)
