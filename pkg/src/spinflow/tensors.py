"""Dense tensor arithmetic over an n-dimensional fiber.

Tensors are stored as row-major numpy arrays of shape (dim,)*order with a
variance marker ('up' or 'down') per slot.  Alternating tensors follow the
determinant convention: a decomposable p-form built with :func:`wedge` has
components equal to signed permutations of the factor entries, so the
Hodge star maps basis monomials to basis monomials.  The projections
:func:`symmetrize` / :func:`antisymmetrize` are the usual 1/r! averages.

Dimensions up to 8 and orders up to 8 are supported.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DIM = 8
MAX_ORDER = 8

UP = "up"
DOWN = "down"


@dataclass
class DenseTensor:
    dim: int
    components: np.ndarray
    variance: tuple[str, ...]

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        self.variance = tuple(self.variance)
        if not 3 <= self.dim <= MAX_DIM:
            raise ValueError(f"dim must be in 3..{MAX_DIM}")
        if self.order > MAX_ORDER:
            raise ValueError(f"order must be <= {MAX_ORDER}")
        if self.components.shape != (self.dim,) * self.order:
            raise ValueError("components shape does not match dim**order")
        if any(v not in (UP, DOWN) for v in self.variance):
            raise ValueError("variance markers must be 'up' or 'down'")

    @property
    def order(self) -> int:
        return len(self.variance)

    def to_json(self) -> str:
        return json.dumps(
            {
                "dim": self.dim,
                "order": self.order,
                "variance": list(self.variance),
                "components": self.components.ravel().tolist(),
            }
        )

    @staticmethod
    def from_json(text: str) -> "DenseTensor":
        obj = json.loads(text)
        comp = np.array(obj["components"], dtype=float).reshape(
            (obj["dim"],) * obj["order"]
        )
        return DenseTensor(obj["dim"], comp, tuple(obj["variance"]))


@dataclass
class Metric:
    """Positive definite symmetric bilinear form on R^n."""

    dim: int
    components: np.ndarray

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        if self.components.shape != (self.dim, self.dim):
            raise ValueError("metric must be dim x dim")
        if np.abs(self.components - self.components.T).max() > 1e-14:
            raise ValueError("metric is not symmetric")
        if np.linalg.eigvalsh(self.components).min() <= 0:
            raise ValueError("metric is not positive definite")

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.components)


def _perm_sign(perm: tuple[int, ...]) -> int:
    sign = 1
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def _validate_slots(t: DenseTensor, slots) -> tuple[int, ...]:
    slots = tuple(sorted(slots))
    if len(set(slots)) != len(slots):
        raise ValueError("duplicate slots")
    if any(s < 0 or s >= t.order for s in slots):
        raise ValueError("slot out of range")
    if len({t.variance[s] for s in slots}) > 1:
        raise ValueError("cannot (anti)symmetrize slots of mixed variance")
    return slots


def _slot_permutation_average(t: DenseTensor, slots, signed: bool) -> DenseTensor:
    slots = _validate_slots(t, slots)
    acc = np.zeros_like(t.components)
    for perm in itertools.permutations(slots):
        axes = list(range(t.order))
        for src, dst in zip(slots, perm):
            axes[src] = dst
        term = np.transpose(t.components, axes)
        if signed:
            rel = tuple(slots.index(p) for p in perm)
            term = _perm_sign(rel) * term
        acc += term
    acc /= math.factorial(len(slots))
    return DenseTensor(t.dim, acc, t.variance)


def symmetrize(t: DenseTensor, slots) -> DenseTensor:
    """Average of the given slots over all their permutations."""
    return _slot_permutation_average(t, slots, signed=False)


def antisymmetrize(t: DenseTensor, slots) -> DenseTensor:
    """Signed average of the given slots over all their permutations."""
    return _slot_permutation_average(t, slots, signed=True)


def raise_index(t: DenseTensor, g: Metric, slot: int) -> DenseTensor:
    if t.variance[slot] != DOWN:
        raise ValueError("slot is already up")
    comp = np.tensordot(t.components, g.inverse, axes=([slot], [0]))
    comp = np.moveaxis(comp, -1, slot)
    var = list(t.variance)
    var[slot] = UP
    return DenseTensor(t.dim, comp, tuple(var))


def lower_index(t: DenseTensor, g: Metric, slot: int) -> DenseTensor:
    if t.variance[slot] != UP:
        raise ValueError("slot is already down")
    comp = np.tensordot(t.components, g.components, axes=([slot], [0]))
    comp = np.moveaxis(comp, -1, slot)
    var = list(t.variance)
    var[slot] = DOWN
    return DenseTensor(t.dim, comp, tuple(var))


def contract_interior(v: np.ndarray, t: DenseTensor, g: Metric | None = None) -> DenseTensor:
    """Interior contraction (v neg T)_{a...} = v^i T_{i a...}.

    v is a vector (up components).  If T's first slot is also up, a metric
    is required to pair them.
    """
    v = np.asarray(v, dtype=float)
    if t.order < 1:
        raise ValueError("tensor must have order >= 1")
    if v.shape != (t.dim,):
        raise ValueError("vector dimension mismatch")
    if t.variance[0] == DOWN:
        comp = np.tensordot(v, t.components, axes=([0], [0]))
    else:
        if g is None:
            raise ValueError("metric required to contract an up slot with a vector")
        comp = np.tensordot(g.components @ v, t.components, axes=([0], [0]))
    return DenseTensor(t.dim, comp, t.variance[1:])


def _all_down(t: DenseTensor, g: Metric) -> np.ndarray:
    comp = t.components
    for slot, var in enumerate(t.variance):
        if var == UP:
            comp = np.moveaxis(
                np.tensordot(comp, g.components, axes=([slot], [0])), -1, slot
            )
    return comp


def star_product(t: DenseTensor, g: Metric) -> DenseTensor:
    """(T *_g T)_{ab} = T_{a i1..ir} T_b^{i1..ir}; symmetric, trace = |T|_g^2."""
    if t.order < 1:
        raise ValueError("tensor must have order >= 1")
    down = _all_down(t, g)
    up_tail = down
    ginv = g.inverse
    for slot in range(1, t.order):
        up_tail = np.moveaxis(
            np.tensordot(up_tail, ginv, axes=([slot], [0])), -1, slot
        )
    axes = list(range(1, t.order))
    comp = np.tensordot(down, up_tail, axes=(axes, axes))
    comp = 0.5 * (comp + comp.T)  # exactly symmetric, not just to roundoff
    return DenseTensor(t.dim, comp, (DOWN, DOWN))


def tensor_norm_sq(t: DenseTensor, g: Metric) -> float:
    """Full-contraction squared norm T_{A} T^{A}."""
    down = _all_down(t, g)
    up = down
    for slot in range(t.order):
        up = np.moveaxis(np.tensordot(up, g.inverse, axes=([slot], [0])), -1, slot)
    return float(np.tensordot(down, up, axes=t.order))


def form_norm_sq(t: DenseTensor, g: Metric) -> float:
    """Squared norm of an alternating tensor, (1/p!) T_A T^A."""
    return tensor_norm_sq(t, g) / math.factorial(t.order)


@lru_cache(maxsize=None)
def levi_civita(n: int) -> np.ndarray:
    eps = np.zeros((n,) * n)
    for perm in itertools.permutations(range(n)):
        eps[perm] = _perm_sign(perm)
    return eps


def wedge(*covectors: np.ndarray) -> DenseTensor:
    """Determinant-convention wedge of one-forms.

    wedge(e^1, e^2) has components e1 x e2 - e2 x e1, so basis monomials
    have entries in {-1, 0, 1}.
    """
    covs = [np.asarray(c, dtype=float) for c in covectors]
    n = covs[0].shape[0]
    p = len(covs)
    comp = np.zeros((n,) * p)
    for perm in itertools.permutations(range(p)):
        term = covs[perm[0]]
        for k in perm[1:]:
            term = np.multiply.outer(term, covs[k])
        comp += _perm_sign(perm) * term
    return DenseTensor(n, comp, (DOWN,) * p)


def wedge_forms(a: DenseTensor, b: DenseTensor) -> DenseTensor:
    """Determinant-convention wedge of two alternating all-down tensors."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    p, q = a.order, b.order
    outer = np.multiply.outer(a.components, b.components)
    t = DenseTensor(a.dim, outer, (DOWN,) * (p + q))
    alt = antisymmetrize(t, range(p + q))
    coef = math.factorial(p + q) / (math.factorial(p) * math.factorial(q))
    return DenseTensor(a.dim, coef * alt.components, alt.variance)


def volume_form(g: Metric) -> DenseTensor:
    """vol^g = sqrt(det g) e^1 ^ ... ^ e^n with the standard orientation."""
    comp = math.sqrt(np.linalg.det(g.components)) * levi_civita(g.dim)
    return DenseTensor(g.dim, comp, (DOWN,) * g.dim)


def hodge_star(g: Metric, omega: DenseTensor) -> DenseTensor:
    """Hodge star of an alternating all-down p-form.

    (*w)_{b1..b_{n-p}} = (1/p!) sqrt(det g) w^{a1..ap} eps_{a1..ap b1..b_{n-p}},
    so ** = (-1)^{p(n-p)} and *1 = vol^g.
    """
    n = g.dim
    p = omega.order
    if p > n:
        raise ValueError("form degree exceeds dimension")
    if any(v != DOWN for v in omega.variance):
        raise ValueError("hodge_star expects all-down components")
    up = omega.components
    for slot in range(p):
        up = np.moveaxis(np.tensordot(up, g.inverse, axes=([slot], [0])), -1, slot)
    eps = levi_civita(n)
    scale = math.sqrt(np.linalg.det(g.components)) / math.factorial(p)
    comp = scale * np.tensordot(up, eps, axes=(list(range(p)), list(range(p))))
    return DenseTensor(n, comp, (DOWN,) * (n - p))
