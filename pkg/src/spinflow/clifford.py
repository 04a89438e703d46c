"""Real Clifford algebra representations and Clifford multiplication on spinors.

Gamma matrices are built from 2x2 real seeds by a fixed tensor-product
recursion, so every entry is an integer and the defining relations

    gamma_i gamma_j + gamma_j gamma_i = -2 delta_ij Id,
    gamma_i^T = -gamma_i,

hold exactly in floating point.  The sign convention is x.x.v = -|x|^2 v;
the inner product on the spin module is the standard Euclidean one, for
which vector multiplication is skew-adjoint:  <x.v, w> = -<v, x.w>.

Supported vector dimensions and spin-module dimensions:

    n :  3  4  5  6  7  8
    d :  4  8  8  8  8  16
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

SPINOR_DIM = {3: 4, 4: 8, 5: 8, 6: 8, 7: 8, 8: 16}

_EPS = np.array([[0.0, 1.0], [-1.0, 0.0]])
_TAU = np.array([[1.0, 0.0], [0.0, -1.0]])
_SIG = np.array([[0.0, 1.0], [1.0, 0.0]])
_ID2 = np.eye(2)


def _kron(*mats: np.ndarray) -> np.ndarray:
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def _gammas_n3() -> list[np.ndarray]:
    return [_kron(_EPS, _TAU), _kron(_EPS, _SIG), _kron(_ID2, _EPS)]


def _gammas_n7() -> list[np.ndarray]:
    # First four double the n=3 set; the last three use the commuting
    # quaternionic structures tau x eps, sig x eps and their product.
    g3 = _gammas_n3()
    out = [_kron(_TAU, g) for g in g3]
    out.append(_kron(_EPS, np.eye(4)))
    out.append(_kron(_SIG, _kron(_TAU, _EPS)))
    out.append(_kron(_SIG, _kron(_SIG, _EPS)))
    out.append(-_kron(_SIG, _kron(_EPS, _ID2)))
    return out


def _gammas_n8() -> list[np.ndarray]:
    g7 = _gammas_n7()
    out = [_kron(_TAU, g) for g in g7]
    out.append(_kron(_EPS, np.eye(8)))
    return out


@dataclass(frozen=True)
class CliffordAlgebra:
    """A fixed real representation of Cl_n acting on R^d."""

    dim_vector: int
    dim_spinor: int
    gammas: np.ndarray  # shape (n, d, d), integer entries

    _monomial_cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def identity(self) -> np.ndarray:
        return np.eye(self.dim_spinor)

    def monomial(self, indices: tuple[int, ...]) -> np.ndarray:
        """Matrix of gamma_{i1} ... gamma_{ip} for an index tuple."""
        if indices not in self._monomial_cache:
            out = np.eye(self.dim_spinor)
            for i in indices:
                out = out @ self.gammas[i]
            self._monomial_cache[indices] = out
        return self._monomial_cache[indices]

    def to_json(self) -> str:
        return json.dumps(
            {
                "dim_vector": self.dim_vector,
                "dim_spinor": self.dim_spinor,
                "gammas": self.gammas.astype(int).tolist(),
            }
        )


@lru_cache(maxsize=None)
def build_clifford(n: int) -> CliffordAlgebra:
    """Build the fixed gamma-matrix representation for 3 <= n <= 8."""
    if not 3 <= n <= 8:
        raise ValueError(f"vector dimension must be in 3..8, got {n}")
    if n == 3:
        gam = _gammas_n3()
    elif n <= 7:
        gam = _gammas_n7()[:n]
    else:
        gam = _gammas_n8()
    gammas = np.stack(gam)
    alg = CliffordAlgebra(n, SPINOR_DIM[n], gammas)
    _check_relations(alg)
    return alg


def _check_relations(alg: CliffordAlgebra) -> None:
    n, d = alg.dim_vector, alg.dim_spinor
    for i in range(n):
        if not np.array_equal(alg.gammas[i].T, -alg.gammas[i]):
            raise AssertionError(f"gamma_{i} is not skew-symmetric")
        for j in range(n):
            anti = alg.gammas[i] @ alg.gammas[j] + alg.gammas[j] @ alg.gammas[i]
            want = -2.0 * np.eye(d) if i == j else np.zeros((d, d))
            if not np.array_equal(anti, want):
                raise AssertionError(f"anticommutator ({i},{j}) violated")


def clifford_mul_vector(alg: CliffordAlgebra, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Clifford multiplication x.v = sum_a x_a gamma_a v.

    Both x and v may carry leading batch axes.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.shape[-1] != alg.dim_vector or v.shape[-1] != alg.dim_spinor:
        raise ValueError("dimension mismatch in clifford_mul_vector")
    return np.einsum("...a,ajk,...k->...j", x, alg.gammas, v)


def clifford_mul_form(alg: CliffordAlgebra, form: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Clifford multiplication of an alternating p-form on a spinor.

    The form is a dense alternating tensor of shape (n,)*p.  On a basis
    monomial e^{a1} ^ ... ^ e^{ap} (the 1/p!-alternation of the tensor
    product) with distinct indices the action is gamma_{a1}...gamma_{ap};
    equivalently this sums T[a1..ap] gamma_{a1}..gamma_{ap} over all
    distinct-index tuples.  A 0-form (scalar) acts by multiplication.
    """
    form = np.asarray(form, dtype=float)
    v = np.asarray(v, dtype=float)
    p = form.ndim
    if p == 0:
        return float(form) * v
    if p > alg.dim_vector:
        raise ValueError("form degree exceeds vector dimension")
    if form.shape != (alg.dim_vector,) * p:
        raise ValueError("form has wrong shape")
    fact = float(math.factorial(p))
    out = np.zeros_like(v)
    for comb in itertools.combinations(range(alg.dim_vector), p):
        coef = fact * form[comb]
        if coef != 0.0:
            out = out + coef * np.einsum("jk,...k->...j", alg.monomial(comb), v)
    return out


def clifford_product_sequence(
    alg: CliffordAlgebra, vectors: list[np.ndarray] | np.ndarray, v: np.ndarray
) -> np.ndarray:
    """Iterated multiplication X_1 . X_2 . ... . X_r . v (repeats allowed)."""
    out = np.asarray(v, dtype=float)
    for x in reversed(list(vectors)):
        out = clifford_mul_vector(alg, x, out)
    return out


def spin_inner(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Invariant inner product on the spin module (batched dot product)."""
    return np.einsum("...k,...k->...", v, w)


def product_span_rank(alg: CliffordAlgebra, psi: np.ndarray) -> int:
    """Rank of span{ gamma_{a1}..gamma_{ar} psi : 0 <= r <= n }.

    The span's Gram matrix is accumulated through G -> sum_a gamma_a G
    gamma_a^T, which sums psi_tuple psi_tuple^T over all tuples of each
    length without materializing them.  For n = 3, 7 the rank equals
    dim_spinor for every nonzero psi (the representation is irreducible
    over the reals).
    """
    psi = np.asarray(psi, dtype=float)
    level = np.outer(psi, psi)
    total = level.copy()
    for _ in range(alg.dim_vector):
        level = np.einsum("aij,jk,alk->il", alg.gammas, level, alg.gammas)
        total += level
    return int(np.linalg.matrix_rank(total, tol=1e-10))


def spin_generator(alg: CliffordAlgebra, skew: np.ndarray) -> np.ndarray:
    """Spin-module generator (1/4) sum_ij A_ij gamma_i gamma_j of a skew A.

    Supports leading batch axes on A; returns matrices acting on spinor
    components.
    """
    return 0.25 * np.einsum("...ij,ikl,jlm->...km", skew, alg.gammas, alg.gammas)


def _expm_skew(K: np.ndarray) -> np.ndarray:
    """Matrix exponential of (batched) real skew-symmetric matrices."""
    herm = 1j * K
    w, V = np.linalg.eigh(herm)
    phase = np.exp(-1j * w)
    out = np.einsum("...ij,...j,...kj->...ik", V, phase, V.conj())
    return np.ascontiguousarray(out.real)


def spin_rotation(alg: CliffordAlgebra, skew: np.ndarray) -> np.ndarray:
    """Spin-group element exp((1/4) sum A_ij gamma_i gamma_j) for skew A."""
    return _expm_skew(spin_generator(alg, skew))
