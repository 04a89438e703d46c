"""Seven-dimensional toolkit: fundamental 3-forms, Lambda^3 decomposition,
the pointwise metric-path ODE and the square-root transport action on forms.

A unit spinor psi for a metric g determines the fundamental 3-form

    omega_{abc} = < e_a . e_b . e_c . psi, psi >

(components in a g-orthonormal frame, converted to coordinates by the
frame matrix).  The compatible metric is recovered through the standard
GL-equivariant bilinear form

    q_{uv} = (1/144) eps^{a1..a7} (u neg omega)_{a1 a2}
             (v neg omega)_{a3 a4} omega_{a5 a6 a7},

which satisfies q = g sqrt(det g) for positive forms, so g = q / det(q)^{1/9}.

The transport action carries the form of (g, psi) to the form of
(h, transported psi) exactly: components are held in the moving frame, so
in coordinates the inverse root acts on the three slots.  The path ODE
d omega/dt = (3/2) i_omega(gdot) integrates this motion; for metric paths
whose transports commute the endpoint is the closed-form transport action.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clifford import CliffordAlgebra, build_clifford
from .lattice import sqrt_transport, _batched_spd_power
from .tensors import levi_civita

DIM = 7


@dataclass
class PositiveThreeForm:
    components: np.ndarray  # (7, 7, 7), coordinate components, alternating
    metric: np.ndarray  # reconstructed compatible metric
    positive: bool


def _alt_last3(t: np.ndarray) -> np.ndarray:
    """Antisymmetrization (1/6 signed average) over the last three axes."""
    base = list(range(t.ndim - 3))
    out = np.zeros_like(t)
    for perm in itertools.permutations((t.ndim - 3, t.ndim - 2, t.ndim - 1)):
        sgn = 1
        p = list(perm)
        for i in range(3):
            for j in range(i + 1, 3):
                if p[i] > p[j]:
                    sgn = -sgn
        out += sgn * np.transpose(t, base + p)
    return out / 6.0


def fundamental_form(g: np.ndarray, psi: np.ndarray, alg: CliffordAlgebra | None = None) -> np.ndarray:
    """Coordinate components of the fundamental 3-form of (g, psi).

    psi holds components in the canonical orthonormal frame of g (batched
    over leading axes).  For g = delta the entries lie in {-1, 0, 1}.
    """
    alg = alg or build_clifford(DIM)
    g = np.asarray(g, dtype=float)
    psi = np.asarray(psi, dtype=float)
    norms = np.einsum("...k,...k->...", psi, psi)
    if np.abs(norms - 1.0).max() > 1e-8:
        raise ValueError("psi must be a unit spinor")
    gam = alg.gammas
    triple = np.einsum("aij,bjk,ckl->abcil", gam, gam, gam)
    omega_frame = np.einsum("abcil,...l,...i->...abc", triple, psi, psi)
    sqrt_g = _batched_spd_power(g, 0.5)
    return np.einsum(
        "...abc,...am,...bp,...cq->...mpq", omega_frame, sqrt_g, sqrt_g, sqrt_g,
        optimize=True,
    )


def reconstruct_metric(omega: np.ndarray) -> tuple[np.ndarray, bool]:
    """Compatible metric of a 3-form via the determinant-normalized bilinear
    form; the positivity flag reports whether the form is positive for the
    standard orientation."""
    omega = np.asarray(omega, dtype=float)
    eps = levi_civita(DIM)
    q = (
        np.einsum("uab,vcd,efg,abcdefg->uv", omega, omega, omega, eps, optimize=True)
        / 144.0
    )
    q = 0.5 * (q + q.T)
    det = float(np.linalg.det(q))
    if det <= 0.0:
        return np.full((DIM, DIM), np.nan), False
    g = q / det ** (1.0 / 9.0)
    eigs = np.linalg.eigvalsh(g)
    if eigs.min() <= 0.0:
        return g, False
    return g, True


def to_positive_form(omega: np.ndarray) -> PositiveThreeForm:
    g, ok = reconstruct_metric(omega)
    return PositiveThreeForm(np.asarray(omega, dtype=float), g, ok)


def insertion_i(omega: np.ndarray, h: np.ndarray, g: np.ndarray) -> np.ndarray:
    """i_omega(h)_{abc} = h_{[a|i|} omega^i_{bc]}, index raised with g.

    Equals (1/3)(h_a^p omega_{pbc} + h_b^q omega_{aqc} + h_c^r omega_{abr});
    symmetric h only, and i_omega(g) = omega exactly.
    """
    h = np.asarray(h, dtype=float)
    if np.abs(h - np.swapaxes(h, -1, -2)).max() > 1e-12 * max(1.0, np.abs(h).max()):
        raise ValueError("insertion_i expects a symmetric 2-tensor")
    h_up = np.einsum("...ap,...pq->...aq", h, np.linalg.inv(g))
    t1 = np.einsum("...ap,...pbc->...abc", h_up, omega)
    t2 = np.einsum("...bq,...aqc->...abc", h_up, omega)
    t3 = np.einsum("...cr,...abr->...abc", h_up, omega)
    return (t1 + t2 + t3) / 3.0


def hodge_star_form(g: np.ndarray, omega: np.ndarray, p: int) -> np.ndarray:
    """Hodge star of an all-down alternating p-form in dimension 7."""
    eps = levi_civita(DIM)
    inv = np.linalg.inv(g)
    up = omega
    for slot in range(p):
        up = np.moveaxis(np.tensordot(up, inv, axes=([slot], [0])), -1, slot)
    scale = math.sqrt(np.linalg.det(g)) / math.factorial(p)
    return scale * np.tensordot(up, eps, axes=(list(range(p)), list(range(p))))


def lambda7_basis(omega: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Basis X_k -> e_k neg *omega of the 7-dimensional vertical piece."""
    star = hodge_star_form(g, omega, 3)
    return np.stack([star[k] for k in range(DIM)], axis=0)  # (7, 7,7,7) 3-forms


def lambda28_basis(omega: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Basis i_omega(E_ab) over a <= b of the 28-dimensional piece."""
    out = []
    for a in range(DIM):
        for b in range(a, DIM):
            h = np.zeros((DIM, DIM))
            h[a, b] = h[b, a] = 1.0
            out.append(insertion_i(omega, h, g))
    return np.stack(out, axis=0)


def _flatten_forms(forms: np.ndarray) -> np.ndarray:
    return forms.reshape(forms.shape[0], -1)


def lambda7_projection(
    omega: np.ndarray, eta: np.ndarray, g: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray, float]:
    """Split a 3-form as eta = X neg *omega + i_omega(h).

    Returns (X, h, residual).  The two pieces are complementary (7 + 28 =
    35 = dim Lambda^3), so the least-squares solve is exact for any eta up
    to roundoff; a singular Gram matrix cannot occur for positive omega.
    """
    if g is None:
        g, ok = reconstruct_metric(omega)
        if not ok:
            raise ValueError("omega is not a positive 3-form")
    b7 = _flatten_forms(lambda7_basis(omega, g))
    b28 = _flatten_forms(lambda28_basis(omega, g))
    A = np.concatenate([b7, b28], axis=0).T  # (343, 35)
    coef, _, rank, _ = np.linalg.lstsq(A, np.asarray(eta, dtype=float).ravel(), rcond=None)
    if rank < 35:
        raise ValueError("degenerate Lambda^3 decomposition")
    X = coef[:DIM]
    h = np.zeros((DIM, DIM))
    k = DIM
    for a in range(DIM):
        for b in range(a, DIM):
            h[a, b] = h[b, a] = coef[k]
            k += 1
    residual = float(np.abs(A @ coef - eta.ravel()).max())
    return X, h, residual


def b_action(omega: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Transport action on the fundamental form: (g, omega) -> metric h.

    The inverse root B_g^h = (B_h^g)^{-1} is pulled into the three slots,
    so the output is the fundamental form of (h, transported spinor); its
    reconstructed metric is h.
    """
    C = sqrt_transport(h, g)  # = (B_h^g)^{-1}, maps h-frames to g-frames
    return np.einsum(
        "...pqr,...pa,...qb,...rc->...abc", omega, C, C, C, optimize=True
    )


def b_linearization(
    omega: np.ndarray, g: np.ndarray, h: np.ndarray, k: np.ndarray
) -> np.ndarray:
    """Tangent map of h -> b_action(omega, g, h) along k.

    Assembles H = (1/2) g h^{-1} k g^{-1} h, its symmetric part K and the
    vector X^a = H_[ij] omega-bar^{ija}, returning

        X neg *_h(omega-bar) + 3 i_{omega-bar}(K),

    with omega-bar = b_action(omega, g, h).  Exact on the commuting family
    (k g^{-1} commuting with h g^{-1}) and at h = g for arbitrary k.
    """
    omega_bar = b_action(omega, g, h)
    hinv = np.linalg.inv(h)
    ginv = np.linalg.inv(g)
    H = 0.5 * g @ hinv @ k @ ginv @ h
    K = 0.5 * (H + H.T)
    A = 0.5 * (H - H.T)
    omega_up = np.einsum(
        "...ip,...jq,...ar,...pqr->...ija", hinv, hinv, hinv, omega_bar
    )
    X = np.einsum("...ij,...ija->...a", A, omega_up)
    star = hodge_star_form(h, omega_bar, 3)
    x_term = np.einsum("...m,...mpqr->...pqr", X, star)
    return x_term + 3.0 * insertion_i(omega_bar, K, h)


def star_identity_residual(omega_bar: np.ndarray, h: np.ndarray) -> float:
    """Residual of omega-bar_{ab}^m (*_h omega-bar)_{mpqr}
    = 3 (h_{a[p} omega-bar_{qr]b} - h_{b[p} omega-bar_{qr]a})."""
    star = hodge_star_form(h, omega_bar, 3)
    up = np.einsum("...abm,...mz->...abz", omega_bar, np.linalg.inv(h))
    lhs = np.einsum("...abm,...mpqr->...abpqr", up, star)

    t1 = np.einsum("...ap,...qrb->...abpqr", h, omega_bar)
    t2 = np.einsum("...bp,...qra->...abpqr", h, omega_bar)
    rhs = 3.0 * _alt_last3(t1 - t2)
    return float(np.abs(lhs - rhs).max())


@dataclass
class MetricPath:
    """Pointwise path of SPD metrics.

    Samples are interpolated linearly; analytic callbacks for the metric
    and its velocity take precedence when supplied (sampled velocities fall
    back to centered differences of the interpolant).
    """

    times: np.ndarray
    metrics: np.ndarray  # (m,) + batch + (7, 7)
    velocity: callable = None  # optional g_dot(t) callback
    metric_fn: callable = None  # optional g(t) callback

    def metric_at(self, t: float) -> np.ndarray:
        if self.metric_fn is not None:
            return self.metric_fn(t)
        return _interp_path(self.times, self.metrics, t)

    def velocity_at(self, t: float) -> np.ndarray:
        if self.velocity is not None:
            return self.velocity(t)
        # centered difference in t on the samples
        dt = 1e-6 * max(1.0, float(self.times[-1] - self.times[0]))
        tp = min(t + dt, float(self.times[-1]))
        tm = max(t - dt, float(self.times[0]))
        return (self.metric_at(tp) - self.metric_at(tm)) / (tp - tm)


def _interp_path(times: np.ndarray, metrics: np.ndarray, t: float) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if t <= times[0]:
        return metrics[0]
    if t >= times[-1]:
        return metrics[-1]
    k = int(np.searchsorted(times, t) - 1)
    w = (t - times[k]) / (times[k + 1] - times[k])
    return (1.0 - w) * metrics[k] + w * metrics[k + 1]


def commuting_transports(path: MetricPath, g0: np.ndarray, samples: int = 5) -> bool:
    """Check B_{g_t1}^{g0} and B_{g_t2}^{g0} commute along the path."""
    ts = np.linspace(float(path.times[0]), float(path.times[-1]), samples)
    Bs = [sqrt_transport(g0, path.metric_at(t)) for t in ts]
    worst = 0.0
    for i in range(len(Bs)):
        for j in range(i + 1, len(Bs)):
            worst = max(worst, float(np.abs(Bs[i] @ Bs[j] - Bs[j] @ Bs[i]).max()))
    return worst < 1e-10


def ode_evolve(
    omega0: np.ndarray, path: MetricPath, steps: int = 200, check_positive: bool = True
) -> np.ndarray:
    """RK4 solve of d omega/dt = (3/2) i_omega(gdot_t) along a metric path.

    The equation is algebraic in the base point (no spatial coupling), so
    batched leading axes integrate independently.
    """
    t0, t1 = float(path.times[0]), float(path.times[-1])
    dt = (t1 - t0) / steps
    omega = np.asarray(omega0, dtype=float).copy()

    def rhs(t, w):
        return 1.5 * insertion_i(w, path.velocity_at(t), path.metric_at(t))

    t = t0
    for _ in range(steps):
        k1 = rhs(t, omega)
        k2 = rhs(t + 0.5 * dt, omega + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, omega + 0.5 * dt * k2)
        k4 = rhs(t + dt, omega + dt * k3)
        omega = omega + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
    if check_positive and omega.ndim == 3:
        _, ok = reconstruct_metric(omega)
        if not ok:
            raise RuntimeError("ODE integration left the positive cone")
    return omega


# ---------------------------------------------------------------------------
# golden coefficient table
# ---------------------------------------------------------------------------

GOLDEN_PATH = Path(__file__).parent / "data" / "golden_omega_n7.json"


def compute_golden_table() -> dict:
    """Fundamental-form coefficients at (delta, first basis spinor).

    The 35 independent components (a < b < c) determine the form; the
    table also records the spin-module norm and the gamma matrices of the
    fixed representation for cross-implementation comparison.
    """
    alg = build_clifford(DIM)
    psi0 = np.zeros(alg.dim_spinor)
    psi0[0] = 1.0
    om = fundamental_form(np.eye(DIM), psi0, alg)
    comps = {}
    for a in range(DIM):
        for b in range(a + 1, DIM):
            for c in range(b + 1, DIM):
                comps[f"{a + 1}{b + 1}{c + 1}"] = float(om[a, b, c])
    return {
        "components": comps,
        "norm_sq": float(np.einsum("abc,abc->", om, om) / 6.0),
        "gammas": alg.gammas.astype(int).tolist(),
    }


def golden_table() -> dict:
    """Committed golden table (computed fresh if the data file is absent)."""
    if GOLDEN_PATH.exists():
        return json.loads(GOLDEN_PATH.read_text())
    return compute_golden_table()


def golden_form() -> np.ndarray:
    """Dense golden 3-form rebuilt from the committed table."""
    table = golden_table()
    om = np.zeros((DIM, DIM, DIM))
    for key, val in table["components"].items():
        idx = tuple(int(ch) - 1 for ch in key)
        for perm in itertools.permutations(range(3)):
            sgn = 1
            for i in range(3):
                for j in range(i + 1, 3):
                    if perm[i] > perm[j]:
                        sgn = -sgn
            om[tuple(idx[p] for p in perm)] = sgn * val
    return om
