"""Flat-torus lattice fields: metrics, spinors, frames and derivatives.

The base space is the n-torus with coordinate length 2*pi per axis and N
sites per axis.  A section is a pair (g, psi): a per-site coordinate
metric g_{mu nu}(x) and a per-site spinor whose components live in the
canonical orthonormal frame e_a = (g^{-1/2})^mu_a d_mu.  Spatial
derivatives are 4th-order periodic central differences.

Tangent vectors to the space of sections are pairs (h, phi) with h a
symmetric 2-tensor in frame components and phi a spinor field; the L^2
pairing of two such pairs is Euclidean per site times sqrt(det g) h^n.

Metric transport between two SPD metrics uses the unique positive square
root B of the endomorphism g_to^{-1} g_from, which carries g_from
orthonormal frames to g_to orthonormal frames.  Holding spinor components
fixed in the transported frame (not in the canonical frame of the new
metric) realizes the natural horizontal lift; the residual rotation
between the transported frame and the canonical frame is applied to the
components through the spin representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clifford import CliffordAlgebra, build_clifford, spin_generator, _expm_skew

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class LatticeTorus:
    n: int
    N: int

    def __post_init__(self):
        if self.N < 4:
            raise ValueError("need at least 4 sites per axis")

    @property
    def spacing(self) -> float:
        return TWO_PI / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def num_sites(self) -> int:
        return self.N**self.n

    def coordinates(self) -> np.ndarray:
        """Coordinate array of shape shape + (n,)."""
        axes = [np.arange(self.N) * self.spacing for _ in range(self.n)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack(grids, axis=-1)


def partial_axis(field: np.ndarray, axis: int, spacing: float, n_site_axes: int) -> np.ndarray:
    """4th-order periodic central difference along one site axis."""
    if axis < 0 or axis >= n_site_axes:
        raise ValueError("site axis out of range")
    f1 = np.roll(field, -1, axis=axis)
    f2 = np.roll(field, -2, axis=axis)
    b1 = np.roll(field, 1, axis=axis)
    b2 = np.roll(field, 2, axis=axis)
    return (-f2 + 8.0 * f1 - 8.0 * b1 + b2) / (12.0 * spacing)


def partial_all(field: np.ndarray, torus: LatticeTorus) -> np.ndarray:
    """Stack of coordinate derivatives; output shape sites + (n,) + comp."""
    derivs = [partial_axis(field, m, torus.spacing, torus.n) for m in range(torus.n)]
    return np.stack(derivs, axis=torus.n)


@dataclass
class SectionField:
    """Lattice section of the universal spinor bundle."""

    torus: LatticeTorus
    metric: np.ndarray  # sites + (n, n), coordinate components, SPD per site
    spinor: np.ndarray  # sites + (d,), components in the canonical frame
    clifford: CliffordAlgebra = None
    _geometry: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.clifford is None:
            self.clifford = build_clifford(self.torus.n)
        n, d = self.torus.n, self.clifford.dim_spinor
        if self.metric.shape != self.torus.shape + (n, n):
            raise ValueError("metric field has wrong shape")
        if self.spinor.shape != self.torus.shape + (d,):
            raise ValueError("spinor field has wrong shape")

    @property
    def n(self) -> int:
        return self.torus.n

    def spinor_norms(self) -> np.ndarray:
        return np.sqrt(np.einsum("...k,...k->...", self.spinor, self.spinor))

    def is_unit(self, tol: float = 1e-12) -> bool:
        return bool(np.abs(self.spinor_norms() - 1.0).max() <= tol)

    def renormalized(self) -> "SectionField":
        norms = self.spinor_norms()
        return SectionField(self.torus, self.metric, self.spinor / norms[..., None], self.clifford)

    def copy(self) -> "SectionField":
        return SectionField(self.torus, self.metric.copy(), self.spinor.copy(), self.clifford)

    def geometry(self) -> dict:
        if self._geometry is None:
            self._geometry = compute_geometry(self)
        return self._geometry


def _batched_spd_power(g: np.ndarray, power: float) -> np.ndarray:
    w, V = np.linalg.eigh(g)
    if w.min() <= 0:
        raise ValueError("matrix field is not positive definite")
    return np.einsum("...ij,...j,...kj->...ik", V, w**power, V)


def compute_geometry(s: SectionField) -> dict:
    """Derived per-site geometric data for a section.

    Returns inverse metric, sqrt/inv-sqrt of the metric (the canonical
    frame is B = g^{-1/2} applied to coordinate vectors), sqrt(det g),
    coordinate Christoffel symbols chris[..., c, a, b] = Gamma^c_{ab} and
    frame connection coefficients conn[..., c, i, j] = g(nabla_{e_c} e_i, e_j).
    """
    torus = s.torus
    g = s.metric
    inv_g = np.linalg.inv(g)
    sqrt_g = _batched_spd_power(g, 0.5)
    inv_sqrt_g = _batched_spd_power(g, -0.5)
    det_g = np.linalg.det(g)

    dg = partial_all(g, torus)  # sites + (m, a, b)
    # Gamma^c_{ab} = 1/2 g^{cs} (d_a g_{sb} + d_b g_{sa} - d_s g_{ab})
    chris = 0.5 * (
        np.einsum("...cs,...asb->...cab", inv_g, dg)
        + np.einsum("...cs,...bsa->...cab", inv_g, dg)
        - np.einsum("...cs,...sab->...cab", inv_g, dg)
    )

    dB = partial_all(inv_sqrt_g, torus)  # sites + (m, p, i): d_m (B^p_i)
    # g(nabla_{e_c} e_i, e_j) with e_i = B^p_i d_p
    term = dB + np.einsum("...cmr,...ri->...mci", chris, inv_sqrt_g)
    # term[..., m, p, i] = d_m B^p_i + Gamma^p_{m r} B^r_i
    conn = np.einsum(
        "...mc,...mpi,...pq,...qj->...cij", inv_sqrt_g, term, g, inv_sqrt_g
    )
    # conn is skew in (i, j) up to discretization error; enforce exactly so
    # unit-norm sections stay unit under the spin connection.
    conn = 0.5 * (conn - np.swapaxes(conn, -1, -2))
    return {
        "inv_g": inv_g,
        "sqrt_g": sqrt_g,
        "inv_sqrt_g": inv_sqrt_g,
        "det_g": det_g,
        "sqrt_det_g": np.sqrt(det_g),
        "chris": chris,
        "conn": conn,
    }


def frame_components_sym2(s: SectionField, h_coord: np.ndarray) -> np.ndarray:
    """Frame components h(e_a, e_b) of a coordinate symmetric 2-tensor field."""
    B = s.geometry()["inv_sqrt_g"]
    return np.einsum("...ma,...mp,...pb->...ab", B, h_coord, B)


def coordinate_components_sym2(s: SectionField, h_frame: np.ndarray) -> np.ndarray:
    """Inverse of :func:`frame_components_sym2`."""
    A = s.geometry()["sqrt_g"]
    return np.einsum("...am,...ab,...bp->...mp", A, h_frame, A)


def frame_derivative(s: SectionField, comp_field: np.ndarray) -> np.ndarray:
    """Directional derivatives e_a(f) of per-site component arrays.

    comp_field: sites + C (any trailing component axes).  Output:
    sites + (n,) + C with the frame leg inserted first.
    """
    torus = s.torus
    d = partial_all(comp_field, torus)  # sites + (m,) + C
    B = s.geometry()["inv_sqrt_g"]  # sites + (m, a)
    d_flat = d.reshape(torus.shape + (torus.n, -1))
    out = np.einsum("...ma,...mk->...ak", B, d_flat)
    return out.reshape(torus.shape + (torus.n,) + comp_field.shape[torus.n:])


def nabla_spinor(s: SectionField, spinor: np.ndarray | None = None) -> np.ndarray:
    """Spin covariant derivative in the moving frame.

    Returns W with shape sites + (n, d):
        W_a = e_a(v) + 1/2 sum_{i<j} conn[a, i, j] gamma_i gamma_j v.
    For g = delta this reduces to plain finite differences of components.
    An explicit spinor field may be supplied to differentiate a different
    section over the same metric (used for perturbations); the result for
    the section's own spinor is cached.
    """
    geom = s.geometry()
    own = spinor is None
    if own and "nabla" in geom:
        return geom["nabla"]
    v = s.spinor if own else spinor
    torus = s.torus
    gam = s.clifford.gammas
    dv = partial_all(v, torus)  # sites + (m, d)
    ea_v = np.einsum("...ma,...mk->...ak", geom["inv_sqrt_g"], dv)
    # 1/2 sum_{i<j} conn_{aij} g_i g_j v = 1/4 sum_{ij} conn_{aij} g_i g_j v
    gg = np.einsum("ikl,jlm->ijkm", gam, gam)
    conn_term = 0.25 * np.einsum(
        "...aij,ijkm,...m->...ak", geom["conn"], gg, v, optimize=True
    )
    W = ea_v + conn_term
    if own:
        geom["nabla"] = W
    return W


_SLOT_LABELS = "abdefghl"  # reserved: c (derivative leg), m (dummy), ijk


def covariant_derivative_frame_tensor(s: SectionField, field_: np.ndarray, order: int) -> np.ndarray:
    """Covariant derivative of a frame-component tensor field.

    field_: sites + (n,)*order.  Returns sites + (n,)*(order+1) with the new
    derivative leg first:  out[c, A] = (nabla_{e_c} T)_A
    = e_c(T_A) - sum_s conn[c, a_s, m] T[.. m at slot s ..].
    """
    torus = s.torus
    geom = s.geometry()
    if field_.shape != torus.shape + (torus.n,) * order:
        raise ValueError("field shape mismatch")
    labels = _SLOT_LABELS[:order]
    out = frame_derivative(s, field_)
    for slot in range(order):
        idx = list(labels)
        idx[slot] = "m"
        out -= np.einsum(
            f"...c{labels[slot]}m,...{''.join(idx)}->...c{labels}",
            geom["conn"],
            field_,
        )
    return out


def divergence_frame_tensor(s: SectionField, field_: np.ndarray, order: int) -> np.ndarray:
    """(div T)_A = sum_c (nabla_{e_c} T)_{c A}, contracting the first slot."""
    grad = covariant_derivative_frame_tensor(s, field_, order)
    return np.trace(grad, axis1=s.torus.n, axis2=s.torus.n + 1)


def divergence_background(torus: LatticeTorus, g_field: np.ndarray, bg_metric: np.ndarray | None = None) -> np.ndarray:
    """Background divergence of a coordinate 2-tensor field, as a vector.

    With the flat background delta (the default) this is
    X^a = sum_m d_m T_{m a}.  A general SPD background field uses its own
    Levi-Civita connection.
    """
    if bg_metric is None:
        d = partial_all(g_field, torus)  # sites + (m, a, b)
        return np.einsum("...mmb->...b", d)
    # general background: (div T)_b = gbar^{am} nabla_m T_{ab}, raised with gbar
    inv_bg = np.linalg.inv(bg_metric)
    dT = partial_all(g_field, torus)
    dbg = partial_all(bg_metric, torus)
    chris = 0.5 * (
        np.einsum("...cs,...asb->...cab", inv_bg, dbg)
        + np.einsum("...cs,...bsa->...cab", inv_bg, dbg)
        - np.einsum("...cs,...sab->...cab", inv_bg, dbg)
    )
    nablaT = (
        dT
        - np.einsum("...rma,...rb->...mab", chris, g_field)
        - np.einsum("...rmb,...ar->...mab", chris, g_field)
    )
    cov = np.einsum("...am,...mab->...b", inv_bg, nablaT)
    return np.einsum("...ba,...b->...a", inv_bg, cov)


def l2_inner(
    s: SectionField,
    pair1: tuple[np.ndarray, np.ndarray],
    pair2: tuple[np.ndarray, np.ndarray],
) -> float:
    """L^2 pairing of tangent pairs (h, phi) in frame components."""
    h1, p1 = pair1
    h2, p2 = pair2
    density = np.zeros(s.torus.shape)
    if h1 is not None and h2 is not None:
        density += np.einsum("...ab,...ab->...", h1, h2)
    if p1 is not None and p2 is not None:
        density += np.einsum("...k,...k->...", p1, p2)
    w = s.geometry()["sqrt_det_g"]
    return float(np.sum(density * w) * s.torus.spacing**s.torus.n)


def sqrt_transport(g_from: np.ndarray, g_to: np.ndarray) -> np.ndarray:
    """Positive root B of the endomorphism g_to^{-1} g_from (batched).

    B is g_to-symmetric positive definite and carries g_from-orthonormal
    frames to g_to-orthonormal frames: g_to(Bu, Bv) = g_from(u, v).
    """
    to_sqrt = _batched_spd_power(np.asarray(g_to, dtype=float), 0.5)
    to_inv_sqrt = _batched_spd_power(np.asarray(g_to, dtype=float), -0.5)
    inner = np.einsum("...ab,...bc,...cd->...ad", to_inv_sqrt, np.asarray(g_from, dtype=float), to_inv_sqrt)
    inner_sqrt = _batched_spd_power(inner, 0.5)
    return np.einsum("...ab,...bc,...cd->...ad", to_inv_sqrt, inner_sqrt, to_sqrt)


def frame_rotation(g_from: np.ndarray, g_to: np.ndarray) -> np.ndarray:
    """Rotation relating the transported frame to the canonical frame of g_to.

    R = g_to^{1/2} B g_from^{-1/2} is orthogonal; it is the identity exactly
    when g_from and g_to commute (e.g. conformal rescalings or simultaneously
    diagonal pairs).
    """
    B = sqrt_transport(g_from, g_to)
    to_sqrt = _batched_spd_power(np.asarray(g_to, dtype=float), 0.5)
    from_inv_sqrt = _batched_spd_power(np.asarray(g_from, dtype=float), -0.5)
    return np.einsum("...ab,...bc,...cd->...ad", to_sqrt, B, from_inv_sqrt)


def _log_rotation(R: np.ndarray) -> np.ndarray:
    """Principal logarithm of (batched) rotation matrices.

    Rotations are normal, so the batched complex eigendecomposition is
    stable; the result is skew-symmetrized to kill roundoff.
    """
    R = np.asarray(R, dtype=float)
    if np.abs(R - np.eye(R.shape[-1])).max() < 1e-14:
        return np.zeros_like(R)
    lam, V = np.linalg.eig(R)
    loglam = np.log(lam.astype(complex))
    A = np.einsum("...ij,...j,...jk->...ik", V, loglam, np.linalg.inv(V)).real
    return 0.5 * (A - np.swapaxes(A, -1, -2))


def spin_transport_matrix(alg: CliffordAlgebra, R: np.ndarray) -> np.ndarray:
    """Spin matrix S with S gamma(x) S^{-1} = gamma(R x), continuous in R."""
    A = _log_rotation(R)
    return _expm_skew(spin_generator(alg, -A))


def horizontal_transport(s: SectionField, g_to: np.ndarray) -> SectionField:
    """Horizontal (natural-connection) transport of a section to a new metric.

    Spinor components are held fixed in the transported frame
    B_{g_to}^{g_from} e_a; the output stores them back in the canonical frame
    of g_to via the residual spin rotation.
    """
    R = frame_rotation(s.metric, g_to)
    S = spin_transport_matrix(s.clifford, R)
    v_new = np.einsum("...jk,...k->...j", S, s.spinor)
    return SectionField(s.torus, np.asarray(g_to, dtype=float).copy(), v_new, s.clifford)


def canonical_frame_drift(g: np.ndarray, hdot_coord: np.ndarray) -> np.ndarray:
    """Rotation rate of the canonical frame relative to horizontal transport.

    For a metric path with velocity hdot the transported frame and the
    canonical frame of g_t separate at rate Omega = Sdot g^{-1/2} - (1/2)
    g^{-1/2} hdot g^{-1/2}, where Sdot solves the Sylvester equation
    Sdot g^{1/2} + g^{1/2} Sdot = hdot.  Omega is skew (in frame indices)
    and vanishes when [g, hdot] = 0.
    """
    g = np.asarray(g, dtype=float)
    hdot = np.asarray(hdot_coord, dtype=float)
    w, V = np.linalg.eigh(g)
    sqrt_w = np.sqrt(w)
    h_eig = np.einsum("...ji,...jk,...kl->...il", V, hdot, V)
    denom = sqrt_w[..., :, None] + sqrt_w[..., None, :]
    sdot_eig = h_eig / denom
    sdot = np.einsum("...ij,...jk,...lk->...il", V, sdot_eig, V)
    inv_sqrt = np.einsum("...ij,...j,...kj->...ik", V, 1.0 / sqrt_w, V)
    omega = sdot @ inv_sqrt - 0.5 * inv_sqrt @ hdot @ inv_sqrt
    return 0.5 * (omega - np.swapaxes(omega, -1, -2))


def vertical_drift(s: SectionField, hdot_coord: np.ndarray) -> np.ndarray:
    """Component drift of a horizontally moving spinor in the canonical frame.

    vdot = -(1/4) sum_ij Omega_ij gamma_i gamma_j v with Omega from
    :func:`canonical_frame_drift`.
    """
    omega = canonical_frame_drift(s.metric, hdot_coord)
    gen = spin_generator(s.clifford, -omega)
    return np.einsum("...jk,...k->...j", gen, s.spinor)


def exterior_derivative_oneform(torus: LatticeTorus, alpha: np.ndarray) -> np.ndarray:
    """Alternation-convention exterior derivative of a coordinate one-form.

    (d alpha)_{mn} = (1/2)(d_m alpha_n - d_n alpha_m); with this norming the
    spinorial Lie derivative below reproduces the spin lift of rotations.
    """
    d = partial_all(alpha, torus)  # sites + (m, nu)
    return 0.5 * (d - np.swapaxes(d, -1, -2))


def lie_derivative_metric(torus: LatticeTorus, g: np.ndarray, X: np.ndarray) -> np.ndarray:
    """(L_X g)_{mn} = X^r d_r g_{mn} + g_{rn} d_m X^r + g_{mr} d_n X^r."""
    dg = partial_all(g, torus)
    dX = partial_all(X, torus)  # sites + (m, r): d_m X^r
    out = np.einsum("...r,...rmn->...mn", X, dg)
    out += np.einsum("...rn,...mr->...mn", g, dX)
    out += np.einsum("...mr,...nr->...mn", g, dX)
    return out


def spin_lie_derivative(s: SectionField, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spinorial Lie derivative (L_X g, nabla_X psi - 1/4 dX^flat . psi).

    X is a coordinate vector field; the metric part is returned in frame
    components and the spinor part in canonical-frame components.
    """
    torus = s.torus
    geom = s.geometry()
    lie_g = lie_derivative_metric(torus, s.metric, X)
    lie_g_frame = frame_components_sym2(s, lie_g)

    W = nabla_spinor(s)  # sites + (a, d)
    # X = X^a e_a with e = B d  =>  frame components are B^{-1} X = g^{1/2} X
    X_frame = np.einsum("...am,...m->...a", geom["sqrt_g"], X)
    nabla_X_psi = np.einsum("...a,...ak->...k", X_frame, W)

    X_flat = np.einsum("...mn,...n->...m", s.metric, X)
    dX = exterior_derivative_oneform(torus, X_flat)
    # convert the coordinate 2-form to frame components
    B = geom["inv_sqrt_g"]
    dX_frame = np.einsum("...ma,...mn,...nb->...ab", B, dX, B)
    gam = s.clifford.gammas
    gg = np.einsum("ikl,jlm->ijkm", gam, gam)
    # distinct-tuple Clifford action of a 2-form: sum_{i != j} w_ij g_i g_j
    # = sum_{ij} w_ij g_i g_j  (diagonal terms vanish for skew w)
    dX_psi = np.einsum("...ij,ijkm,...m->...k", dX_frame, gg, s.spinor)
    return lie_g_frame, nabla_X_psi - 0.25 * dX_psi
