import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from spinflow.clifford import build_clifford
from spinflow.lattice import LatticeTorus, SectionField

TWO_PI = 2.0 * np.pi


def band_limited_metric(torus: LatticeTorus, rng, amp: float = 0.1) -> np.ndarray:
    """SPD metric field delta + random modes with wave numbers 1..2."""
    n = torus.n
    X = torus.coordinates()
    g = np.tile(np.eye(n), torus.shape + (1, 1))
    for a in range(n):
        for b in range(a, n):
            for ax in range(n):
                mode = amp * rng.uniform(0.3, 1.0) * np.sin(
                    rng.integers(1, 3) * X[..., ax] + rng.uniform(0, TWO_PI)
                )
                g[..., a, b] += mode
                if a != b:
                    g[..., b, a] += mode
    return g


def band_limited_spinor(torus: LatticeTorus, rng, d: int, amp: float = 0.4) -> np.ndarray:
    X = torus.coordinates()
    v = np.tile(rng.standard_normal(d), torus.shape + (1,))
    for c in range(d):
        for ax in range(torus.n):
            v[..., c] += amp * rng.uniform(-1, 1) * np.cos(
                rng.integers(1, 3) * X[..., ax] + rng.uniform(0, TWO_PI)
            )
    return v


def make_section(n: int, N: int, seed: int = 0, amp_g: float = 0.08, amp_v: float = 0.4) -> SectionField:
    """Random band-limited unit section for oracle tests."""
    torus = LatticeTorus(n, N)
    alg = build_clifford(n)
    rng = np.random.default_rng(seed)
    g = band_limited_metric(torus, rng, amp_g)
    v = band_limited_spinor(torus, rng, alg.dim_spinor, amp_v)
    v = v / np.sqrt(np.einsum("...k,...k->...", v, v))[..., None]
    return SectionField(torus, g, v, alg)


def random_vertical(s: SectionField, rng) -> np.ndarray:
    """Band-limited spinor field orthogonal to the section's spinor."""
    phi = band_limited_spinor(s.torus, rng, s.spinor.shape[-1], amp=1.0)
    coef = np.einsum("...k,...k->...", phi, s.spinor)
    return phi - coef[..., None] * s.spinor


def random_sym_field(torus: LatticeTorus, rng, amp: float = 0.5) -> np.ndarray:
    """Band-limited symmetric coordinate 2-tensor field (a metric mode)."""
    n = torus.n
    X = torus.coordinates()
    h = np.zeros(torus.shape + (n, n))
    for a in range(n):
        for b in range(a, n):
            for ax in range(n):
                mode = amp * rng.uniform(-1, 1) * np.sin(
                    rng.integers(1, 3) * X[..., ax] + rng.uniform(0, TWO_PI)
                )
                h[..., a, b] += mode
                if a != b:
                    h[..., b, a] += mode
    return h


@pytest.fixture(scope="session")
def alg3():
    return build_clifford(3)


@pytest.fixture(scope="session")
def alg7():
    return build_clifford(7)


@pytest.fixture(scope="session")
def section3():
    return make_section(3, 16, seed=5)
