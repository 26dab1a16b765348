"""Small oracle suites behind ``mcal selftest``.

Each suite returns a list of :class:`Check` rows; a suite passes when every
row does.
"""

from dataclasses import dataclass

import numpy as np

from . import sdp
from .eigen import TensorPreconditioner, smallest_eigpairs
from .fem1d import assemble_mass, assemble_stiffness, build_mesh
from .pair_space import PairSpace
from .sparsify import caratheodory_reduce, spectral_sparsify

__all__ = ["Check", "SUITES", "run_suite", "BOX_GROUND_ENERGY"]

# two fermions in a box of width 20: levels 1 and 2 of pi^2 n^2 / (2 * 20^2)
BOX_GROUND_ENERGY = 5.0 * np.pi ** 2 / 800.0


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)


def fem_suite(rng=None):
    out = []
    for D in (4, 10, 57):
        mesh = build_mesh(3.0, D)
        Mm = assemble_mass(mesh).to_dense()
        Kk = assemble_stiffness(mesh).to_dense()
        # rows away from the boundary see both neighbours
        rows = Mm[1:-1].sum(axis=1)
        err = np.abs(rows - mesh.h).max()
        out.append(Check(f"mass row sums = h (D={D})", err < 1e-14, f"max err {err:.1e}"))
        krow = np.abs(Kk[1:-1].sum(axis=1)).max()
        out.append(Check(f"stiffness interior rows sum to 0 (D={D})", krow < 1e-12 / mesh.h,
                         f"max {krow:.1e}"))
    return out


def eigen_suite(rng=None, D=200):
    space = PairSpace(build_mesh(10.0, D))
    res = smallest_eigpairs(space.kinetic.tocsr(), space.gram.tocsr(), 1, tol=1e-9,
                            precond=TensorPreconditioner(space))
    rel = abs(res.values[0] - BOX_GROUND_ENERGY) / BOX_GROUND_ENERGY
    return [
        Check(f"free two-fermion ground energy (D={D}, {res.method})", rel < 1e-3,
              f"{res.values[0]:.10f} vs {BOX_GROUND_ENERGY:.10f}, rel {rel:.1e}"),
        Check("eigen residual", res.residuals[0] < 1e-8, f"{res.residuals[0]:.1e}"),
    ]


def sdp_suite(rng=None, count=20):
    rng = np.random.default_rng(0) if rng is None else rng
    out = []
    worst = 0.0
    ok = True
    for _ in range(count):
        K = int(rng.integers(1, 9))
        B = rng.standard_normal((K, K))
        C = 0.5 * (B + B.T)
        sol = sdp.solve(sdp.SdpProblem(C, np.eye(K)[None], np.ones(1)))
        err = abs(sol.dual_value - np.linalg.eigvalsh(C)[0])
        worst = max(worst, err)
        ok = ok and sol.optimal and err < 1e-7
    out.append(Check(f"max y s.t. C - yI >= 0 equals lambda_min(C) ({count} instances)", ok,
                     f"max err {worst:.1e}"))
    sol = sdp.solve(sdp.SdpProblem(np.diag([1.0, 2.0]), np.eye(2)[None], np.ones(1)))
    err = max(abs(sol.primal_value - 1.0), np.abs(sol.X - np.diag([1.0, 0.0])).max())
    out.append(Check("C = diag(1, 2), tr X = 1", sol.optimal and err < 1e-7, f"err {err:.1e}"))
    return out


def sparsify_suite(rng=None, count=50):
    rng = np.random.default_rng(0) if rng is None else rng
    ok, worst = True, 0.0
    for _ in range(count):
        n = int(rng.integers(1, 51))
        J0 = int(rng.integers(1, 11))
        w = rng.random(n) + 1e-3
        V = rng.standard_normal((n, J0))
        idx, w2 = caratheodory_reduce(w, V)
        ref = w @ V
        err = np.abs(w2 @ V[idx] - ref).max() / max(1.0, np.abs(ref).max())
        worst = max(worst, err)
        ok = ok and idx.size <= J0 and np.all(w2 >= 0) and err < 1e-10
    out = [Check(f"Caratheodory reduction ({count} measures)", ok, f"max rel err {worst:.1e}")]
    B = rng.standard_normal((6, 3))
    S = B @ B.T
    Q = np.linalg.qr(rng.standard_normal((20, 6)))[0]
    st = spectral_sparsify(S, Q)
    err = np.abs((st.states * st.weights) @ st.states.T - Q @ S @ Q.T).max()
    out.append(Check("spectral sparsification keeps Gamma", st.K == 3 and err < 1e-12,
                     f"K={st.K}, err {err:.1e}"))
    return out


SUITES = {"fem": fem_suite, "eigen": eigen_suite, "sdp": sdp_suite, "sparsify": sparsify_suite}


def run_suite(kind, rng=None):
    if kind not in SUITES:
        raise ValueError(f"unknown suite {kind!r}; choose from {sorted(SUITES)}")
    return SUITES[kind](rng)
