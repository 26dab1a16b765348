"""Dense primal-dual interior-point solver for small semidefinite programs.

Primal and dual pair, with an optional nonnegative linear block ``x``::

    min <C, X> + c.x   s.t.  <A_j, X> + (G x)_j = b_j,  X >= 0, x >= 0
    max <b, y>         s.t.  C - sum_j y_j A_j = S >= 0,  c - G^T y = s >= 0

The iteration is an infeasible-start path-following method using the HKM
(XZ) symmetrized search direction with a Mehrotra predictor-corrector.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

__all__ = [
    "SdpProblem",
    "SdpSolution",
    "solve",
    "min_eig_sym",
    "read_problem",
    "write_problem",
]

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
MAX_ITER = "max-iterations"
INFEASIBLE = "infeasible-suspected"
UNBOUNDED = "unbounded-suspected"


def min_eig_sym(a):
    """Smallest eigenvalue of a symmetric matrix."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return float(la.eigvalsh(0.5 * (a + a.T), subset_by_index=[0, 0])[0])


@dataclass
class SdpProblem:
    """Problem data; ``G`` (J x L) and ``c`` (L) define the optional linear block."""

    C: np.ndarray
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray = None
    c: np.ndarray = None

    def __post_init__(self):
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        self.A = np.asarray(self.A, dtype=float)
        if self.A.ndim == 2:
            self.A = self.A[None]
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        K = self.C.shape[0]
        if self.C.shape != (K, K):
            raise ValueError(f"C must be square, got {self.C.shape}")
        if self.A.shape[1:] != (K, K):
            raise ValueError(f"constraint matrices must be {K}x{K}, got {self.A.shape[1:]}")
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError(f"{self.A.shape[0]} constraint matrices but {self.b.shape[0]} right-hand sides")
        if self.A.shape[0] < 1:
            raise ValueError("need at least one constraint")
        for name, m in (("C", self.C), *((f"A[{j}]", a) for j, a in enumerate(self.A))):
            if not np.allclose(m, m.T, rtol=0, atol=1e-12 * (1 + np.abs(m).max())):
                raise ValueError(f"{name} is not symmetric")
        self.C = 0.5 * (self.C + self.C.T)
        self.A = 0.5 * (self.A + self.A.transpose(0, 2, 1))
        if (self.G is None) != (self.c is None):
            raise ValueError("linear block needs both G and c")
        if self.G is None:
            self.G = np.zeros((self.J, 0))
            self.c = np.zeros(0)
        self.G = np.asarray(self.G, dtype=float).reshape(self.J, -1)
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if self.c.shape != (self.G.shape[1],):
            raise ValueError(f"G has {self.G.shape[1]} columns but c has {self.c.size} entries")

    @property
    def K(self):
        return self.C.shape[0]

    @property
    def J(self):
        return self.A.shape[0]

    @property
    def L(self):
        return self.G.shape[1]

    def apply(self, X):
        return np.einsum("jkl,kl->j", self.A, X)

    def adjoint(self, y):
        return np.einsum("j,jkl->kl", y, self.A)


@dataclass
class SdpSolution:
    X: np.ndarray
    y: np.ndarray
    S: np.ndarray
    status: str
    primal_value: float
    dual_value: float
    iterations: int
    primal_residual: float = np.nan
    dual_residual: float = np.nan
    info: dict = field(default_factory=dict)
    x: np.ndarray = None
    s: np.ndarray = None

    @property
    def gap(self):
        return self.primal_value - self.dual_value

    @property
    def optimal(self):
        return self.status == OPTIMAL


def _sym(a):
    return 0.5 * (a + a.swapaxes(-1, -2))


def _max_step(X, dX):
    """Largest alpha with X + alpha dX >= 0 (X positive definite)."""
    Lc = la.cholesky(X, lower=True)
    Z = la.solve_triangular(Lc, dX, lower=True)
    Z = la.solve_triangular(Lc, Z.T, lower=True)
    lam = la.eigvalsh(_sym(Z), subset_by_index=[0, 0])[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lin(x, dx):
    neg = dx < 0
    return np.inf if not neg.any() else float(np.min(-x[neg] / dx[neg]))


@dataclass
class _Iterate:
    X: np.ndarray
    x: np.ndarray
    y: np.ndarray
    S: np.ndarray
    s: np.ndarray

    def copy(self):
        return _Iterate(self.X.copy(), self.x.copy(), self.y.copy(), self.S.copy(), self.s.copy())


def _metrics(p, it):
    rp = p.b - p.apply(it.X) - p.G @ it.x
    Rd = p.C - p.adjoint(it.y) - it.S
    rd = p.c - p.G.T @ it.y - it.s
    pobj = float(np.vdot(p.C, it.X) + p.c @ it.x)
    dobj = float(p.b @ it.y)
    pinf = float(np.max(np.abs(rp) / (1.0 + np.abs(p.b))))
    dinf = float(np.sqrt(la.norm(Rd) ** 2 + rd @ rd) / (1.0 + la.norm(p.C) + la.norm(p.c)))
    rgap = abs(pobj - dobj) / (1.0 + abs(pobj))
    return rp, Rd, rd, pobj, dobj, pinf, dinf, rgap


def _schur_solver(schur):
    """Cholesky solve, falling back to an eigenvalue pseudo-inverse.

    Near the optimum of a nearly degenerate problem the Schur matrix can lose
    definiteness to rounding; the pseudo-inverse then drops the directions
    that carry no information at working precision.
    """
    try:
        cM = la.cho_factor(schur, lower=True)
        return lambda r: la.cho_solve(cM, r)
    except la.LinAlgError:
        lam, U = la.eigh(schur)
        keep = lam > 1e-14 * lam[-1]
        if not keep.any():
            raise
        Uk, lk = U[:, keep], lam[keep]
        return lambda r: Uk @ ((Uk.T @ r) / lk)


def _step(p, it, rp, Rd, rd):
    """One Mehrotra predictor-corrector step with the HKM direction."""
    X, x, y, S, s = it.X, it.x, it.y, it.S, it.s
    K = p.K
    mu = (float(np.vdot(X, S)) + float(x @ s)) / (K + p.L)
    cS = la.cho_factor(S, lower=True)
    Sinv = la.cho_solve(cS, np.eye(K))
    XA = np.einsum("kl,jlm->jkm", X, p.A) @ Sinv
    schur = np.einsum("ikl,jlk->ij", p.A, XA)
    if p.L:
        d = x / s
        schur = schur + (p.G * d) @ p.G.T
    solve_schur = _schur_solver(0.5 * (schur + schur.T))
    XRdSinv = _sym(X @ Rd @ Sinv)

    def direction(R, r):
        # R: target for the matrix block, r: complementarity target for x*s
        rhs = rp - p.apply(_sym(R)) + p.apply(XRdSinv)
        if p.L:
            rhs = rhs - p.G @ ((r - x * rd) / s)
        dy = solve_schur(rhs)
        dS = Rd - p.adjoint(dy)
        dX = _sym(R - X @ dS @ Sinv)
        ds = rd - p.G.T @ dy
        dx = (r - x * ds) / s
        return dX, dx, dy, dS, ds

    dXa, dxa, dya, dSa, dsa = direction(-X, -x * s)
    ap = min(1.0, _max_step(X, dXa), _max_step_lin(x, dxa))
    ad = min(1.0, _max_step(S, dSa), _max_step_lin(s, dsa))
    mu_aff = (float(np.vdot(X + ap * dXa, S + ad * dSa))
              + float((x + ap * dxa) @ (s + ad * dsa))) / (K + p.L)
    sigma = float(np.clip((mu_aff / mu) ** 3, 0.0, 1.0)) if mu > 0 else 0.0

    R = sigma * mu * Sinv - X - dXa @ dSa @ Sinv
    r = sigma * mu - x * s - dxa * dsa
    dX, dx, dy, dS, ds = direction(R, r)
    gamma = 0.9 + 0.09 * min(1.0, max(ap, ad))
    ap = min(1.0, gamma * min(_max_step(X, dX), _max_step_lin(x, dx)))
    ad = min(1.0, gamma * min(_max_step(S, dS), _max_step_lin(s, ds)))
    # rounding can push a near-boundary iterate out of the cone: back off
    for _ in range(8):
        Xn = _sym(X + ap * dX)
        Sn = _sym(S + ad * dS)
        try:
            la.cholesky(Xn)
            la.cholesky(Sn)
        except la.LinAlgError:
            ap *= 0.7
            ad *= 0.7
            continue
        return _Iterate(Xn, x + ap * dx, y + ad * dy, Sn, s + ad * ds), max(ap, ad)
    raise la.LinAlgError("iterate left the positive definite cone")


def solve(problem, tol=1e-9, max_iter=200, check_independence=True):
    """Solve a primal-dual SDP pair.

    Parameters
    ----------
    problem : SdpProblem
    tol : float
        Relative tolerance on primal residuals, dual residual and gap.
    max_iter : int
    check_independence : bool
        Refuse linearly dependent constraint matrices (callers are expected
        to reduce them beforehand).

    Returns
    -------
    SdpSolution
        ``S`` and ``s`` are recomputed from ``y`` so that they certify the
        returned ``y`` directly; the dual residual is their cone violation.
    """
    p = problem
    K, J = p.K, p.J
    if check_independence:
        s = la.svdvals(np.hstack([p.A.reshape(J, -1), p.G]))
        if s[-1] <= 1e-12 * s[0]:
            raise ValueError("constraint matrices are linearly dependent; reduce them first")

    scale = 1.0 + max(float(np.abs(p.b).max()), la.norm(p.C), float(la.norm(p.A, axis=(1, 2)).max()),
                      float(np.abs(p.c).max(initial=0.0)))
    it = _Iterate(scale * np.eye(K), np.full(p.L, scale), np.zeros(J), scale * np.eye(K), np.full(p.L, scale))

    best = None
    status = MAX_ITER
    k = 0
    stall = 0
    for k in range(1, max_iter + 1):
        rp, Rd, rd, pobj, dobj, pinf, dinf, rgap = _metrics(p, it)
        score = max(pinf, dinf, rgap)
        if best is None or score < best[0]:
            best = (score, it.copy(), k)
        elif k - best[2] > 8 and best[0] < 1e-6:
            # precision exhausted: residuals no longer improve
            break
        if score <= tol:
            status = OPTIMAL
            break
        if np.trace(it.X) + it.x.sum() > 1e12 * (1.0 + scale):
            status = UNBOUNDED
            break
        if la.norm(it.y) > 1e12 * (1.0 + scale):
            status = INFEASIBLE
            break
        try:
            it, step = _step(p, it, rp, Rd, rd)
        except la.LinAlgError:
            log.debug("numerical breakdown at iteration %d", k)
            break
        if step < 1e-10:
            stall += 1
            if stall > 3:
                break
        else:
            stall = 0

    if status != OPTIMAL and best is not None:
        it = best[1]
    return _certify(p, it, status, tol, k)


def _final_metrics(p, X, x, y):
    """Residuals with ``S, s`` recomputed from ``y``; dual infeasibility is their cone violation."""
    S = _sym(p.C - p.adjoint(y))
    s = p.c - p.G.T @ y
    rp = p.b - p.apply(X) - p.G @ x
    pobj = float(np.vdot(p.C, X) + p.c @ x)
    dobj = float(p.b @ y)
    pinf = float(np.max(np.abs(rp) / (1.0 + np.abs(p.b))))
    viol = max(0.0, -min_eig_sym(S), -float(s.min(initial=0.0)))
    dinf = viol / (1.0 + la.norm(p.C) + la.norm(p.c))
    rgap = abs(pobj - dobj) / (1.0 + abs(pobj))
    return S, s, pinf, dinf, rgap, pobj, dobj


def _refine_factor(p, V, iters=30):
    """Gauss-Newton on ``A(V V^T) = b`` starting from the factor ``V``."""
    norm_b = 1.0 + la.norm(p.b)
    best = None
    for _ in range(iters):
        AV = np.einsum("jkl,la->jka", p.A, V)
        res = np.einsum("jka,ka->j", AV, V) - p.b
        r = la.norm(res) / norm_b
        if best is not None and r >= 0.5 * best[0]:
            break
        best = (r, V)
        if r < 1e-15:
            break
        jac = 2.0 * AV.reshape(p.J, -1)
        dv = la.lstsq(jac, -res)[0]
        V = V + dv.reshape(V.shape)
    return best[1]


def _polish(p, X):
    """Feasible points of low rank near ``X``.

    At a degenerate primal optimum (more constraints than the optimal face
    can absorb) the Schur matrix turns singular and the iteration stalls
    short of full accuracy. Such optima are isolated points of the
    low-rank variety, so Gauss-Newton on the factor ``V`` of
    ``X = V V^T`` converges fast from the leading eigenvectors of ``X``.
    """
    lam, U = la.eigh(_sym(X))
    top = max(lam[-1], 0.0)
    seen = set()
    for t in (1e-2, 1e-4, 1e-6, 1e-8):
        r = int(np.sum(lam > t * top))
        if r == 0 or r in seen:
            continue
        seen.add(r)
        V = U[:, -r:] * np.sqrt(lam[-r:])
        V = _refine_factor(p, V)
        yield V @ V.T


def _certify(p, it, status, tol, iterations):
    X, x, y = it.X, it.x, it.y
    S, s, pinf, dinf, rgap, pobj, dobj = _final_metrics(p, X, x, y)
    score = max(pinf, dinf, rgap)
    if score > tol * 1e-2 and p.L == 0:
        for Xp in _polish(p, X):
            res = _final_metrics(p, Xp, x, y)
            if max(res[2:5]) < score:
                X = Xp
                S, s, pinf, dinf, rgap, pobj, dobj = res
                score = max(pinf, dinf, rgap)
    if score <= tol:
        status = OPTIMAL
    elif status == OPTIMAL:
        status = MAX_ITER
    return SdpSolution(
        X=X, y=y, S=S, status=status, primal_value=pobj, dual_value=dobj,
        iterations=iterations, primal_residual=pinf, dual_residual=dinf,
        info={
            "relative_gap": rgap,
            "mu": (float(np.vdot(X, S)) + float(x @ s)) / (p.K + p.L),
            "min_eig_X": min_eig_sym(X),
            "min_eig_S": min_eig_sym(S),
        },
        x=x, s=s,
    )


def write_problem(path, problem):
    """Write the plain-text debug format (see README); the linear block is not stored."""
    p = problem
    if p.L:
        raise ValueError("the text format has no linear block")
    with open(path, "w") as f:
        f.write(f"{p.K} {p.J}\n")
        np.savetxt(f, p.C, fmt="%.17g")
        for a in p.A:
            np.savetxt(f, a, fmt="%.17g")
        np.savetxt(f, p.b[None, :], fmt="%.17g")


def read_problem(path):
    """Read the plain-text debug format.

    Layout: a header line ``K J``, then the K rows of C, then J blocks of K
    rows for A_1..A_J, then one line with the J entries of b. Lines starting
    with ``#`` are ignored.
    """
    with open(path) as f:
        lines = [ln for ln in (raw.strip() for raw in f) if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path} holds no data")
    K, J = (int(t) for t in lines[0].split())
    rows = [np.array(ln.split(), dtype=float) for ln in lines[1:]]
    if len(rows) != K * (J + 1) + 1:
        raise ValueError(f"expected {K * (J + 1) + 1} data rows for K={K}, J={J}, got {len(rows)}")
    C = np.vstack(rows[:K])
    A = np.stack([np.vstack(rows[K * (j + 1):K * (j + 2)]) for j in range(J)])
    b = rows[-1]
    return SdpProblem(C, A, b)
