"""Column-generation iteration for the moment-constrained Lieb functional.

Each iteration solves a small dual SDP on the span of the current pool of
two-particle states, adds the lowest eigenstates of the resulting
``H - W^v`` to the pool, solves the primal SDP on the enlarged pool and
compresses the optimal density matrix back onto its occupied directions.

Conventions: two particles (``N = 2``), densities integrate to 2 and
density matrices have unit trace.
"""

import logging
import struct
import time
import warnings
from dataclasses import dataclass, field, fields, replace
from functools import cached_property

import numpy as np

from . import sdp
from .eigen import TensorPreconditioner, smallest_eigpairs
from .fem1d import PiecewiseQuadratic, TriDiagSym, assemble_weighted_mass, build_mesh, interpolate
from .moments import MomentData, MomentFamily, pool_moment_matrices, target_moments
from .pair_space import PairSpace, extend_orthonormal, slater, transition_bands
from .sparsify import SparseState, caratheodory_reduce, spectral_sparsify

__all__ = [
    "McalConfig",
    "McalError",
    "MonotonicityError",
    "McalProblem",
    "McalState",
    "RunReport",
    "TargetDensity",
    "build_target",
    "initialize",
    "dual_step",
    "generate_columns",
    "primal_step",
    "PrimalResult",
    "certified_bounds",
    "run",
    "ground_energy",
    "save_checkpoint",
    "load_checkpoint",
]

log = logging.getLogger(__name__)

N_PARTICLES = 2
# SDP subproblems are solved this much tighter than tol_sdp so that
# identities composed from two solves still hold within 2 * tol_sdp.
SDP_SAFETY = 0.1


class McalError(RuntimeError):
    pass


class MonotonicityError(McalError):
    pass


@dataclass
class McalConfig:
    L: float = 10.0
    D: int = 100
    M: int = 20
    q_vec: int = 4
    kernel: str = "softcore"
    eps: float = 1.0
    tol_sdp: float = 1e-9
    tol_stop: float = 1e-6
    drop_tol: float = 1e-10
    eig_tol: float = 1e-8
    rowspace_rtol: float = 1e-11
    pool_cap: int = None
    box_radius: float = 1.0
    max_iters: int = 100
    seed: int = 0
    out: str = None
    density_file: str = None

    def __post_init__(self):
        if self.M < 2:
            raise ValueError(f"M must be at least 2, got {self.M}")
        if self.D < 3:
            raise ValueError(f"D must be at least 3, got {self.D}")
        if self.q_vec < 1:
            raise ValueError(f"q_vec must be at least 1, got {self.q_vec}")
        if self.pool_cap is not None and self.pool_cap < self.M + 1:
            raise ValueError(f"pool_cap must be at least M + 1 = {self.M + 1}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        for name in ("tol_sdp", "tol_stop", "drop_tol", "eig_tol", "rowspace_rtol", "box_radius", "L", "eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.kernel not in ("softcore", "exact"):
            raise ValueError(f"unknown kernel {self.kernel!r}")

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class TargetDensity:
    rho: PiecewiseQuadratic
    source: str = "builtin"

    def __call__(self, x):
        return self.rho(x)

    def integral(self):
        return self.rho.integral()


def _phi_even(L):
    return lambda x: 1.0 - np.abs(x) / L


def _phi_odd(L):
    def f(x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0, 1.0 - np.abs(2 * x + L) / L, np.abs(2 * x - L) / L - 1.0)
    return f


def _m_normalize(space, u):
    return u / np.sqrt(space.mass.quad(u))


def _read_density_file(path, mesh):
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] >= 2:
        x, r = data[:, 0], data[:, 1]
        vals = np.interp(mesh.nodes, x, r, left=0.0, right=0.0)
    else:
        vals = data[:, 0]
        if vals.size != mesh.D + 1:
            raise ValueError(f"single-column density needs {mesh.D + 1} nodal values, got {vals.size}")
    if np.any(data[:, -1] < 0):
        raise ValueError("density file contains negative values")
    return vals


def build_target(config, space=None):
    """Target density and an initial state whose density equals it.

    The builtin target is the density of the normalized Slater determinant
    of the interpolated even and odd tent functions. For a user density
    (nodal file), the initial state is the determinant of
    ``sqrt(rho) cos(pi F)`` and ``sqrt(rho) sin(pi F)`` with ``F`` the
    cumulative density divided by two; the target is then replaced by the
    exact discrete density of that state so the initial pool matches it.
    """
    space = space or PairSpace(build_mesh(config.L, config.D))
    mesh = space.mesh
    if config.density_file:
        vals = _read_density_file(config.density_file, mesh)
        rho_in = PiecewiseQuadratic.from_nodal_values(mesh, vals)
        total = rho_in.integral()
        if not total > 0:
            raise ValueError("density file integrates to zero")
        vals = vals * (N_PARTICLES / total)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * mesh.h * (vals[1:] + vals[:-1]))])
        F = cum / cum[-1]
        amp = np.sqrt(vals)
        u = (amp * np.cos(np.pi * F))[1:-1]
        w = (amp * np.sin(np.pi * F))[1:-1]
        u = _m_normalize(space, u)
        w = w - space.mass.quad(u, w) * u
        w = _m_normalize(space, w)
        source = str(config.density_file)
    else:
        u = _m_normalize(space, interpolate(mesh, _phi_even(config.L)))
        w = _m_normalize(space, interpolate(mesh, _phi_odd(config.L)))
        source = "builtin"
    psi0 = slater(u, w, space.basis)
    psi0 = psi0 / space.norm(psi0)
    rho = space.density(psi0)
    return TargetDensity(rho, source), psi0


class McalProblem:
    """Everything that stays fixed during a run: discretization, operators, target."""

    def __init__(self, config):
        self.config = config
        self.mesh = build_mesh(config.L, config.D)
        self.space = PairSpace(self.mesh)
        self.family = MomentFamily(config.M, config.L)
        self.target, self.psi0 = build_target(config, self.space)
        self.b = target_moments(self.family, self.target.rho)
        self.pool_cap = config.pool_cap or 3 * (config.M + 1)
        # raised when an SDP needs a coarser row space, never lowered again,
        # so consecutive steps see the same constraint set
        self.rowspace_rtol = config.rowspace_rtol

    @cached_property
    def G(self):
        return self.space.gram

    @cached_property
    def H(self):
        """Two-particle Hamiltonian: kinetic energy plus pair interaction."""
        W = self.space.interaction(self.config.kernel, self.config.eps)
        return (self.space.kinetic + W).tocsr()

    def pool_data(self, pool):
        """Pool Hamiltonian matrix and moment matrices for a G-orthonormal pool."""
        C = pool.T @ (self.H @ pool)
        C = 0.5 * (C + C.T)
        bands = transition_bands(pool, self.space.mass, self.space.basis)
        return C, pool_moment_matrices(self.family, bands, self.mesh)

    def potential_mass(self, y):
        Vd, Vo = self.family.weighted_masses(self.mesh)
        return TriDiagSym(y @ Vd, y @ Vo)

    def hamiltonian(self, y):
        """``H - W^v`` for ``v = sum_m y_m phi_m``."""
        return (self.H - self.space.onebody(self.potential_mass(y))).tocsr()

    def state_moments(self, state):
        """Moments of the density of a sparse state."""
        bands = transition_bands(state.states, self.space.mass, self.space.basis)
        A = pool_moment_matrices(self.family, bands, self.mesh)
        return np.einsum("mkk,k->m", A, state.weights)

    def state_density(self, state):
        diag, off = transition_bands(state.states, self.space.mass, self.space.basis)
        d = np.einsum("kkp,k->p", diag, state.weights)
        o = np.einsum("kkp,k->p", off, state.weights)
        return PiecewiseQuadratic.from_band(self.mesh, d, o)

    def energy(self, state):
        return float(np.einsum("ik,ik,k->", state.states, self.H @ state.states, state.weights))


@dataclass
class McalState:
    """Iteration state.

    ``pool`` is the sparse state (occupied directions, positive weights).
    ``reserve`` holds unoccupied directions of the last primal solution that
    stay in the working pool; see :func:`primal_step`. ``center`` is the
    best certified potential so far (shifted to be globally feasible) and
    ``best_lower`` its lower bound. ``moment_log`` holds rows
    ``(n, residual of the SDP solution, residual after sparsification)``.
    """

    n: int
    pool: SparseState
    F: list = field(default_factory=list)
    Ftilde: list = field(default_factory=list)
    E: list = field(default_factory=list)
    K: list = field(default_factory=list)
    gap: list = field(default_factory=list)
    lower: list = field(default_factory=list)
    y: np.ndarray = None
    reserve: np.ndarray = None
    last_columns: np.ndarray = None
    center: np.ndarray = None
    best_lower: float = -np.inf
    moment_log: list = field(default_factory=list)

    def working_basis(self):
        if self.reserve is None or self.reserve.shape[1] == 0:
            return self.pool.states
        return np.hstack([self.pool.states, self.reserve])

    def history(self):
        """Rows ``(n, F_n, Ftilde_n, E_vn, K_n, sdp_gap, lower_bound)``."""
        return [
            (n, self.F[n], self.Ftilde[n], self.E[n], self.K[n], self.gap[n], self.lower[n])
            for n in range(len(self.Ftilde))
        ]


@dataclass
class DualResult:
    y: np.ndarray
    F: float
    gap: float
    rank: int
    degenerate: bool
    solution: object = None
    basis: np.ndarray = None
    moments: np.ndarray = None
    exact: bool = True


@dataclass
class RunReport:
    status: str
    Ftilde: float
    lower: float
    width: float
    state: SparseState
    y: np.ndarray
    rho_gamma: PiecewiseQuadratic
    moment_residuals: np.ndarray
    history: list
    n_iter: int
    message: str = ""
    problem: object = None
    violations: list = field(default_factory=list)
    wall_time: float = 0.0
    final_state: object = None

    @property
    def converged(self):
        return self.status == "converged"


def _moment_residuals(problem, state):
    return np.abs(problem.state_moments(state) - problem.b) / (1.0 + np.abs(problem.b))


def _compress(problem, state):
    """Caratheodory step: at most M + 1 states with the same moments and energy.

    Returns the reduced state and the dropped states.
    """
    M = problem.family.M
    if state.K <= M + 1:
        return state, state.states[:, :0]
    bands = transition_bands(state.states, problem.space.mass, problem.space.basis)
    A = pool_moment_matrices(problem.family, bands, problem.mesh)
    energies = np.einsum("ik,ik->k", state.states, problem.H @ state.states)
    atoms = np.column_stack([np.einsum("mkk->km", A), energies])
    idx, w = caratheodory_reduce(state.weights, atoms)
    log.info("Caratheodory compression %d -> %d states", state.K, idx.size)
    dropped = np.setdiff1d(np.arange(state.K), idx)
    return state.subset(idx, w), state.states[:, dropped]


def _split(problem, X, basis, slack):
    """Sparse state from ``X`` plus the reserve of unoccupied directions.

    Unoccupied eigenvectors of ``X`` are ranked by their dual slack
    ``u^T S u`` (small slack: nearly active constraint) and the first ones
    are kept until the working pool reaches ``pool_cap``.
    """
    cfg = problem.config
    lam, U = np.linalg.eigh(0.5 * (X + X.T))
    drop = cfg.drop_tol * max(lam[-1], 0.0)
    state = spectral_sparsify(X, basis, drop_tol=drop)
    state, dropped = _compress(problem, state)
    free = U[:, lam <= drop]
    order = np.argsort(np.einsum("ik,ij,jk->k", free, slack, free), kind="stable")
    reserve = np.hstack([dropped, basis @ free[:, order]])
    room = max(problem.pool_cap - state.K, 0)
    return state, reserve[:, :room]


def initialize(config_or_problem):
    """Initial state from the single-determinant pool.

    With one pool state and the constant function among the moment
    functions, the only feasible weight is 1, so the initial primal SDP is
    skipped and its value is the energy of that state.
    """
    problem = config_or_problem if isinstance(config_or_problem, McalProblem) else McalProblem(config_or_problem)
    cfg = problem.config
    pool = problem.psi0[:, None]
    C, A = problem.pool_data(pool)
    moments = A[:, 0, 0]
    resid = np.abs(moments - problem.b) / (1.0 + np.abs(problem.b))
    worst = int(np.argmax(resid))
    if resid[worst] > cfg.tol_sdp:
        raise McalError(
            f"initial state does not reproduce the target moments: "
            f"moment {worst} residual {resid[worst]:.3e} > {cfg.tol_sdp:.1e}"
        )
    state = McalState(n=0, pool=SparseState(np.ones(1), pool))
    state.F.append(np.nan)
    state.Ftilde.append(float(C[0, 0]))
    state.E.append(np.nan)
    state.K.append(1)
    state.gap.append(np.nan)
    state.lower.append(np.nan)
    state.y = np.zeros(cfg.M)
    return problem, state


# SVD cutoffs tried in turn when an SDP on the reduced constraints fails: a
# nearly null constraint direction leaves the dual unbounded at working precision
RTOL_CEILING = 1e-8


def _solve_sdp(problem, C, A, what):
    """Solve on the row space of the moment map; returns ``(solution, MomentData)``."""
    cfg = problem.config
    rtol = problem.rowspace_rtol
    while True:
        data = MomentData(problem.b, A, rtol)
        if data.degenerate:
            return None, data
        outside = data.outside_residual()
        if outside > cfg.tol_sdp * (1.0 + np.linalg.norm(problem.b)):
            raise McalError(f"{what}: target moments lie outside the pool's reach (residual {outside:.3e})")
        A_red, b_red = data.reduced()
        sol = sdp.solve(sdp.SdpProblem(C, A_red, b_red), tol=cfg.tol_sdp * SDP_SAFETY)
        score = max(sol.primal_residual, sol.dual_residual, sol.info["relative_gap"])
        if sol.optimal or score <= cfg.tol_sdp:
            return sol, data
        if rtol * 10 > RTOL_CEILING * (1 + 1e-9):
            raise McalError(
                f"{what}: SDP ended with status {sol.status} "
                f"(gap {sol.gap:.3e}, primal residual {sol.primal_residual:.3e})"
            )
        rtol *= 10
        problem.rowspace_rtol = rtol
        log.info("%s: SDP %s, retrying with row-space cutoff %.0e", what, sol.status, rtol)


def _box_potential(C, A_red, b_red, center, radius, tol):
    """Maximize ``b.z`` over the pool-feasible ``z`` with ``|z - center| <= radius``.

    Returns ``(z, active)``; ``active`` tells whether the box constrains the
    optimum (if not, ``z`` maximizes the unrestricted pool dual as well).
    """
    r = b_red.size
    G = np.hstack([np.eye(r), -np.eye(r)])
    c = np.concatenate([center + radius, radius - center])
    sol = sdp.solve(sdp.SdpProblem(C, A_red, b_red, G=G, c=c), tol=tol)
    if not sol.optimal:
        raise McalError(f"box-restricted dual ended with status {sol.status}")
    z = sol.y
    active = bool(np.any(np.abs(z - center) >= radius * (1.0 - 1e-6)))
    return z, active


def dual_step(problem, state, center=None):
    """Pool dual value ``F^n`` and the next potential.

    The dual SDP is solved on the working pool (the sparse state together
    with its reserve); its span lies between the sparse state and the
    previous enlarged pool, so the value still equals the previous primal
    value. When the primal on the pool has no interior the dual optimum
    can be unbounded or not attained, so the potential itself is taken from
    the same dual restricted to a box of half-width ``box_radius`` around
    ``center`` (default: zero). The center should be globally feasible,
    e.g. the best certified potential so far. If the box is inactive the
    potential is an exact maximizer.
    """
    cfg = problem.config
    basis = state.working_basis()
    C, A = problem.pool_data(basis)
    sol, data = _solve_sdp(problem, C, A, "dual step")
    if sol is None:
        return DualResult(np.zeros(problem.family.M), 0.0, 0.0, 0, True, basis=basis)
    Q = data.rowspace
    A_red, b_red = data.reduced()
    c = np.zeros(Q.shape[1]) if center is None else Q.T @ center
    z, active = _box_potential(C, A_red, b_red, c, cfg.box_radius, cfg.tol_sdp)
    return DualResult(Q @ z, sol.dual_value, sol.gap, data.rank, False, sol, basis, A, not active)


def generate_columns(problem, state, y, q=None):
    """Lowest eigenpairs of ``H - W^v``; returns ``(E(v), eigenvectors)``."""
    cfg = problem.config
    q = q or cfg.q_vec
    vmass = problem.potential_mass(y)
    Hv = (problem.H - problem.space.onebody(vmass)).tocsr()
    precond = TensorPreconditioner(problem.space, vmass=vmass)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = smallest_eigpairs(Hv, problem.G, q, tol=cfg.eig_tol, precond=precond,
                                seed=cfg.seed, guess=state.last_columns)
    state.last_columns = res.vectors
    return float(res.values[0]), res.vectors


@dataclass
class PrimalResult:
    X: np.ndarray
    Ftilde: float
    state: SparseState
    reserve: np.ndarray
    residual_sdp: float
    residual_sparse: float


def primal_step(problem, state, columns):
    """Primal SDP on the working pool plus new columns, then sparsification.

    The moment residuals ``max_m |b_m(Gamma) - b_m| / (1 + |b_m|)`` of the
    SDP solution and of the sparsified state are returned for monitoring.
    """
    basis, _ = extend_orthonormal(state.working_basis(), columns, problem.G)
    C, A = problem.pool_data(basis)
    sol, _ = _solve_sdp(problem, C, A, "primal step")
    sparse, reserve = _split(problem, sol.X, basis, sol.S)
    b = problem.b
    before = float(np.max(np.abs(np.einsum("mkl,kl->m", A, sol.X) - b) / (1.0 + np.abs(b))))
    after = float(np.max(_moment_residuals(problem, sparse)))
    return PrimalResult(sol.X, sol.primal_value, sparse, reserve, before, after)


def certified_bounds(state):
    """``(lower, upper)`` bracket of the discrete moment-constrained functional.

    Shifting the last potential by ``E(v_n) / 2`` (the constant lies in the
    span of the hats) gives a globally feasible potential, hence the lower
    bound ``b . y_n + E(v_n)``; it equals ``F^n + E(v_n)`` whenever the
    potential maximizes the pool dual, and stays valid when the box around
    the previous potential is active. The upper bound is the last primal
    value.
    """
    if len(state.E) < 2:
        raise ValueError("need at least one completed iteration")
    n = len(state.E) - 1
    lower = state.lower[n]
    upper = state.Ftilde[n] if np.isfinite(state.Ftilde[n]) else state.Ftilde[n - 1]
    return lower, upper


def _check_monotone(state, tol, violations):
    n = len(state.F) - 1
    if n < 1:
        return
    Fn, Ft_prev, Ftn = state.F[n], state.Ftilde[n - 1], state.Ftilde[n]
    msgs = []
    if abs(Ft_prev - Fn) > 2 * tol:
        msgs.append(f"|Ftilde^{n - 1} - F^{n}| = {abs(Ft_prev - Fn):.3e}")
    if np.isfinite(Ftn) and Fn < Ftn - 2 * tol:
        msgs.append(f"F^{n} < Ftilde^{n} by {Ftn - Fn:.3e}")
    if msgs:
        violations.extend(msgs)
        raise MonotonicityError("; ".join(msgs))


def run(config, resume=None, callback=None):
    """Run the iteration until ``E(v_n) >= -tol_stop`` or ``max_iters``.

    Parameters
    ----------
    config : McalConfig or McalProblem
        A prepared problem may carry a custom target and initial state.
    resume : str, optional
        Checkpoint file to continue from.
    callback : callable, optional
        Called as ``callback(problem, state)`` after every iteration.
    """
    t0 = time.perf_counter()
    problem, state = initialize(config)
    if resume is not None:
        state = load_checkpoint(resume, problem)
    cfg = problem.config
    status, message = "max-iterations", ""
    violations = []
    last_dual = None
    try:
        while state.n < cfg.max_iters:
            n = state.n + 1
            dual = dual_step(problem, state, state.center)
            E, cols = generate_columns(problem, state, dual.y)
            # b.y + E(v) bounds the discrete functional from below for any y
            lower = float(problem.b @ dual.y) + E
            state.y = dual.y
            state.F.append(dual.F)
            state.E.append(E)
            state.gap.append(dual.gap)
            state.lower.append(lower)
            last_dual = dual
            if lower > state.best_lower:
                # shifting by E/2 (N = 2, hats sum to one) makes v feasible everywhere
                state.center, state.best_lower = dual.y + 0.5 * E, lower
            log.info("n=%d F=%.12f E=%.3e K=%d%s", n, dual.F, E, state.pool.K,
                     "" if dual.exact else " (box active)")
            if dual.exact and E >= -cfg.tol_stop:
                state.Ftilde.append(np.nan)
                state.K.append(state.pool.K)
                state.n = n
                _check_monotone(state, cfg.tol_sdp, violations)
                status = "converged"
                break
            primal = primal_step(problem, state, cols)
            state.pool, state.reserve = primal.state, primal.reserve
            state.Ftilde.append(primal.Ftilde)
            state.K.append(primal.state.K)
            state.moment_log.append((n, primal.residual_sdp, primal.residual_sparse))
            state.n = n
            _check_monotone(state, cfg.tol_sdp, violations)
            if callback is not None:
                callback(problem, state)
    except (McalError, sdp.la.LinAlgError, RuntimeError, ValueError) as exc:
        status, message = "failed", f"{type(exc).__name__}: {exc}"
        log.error("run aborted: %s", message)
        # keep histories rectangular
        while len(state.Ftilde) < len(state.F):
            state.Ftilde.append(np.nan)
            state.K.append(state.pool.K)

    final = state.pool
    finite = [f for f in state.Ftilde if np.isfinite(f)]
    Ft_final = finite[-1]
    if status == "converged" and last_dual is not None and last_dual.solution is not None:
        # terminal primal: the dual SDP on the working pool also carries its primal optimum
        sol = last_dual.solution
        final, reserve = _split(problem, sol.X, last_dual.basis, sol.S)
        Ft_final = sol.primal_value
        state.Ftilde[-1] = Ft_final
        state.K[-1] = final.K
        state.pool, state.reserve = final, reserve
        b = problem.b
        before = np.abs(np.einsum("mkl,kl->m", last_dual.moments, sol.X) - b) / (1.0 + np.abs(b))
        state.moment_log.append((state.n, float(before.max()),
                                 float(np.max(_moment_residuals(problem, final)))))
    lower = max((v for v in state.lower if np.isfinite(v)), default=np.nan)
    report = RunReport(
        status=status,
        Ftilde=float(Ft_final),
        lower=float(lower),
        width=float(Ft_final - lower) if np.isfinite(lower) else np.nan,
        state=final,
        y=np.array(state.y),
        rho_gamma=problem.state_density(final),
        moment_residuals=_moment_residuals(problem, final),
        history=state.history(),
        n_iter=state.n,
        message=message,
        problem=problem,
        violations=violations,
        wall_time=time.perf_counter() - t0,
        final_state=state,
    )
    return report


def ground_energy(v, config_or_problem, breakpoints=None):
    """Smallest eigenvalue of ``H - W^v`` on the discrete wedge space for a callable ``v``."""
    problem = config_or_problem if isinstance(config_or_problem, McalProblem) else McalProblem(config_or_problem)
    Vm = assemble_weighted_mass(problem.mesh, v, breakpoints=breakpoints)
    Hv = (problem.H - problem.space.onebody(Vm)).tocsr()
    precond = TensorPreconditioner(problem.space, vmass=Vm)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = smallest_eigpairs(Hv, problem.G, 1, tol=problem.config.eig_tol,
                                precond=precond, seed=problem.config.seed)
    return float(res.values[0])


# checkpoint layout, all little-endian:
#   magic b"MCALCKPT", uint32 version, float64 L, int64 D, int64 M, int64 n,
#   int64 K, int64 n2, int64 H (history length), int64 R (reserve size),
#   K float64 weights, K*n2 float64 state coefficients (state-major),
#   M float64 potential coefficients,
#   6*H float64 histories: F, Ftilde, E, K, gap, lower,
#   R*n2 float64 reserve coefficients (state-major),
#   M float64 box center (NaN before the first iteration),
#   float64 best lower bound, float64 row-space cutoff
_MAGIC = b"MCALCKPT"
_VERSION = 2
_HEADER = struct.Struct("<8sIdqqqqqqq")
_HISTORIES = ("F", "Ftilde", "E", "K", "gap", "lower")


def save_checkpoint(path, problem, state):
    cfg = problem.config
    pool = state.pool
    n2 = pool.states.shape[0]
    H = len(state.Ftilde)
    reserve = state.reserve if state.reserve is not None else np.zeros((n2, 0))
    center = state.center if state.center is not None else np.full(cfg.M, np.nan)
    y = state.y if state.y is not None else np.zeros(cfg.M)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, _VERSION, cfg.L, cfg.D, cfg.M, state.n, pool.K,
                             n2, H, reserve.shape[1]))
        f.write(np.asarray(pool.weights, "<f8").tobytes())
        f.write(np.ascontiguousarray(pool.states.T, "<f8").tobytes())
        f.write(np.asarray(y, "<f8").tobytes())
        for name in _HISTORIES:
            f.write(np.asarray(getattr(state, name), "<f8").tobytes())
        f.write(np.ascontiguousarray(reserve.T, "<f8").tobytes())
        f.write(np.asarray(center, "<f8").tobytes())
        f.write(np.asarray([state.best_lower, problem.rowspace_rtol], "<f8").tobytes())


def load_checkpoint(path, problem=None):
    """Read a checkpoint; with ``problem`` given, check it matches and return a McalState.

    The row-space cutoff stored in the file is restored into ``problem``.
    """
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size or raw[:8] != _MAGIC:
        raise ValueError(f"{path} is not an MCAL checkpoint")
    magic, version, L, D, M, n, K, n2, H, R = _HEADER.unpack_from(raw, 0)
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    expected = _HEADER.size + 8 * (K + K * n2 + M + 6 * H + R * n2 + M + 2)
    if len(raw) != expected:
        raise ValueError(f"{path} is truncated or corrupt ({len(raw)} bytes, expected {expected})")
    off = _HEADER.size

    def take(count):
        nonlocal off
        arr = np.frombuffer(raw, "<f8", count, off).astype(float)
        off += 8 * count
        return arr

    weights = take(K)
    states = take(K * n2).reshape(K, n2).T.copy()
    y = take(M)
    hist = {name: list(take(H)) for name in _HISTORIES}
    hist["K"] = [int(k) for k in hist["K"]]
    reserve = take(R * n2).reshape(R, n2).T.copy()
    center = take(M)
    best_lower, rtol = take(2)
    if problem is not None:
        cfg = problem.config
        if (cfg.L, cfg.D, cfg.M) != (L, D, M):
            raise ValueError(f"checkpoint is for L={L}, D={D}, M={M}; config has "
                             f"L={cfg.L}, D={cfg.D}, M={cfg.M}")
        problem.rowspace_rtol = max(problem.rowspace_rtol, float(rtol))
    return McalState(
        n=n, pool=SparseState(weights, states), y=y, reserve=reserve,
        center=None if np.isnan(center).all() else center,
        best_lower=float(best_lower), **hist,
    )
