"""Command-line interface: ``mcal run | selftest | density | sdp``.

Heavy modules are imported inside the commands so that ``--threads`` can
cap the BLAS thread pools before numpy loads them.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

__all__ = ["main", "build_parser", "load_config_file", "read_summary", "SUMMARY_SCHEMA"]

SUMMARY_SCHEMA = 1

# flag name -> McalConfig field
_FLAG_FIELDS = {
    "L": "L", "D": "D", "M": "M", "qvec": "q_vec", "kernel": "kernel", "eps": "eps",
    "tol_sdp": "tol_sdp", "tol_stop": "tol_stop", "max_iters": "max_iters", "out": "out",
    "seed": "seed", "density_file": "density_file",
}
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

log = logging.getLogger("mcal")


class UsageError(Exception):
    pass


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _add_problem_flags(p):
    p.add_argument("--L", type=float, help="half-width of the box (-L, L)")
    p.add_argument("--D", type=int, help="number of finite elements")
    p.add_argument("--M", type=int, help="number of hat moment functions (>= 2)")


def build_parser():
    parser = argparse.ArgumentParser(prog="mcal", description="Moment-constrained Lieb functional by column generation.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the column-generation iteration")
    _add_problem_flags(run)
    run.add_argument("--qvec", type=int, help="eigenvectors added per iteration")
    run.add_argument("--kernel", choices=("softcore", "exact"))
    run.add_argument("--eps", type=float, help="softening length of the interaction")
    run.add_argument("--tol-sdp", type=float)
    run.add_argument("--tol-stop", type=float)
    run.add_argument("--max-iters", type=int)
    run.add_argument("--out", help="output directory (default: mcal_out)")
    run.add_argument("--config", help="plain key=value file; flags take precedence")
    run.add_argument("--seed", type=int)
    run.add_argument("--threads", type=_positive_int, help="cap on BLAS threads")
    run.add_argument("--density-file", help="target density: columns x rho, or D+1 nodal values")
    run.add_argument("--resume", help="checkpoint file to continue from")

    st = sub.add_parser("selftest", help="run a module's oracle checks")
    st.add_argument("kind", choices=("sdp", "eigen", "sparsify", "fem"))

    den = sub.add_parser("density", help="write the builtin target density and its moments")
    _add_problem_flags(den)
    den.add_argument("--out", help="output directory (default: mcal_density)")

    s = sub.add_parser("sdp", help="solve an SDP stored in the plain-text debug format")
    s.add_argument("file")
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--max-iter", type=int, default=200)
    return parser


def load_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys may use dashes."""
    from .driver import McalConfig

    names = {f for f in McalConfig.__dataclass_fields__}
    aliases = {k.replace("_", "-"): v for k, v in _FLAG_FIELDS.items()}
    aliases.update({k: v for k, v in _FLAG_FIELDS.items()})
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        name = aliases.get(key, key.replace("-", "_"))
        if name not in names:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[name] = value
    return out


def _coerce(config_cls, values):
    fields = config_cls.__dataclass_fields__
    out = {}
    for name, value in values.items():
        if value is None or not isinstance(value, str):
            out[name] = value
            continue
        kind = fields[name].type
        kind = kind if isinstance(kind, str) else kind.__name__
        try:
            out[name] = int(value) if kind == "int" else float(value) if kind == "float" else value
        except ValueError:
            raise UsageError(f"{name}: cannot parse {value!r} as {kind}") from None
    return out


def _make_config(args):
    from .driver import McalConfig

    values = load_config_file(args.config) if args.config else {}
    for flag, name in _FLAG_FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    values.setdefault("out", "mcal_out")
    try:
        return McalConfig(**_coerce(McalConfig, values))
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _write_csv(path, header, rows):
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row) + "\n")


def _jsonable(x):
    import numpy as np

    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


def read_summary(path):
    """Load ``summary.json``; unknown fields are kept, newer schemas rejected."""
    data = json.loads(Path(path).read_text())
    version = data.get("schema_version")
    if not isinstance(version, int) or version > SUMMARY_SCHEMA:
        raise ValueError(f"unsupported summary schema {version!r}")
    return data


def _write_artifacts(out, report, config, potentials, threads):
    import numpy as np

    problem = report.problem
    out.mkdir(parents=True, exist_ok=True)
    rows = [(int(n), float(F), float(Ft), float(E), int(K), float(g), float(lo))
            for n, F, Ft, E, K, g, lo in report.history]
    _write_csv(out / "iterations.csv",
               ("n", "F_n", "Ftilde_n", "E_vn", "K_n", "sdp_gap", "lower_bound"), rows)

    nodes = problem.family.nodes
    _write_csv(out / "potential_final.csv", ("x", "v"),
               [(float(x), float(v)) for x, v in zip(nodes, report.y)])
    _write_csv(out / "potentials.csv", ("n", "x", "v"),
               [(n, float(x), float(v)) for n, y in potentials for x, v in zip(nodes, y)])

    x = problem.mesh.nodes
    _write_csv(out / "density.csv", ("x", "rho_target", "rho_gamma"),
               [(float(a), float(b), float(c))
                for a, b, c in zip(x, problem.target.rho.nodal_values(), report.rho_gamma.nodal_values())])

    summary = {
        "schema_version": SUMMARY_SCHEMA,
        "config": config.as_dict(),
        "status": report.status,
        "partial": report.status == "failed",
        "message": report.message,
        "iterations": report.n_iter,
        "bracket": {"lower": report.lower, "upper": report.Ftilde, "width": report.width},
        "final_K": report.state.K,
        "max_moment_residual": float(np.max(report.moment_residuals)),
        "violations": report.violations,
        "target": problem.target.source,
        "wall_time": report.wall_time,
        "seed": config.seed,
        "threads": threads,
    }
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2) + "\n")


def cmd_run(args):
    if args.threads:
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    config = _make_config(args)
    from .driver import run, save_checkpoint

    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    potentials = []

    def checkpoint(problem, state):
        potentials.append((state.n, state.y.copy()))
        save_checkpoint(out / "checkpoint.bin", problem, state)

    report = run(config, resume=args.resume, callback=checkpoint)
    state = report.final_state
    if not potentials or potentials[-1][0] != state.n:
        if state.n > 0:
            potentials.append((state.n, report.y))
    save_checkpoint(out / "checkpoint.bin", report.problem, state)
    _write_artifacts(out, report, config, potentials, args.threads)
    print(f"status {report.status} after {report.n_iter} iterations")
    print(f"bracket [{report.lower:.12g}, {report.Ftilde:.12g}]  width {report.width:.3e}  K {report.state.K}")
    if report.message:
        print(report.message, file=sys.stderr)
    print(f"artifacts in {out}")
    return 1 if report.status == "failed" else 0


def cmd_selftest(args):
    from .selftest import run_suite

    checks = run_suite(args.kind)
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<{width}}  {c.detail}")
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


def cmd_density(args):
    from .driver import McalConfig, McalProblem

    values = {k: getattr(args, k) for k in ("L", "D", "M") if getattr(args, k) is not None}
    try:
        config = McalConfig(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    problem = McalProblem(config)
    out = Path(args.out or "mcal_density")
    out.mkdir(parents=True, exist_ok=True)
    x = problem.mesh.nodes
    _write_csv(out / "density.csv", ("x", "rho"),
               [(float(a), float(r)) for a, r in zip(x, problem.target.rho.nodal_values())])
    _write_csv(out / "moments.csv", ("m", "x_m", "b_m"),
               [(m, float(xm), float(bm)) for m, (xm, bm) in enumerate(zip(problem.family.nodes, problem.b))])
    print(f"sum of moments {problem.b.sum():.15g}; integral {problem.target.integral():.15g}")
    print(f"written to {out}")
    return 0


def cmd_sdp(args):
    from . import sdp

    problem = sdp.read_problem(args.file)
    sol = sdp.solve(problem, tol=args.tol, max_iter=args.max_iter)
    print(f"status          {sol.status}")
    print(f"iterations      {sol.iterations}")
    print(f"primal value    {sol.primal_value:.17g}")
    print(f"dual value      {sol.dual_value:.17g}")
    print(f"relative gap    {sol.info['relative_gap']:.3e}")
    print(f"primal residual {sol.primal_residual:.3e}")
    print(f"dual residual   {sol.dual_residual:.3e}")
    print("y " + " ".join(f"{v:.17g}" for v in sol.y))
    return 0 if sol.optimal else 1


_COMMANDS = {"run": cmd_run, "selftest": cmd_selftest, "density": cmd_density, "sdp": cmd_sdp}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (OSError, ValueError) as exc:
        print(f"mcal: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
