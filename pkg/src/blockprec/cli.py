"""Command-line experiment runner.

Subcommands: ``gen`` (synthetic curvature matrices), ``spectral``
(eigenvalue distributions and repartitioning estimates), ``solve``
(preconditioned descent runs with convergence traces), ``sweep``
(closed-form rate grids). Every subcommand is deterministic given its
flags; all randomness derives from the mandatory --seed. Emitted CSV
files start with a provenance comment carrying the full invocation.

Exit codes: 0 success, 2 invalid arguments, 3 numerical failure,
4 I/O or parse error.
"""

import argparse
import json
import os
import shlex
import sys

import numpy as np

from . import data, objectives, solver, spectral
from .errors import (
    BlockprecError,
    DivergenceError,
    EnumerationCapError,
    InvalidArgumentError,
    LibsvmParseError,
    LineSearchError,
    SingularBlockError,
    UnsupportedLossError,
)
from .seeding import derive_seed

THREADS_ENV = "BLOCKPREC_THREADS"

# Seed-derivation tags, one namespace per purpose.
_TAG_LABELS = 101
_TAG_LINEAR = 102


def _add_common(p, needs_seed=True):
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                   help="base seed; mandatory, there is no wall-clock seeding"
                   if needs_seed else "ignored (kept for config-file symmetry)")
    p.add_argument("--out", type=str, default=argparse.SUPPRESS,
                   help="output path prefix")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                   help=f"worker threads (default: ${THREADS_ENV} or 1)")
    p.add_argument("--config", type=str, default=argparse.SUPPRESS,
                   help="JSON file supplying any flag; explicit flags override it")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="blockprec",
        description="Block-diagonal preconditioned descent and its spectral analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic curvature matrix")
    p.add_argument("--kind", choices=["uniform", "separable", "randomcorr"],
                   default=argparse.SUPPRESS)
    p.add_argument("--n", type=int, default=argparse.SUPPRESS)
    p.add_argument("--k", type=int, default=argparse.SUPPRESS,
                   help="number of blocks (separable kind only)")
    p.add_argument("--alpha", type=float, default=argparse.SUPPRESS)
    p.add_argument("--factor", action="store_true", default=argparse.SUPPRESS,
                   help="also write the symmetric square root A with A^T A = Q")
    _add_common(p)

    p = sub.add_parser("spectral", help="eigenvalue distribution across partitionings")
    p.add_argument("--q", type=str, default=argparse.SUPPRESS,
                   help="matrix file written by gen")
    p.add_argument("--dataset", type=str, default=argparse.SUPPRESS,
                   help="LIBSVM file; uses Q = A^T A + lambda-reg I")
    p.add_argument("--k", type=int, default=argparse.SUPPRESS)
    p.add_argument("--samples", type=int, default=argparse.SUPPRESS)
    p.add_argument("--exact", action="store_true", default=argparse.SUPPRESS,
                   help="enumerate all partitionings instead of sampling")
    p.add_argument("--closed-form", action="store_true", default=argparse.SUPPRESS,
                   help="include closed-form values (uniform-kind matrices only)")
    p.add_argument("--lambda-reg", type=float, default=argparse.SUPPRESS)
    p.add_argument("--normalize", action="store_true", default=argparse.SUPPRESS,
                   help="scale dataset columns to unit L2 norm first")
    _add_common(p)

    p = sub.add_parser("solve", help="run preconditioned descent and emit traces")
    p.add_argument("--objective", choices=["quadratic", "ridge", "logistic"],
                   default=argparse.SUPPRESS)
    p.add_argument("--q", type=str, default=argparse.SUPPRESS)
    p.add_argument("--dataset", type=str, default=argparse.SUPPRESS)
    p.add_argument("--k", type=int, default=argparse.SUPPRESS)
    p.add_argument("--scheme", choices=["static", "dynamic", "both"],
                   default=argparse.SUPPRESS)
    p.add_argument("--model", choices=list(objectives.CURVATURE_MODELS),
                   default=argparse.SUPPRESS)
    p.add_argument("--step", choices=["fixed", "armijo"], default=argparse.SUPPRESS)
    p.add_argument("--eta", type=float, default=argparse.SUPPRESS,
                   help="fixed step size (default 1/K)")
    p.add_argument("--c1", type=float, default=argparse.SUPPRESS)
    p.add_argument("--shrink", type=float, default=argparse.SUPPRESS)
    p.add_argument("--max-backtracks", type=int, default=argparse.SUPPRESS)
    p.add_argument("--t", type=int, default=argparse.SUPPRESS, help="iteration budget")
    p.add_argument("--repeats", type=int, default=argparse.SUPPRESS)
    p.add_argument("--reg", type=float, default=argparse.SUPPRESS,
                   help="L2 regularization weight lambda")
    p.add_argument("--jitter", type=float, default=argparse.SUPPRESS,
                   help="diagonal jitter added to blocks before factorization")
    p.add_argument("--normalize", action="store_true", default=argparse.SUPPRESS,
                   help="scale dataset columns to unit L2 norm first")
    _add_common(p)

    p = sub.add_parser("sweep", help="closed-form rates over a (K, alpha) grid")
    p.add_argument("--n", type=int, default=argparse.SUPPRESS)
    p.add_argument("--k-grid", type=str, default=argparse.SUPPRESS,
                   help="comma-separated block counts, each dividing n")
    p.add_argument("--alpha-grid", type=str, default=argparse.SUPPRESS,
                   help="comma-separated correlation strengths in [0, 1)")
    _add_common(p, needs_seed=False)

    return parser


_DEFAULTS = {
    "gen": {"kind": None, "n": None, "k": None, "alpha": None, "factor": False},
    "spectral": {"q": None, "dataset": None, "k": None, "samples": 1000,
                 "exact": False, "closed_form": False, "lambda_reg": 1.0,
                 "normalize": False},
    "solve": {"objective": None, "q": None, "dataset": None, "k": None,
              "scheme": "both", "model": objectives.EXACT_HESSIAN,
              "step": "fixed", "eta": None, "c1": 0.3, "shrink": 0.5,
              "max_backtracks": 50, "t": 50, "repeats": 1, "reg": 0.0,
              "jitter": 0.0, "normalize": False},
    "sweep": {"n": None, "k_grid": None, "alpha_grid": None},
}

_COMMON_DEFAULTS = {"seed": None, "out": None, "threads": None, "config": None}


def _merge_config(args):
    """Fill unset flags from --config JSON, then from hard defaults."""
    ns = vars(args)
    merged = dict(_DEFAULTS[args.command])
    merged.update(_COMMON_DEFAULTS)
    config_path = ns.get("config")
    if config_path is not None:
        with open(config_path, "r", encoding="utf-8") as fh:
            try:
                loaded = json.load(fh)
            except json.JSONDecodeError as exc:
                raise LibsvmParseError(f"bad JSON config {config_path}: {exc}") from None
        for key, value in loaded.items():
            key = key.replace("-", "_")
            if key not in merged:
                raise InvalidArgumentError(
                    f"config key {key!r} is not a flag of the {args.command} subcommand")
            merged[key] = value
    merged.update({k: v for k, v in ns.items() if k != "command"})
    merged["command"] = args.command
    return argparse.Namespace(**merged)


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            flag = "--" + name.replace("_", "-")
            raise InvalidArgumentError(f"{flag} is required for '{args.command}'")


def _threads(args):
    if args.threads is not None:
        value = args.threads
    else:
        value = int(os.environ.get(THREADS_ENV, "1"))
    if value < 1:
        raise InvalidArgumentError(f"threads must be positive, got {value}")
    return value


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _invocation(argv):
    return "blockprec " + shlex.join(argv)


def cmd_gen(args, argv):
    _require(args, "kind", "n", "alpha", "out", "seed")
    meta = {"kind": args.kind, "n": args.n, "alpha": args.alpha,
            "seed": args.seed, "invocation": _invocation(argv)}
    if args.kind == "uniform":
        q = data.gen_uniform_q(args.n, args.alpha)
    elif args.kind == "separable":
        _require(args, "k")
        q = data.gen_separable_q(args.n, args.k, args.alpha)
        meta["k"] = args.k
    else:
        q = data.gen_random_corr_q(args.n, args.alpha, args.seed)
        meta["note"] = ("off-diagonals ~ N(alpha, (alpha/2)^2); shifted and rescaled "
                        "to unit diagonal if the raw draw was not SPD")
    _ensure_parent(args.out)
    data.save_q(args.out + ".q", q, meta)
    if args.factor:
        a = data.factor_sqrt(q)
        data.save_q(args.out + ".a", a, {**meta, "content": "symmetric square root of Q"})
    return 0


def _load_spectral_matrix(args):
    if (args.q is None) == (args.dataset is None):
        raise InvalidArgumentError("exactly one of --q or --dataset is required")
    if args.q is not None:
        q, meta = data.load_q(args.q)
        return q, meta
    ds = data.read_libsvm(args.dataset)
    if args.normalize:
        ds = data.normalize_columns(ds)
    gram = ds.a.T @ ds.a
    gram = np.asarray(gram.todense() if hasattr(gram, "todense") else gram, dtype=float)
    gram = 0.5 * (gram + gram.T)
    q = gram + args.lambda_reg * np.eye(ds.n_features)
    return q, {"kind": "dataset", "path": args.dataset, "lambda_reg": args.lambda_reg}


def cmd_spectral(args, argv):
    _require(args, "k", "out", "seed")
    q, meta = _load_spectral_matrix(args)
    closed = None
    if args.closed_form:
        if not meta or meta.get("kind") != "uniform":
            raise InvalidArgumentError(
                "--closed-form needs a matrix generated with 'gen --kind uniform'")
        closed = spectral.uniform_closed_form(q.shape[0], args.k, float(meta["alpha"]))
    report = spectral.build_report(q, args.k, n_samples=args.samples, seed=args.seed,
                                   exact=args.exact, closed_form=closed,
                                   threads=_threads(args))
    _ensure_parent(args.out)
    with open(args.out + ".json", "w", encoding="ascii") as fh:
        report.write_json(fh)
    with open(args.out + "_samples.csv", "w", encoding="ascii") as fh:
        report.write_samples_csv(fh, comment=_invocation(argv))
    return 0


def _build_objective(args):
    if (args.q is None) == (args.dataset is None):
        raise InvalidArgumentError("exactly one of --q or --dataset is required")
    label_seed = derive_seed(args.seed, _TAG_LABELS)
    if args.q is not None:
        q, _ = data.load_q(args.q)
        if args.objective == "quadratic":
            rng = np.random.default_rng(derive_seed(args.seed, _TAG_LINEAR))
            return objectives.Quadratic(q, rng.standard_normal(q.shape[0]))
        a = data.factor_sqrt(q)
        y = data.gen_labels(a, "gaussian", label_seed)
        if args.objective == "logistic":
            y = np.where(y >= 0.0, 1.0, -1.0)
            return objectives.logistic(a, y, args.reg)
        return objectives.ridge(a, y, args.reg)
    if args.objective == "quadratic":
        raise InvalidArgumentError("the quadratic objective needs --q, not --dataset")
    ds = data.read_libsvm(args.dataset, logistic_labels=args.objective == "logistic")
    if args.normalize:
        ds = data.normalize_columns(ds)
    if args.objective == "logistic":
        return objectives.logistic(ds.a, ds.y, args.reg, name=ds.name)
    return objectives.ridge(ds.a, ds.y, args.reg, name=ds.name)


def _write_scheme_outputs(out, scheme, config, traces, invocation):
    with open(f"{out}_{scheme}_runs.csv", "w", encoding="ascii") as fh:
        solver.write_traces_csv(fh, traces, comment=invocation)
    with open(f"{out}_{scheme}.json", "w", encoding="ascii") as fh:
        solver.write_traces_json(fh, config, traces)
    if not traces:
        return
    horizon = min(len(t) for t in traces)
    subopts = np.array([t.subopts[:horizon] for t in traces])
    with open(f"{out}_{scheme}_agg.csv", "w", encoding="ascii") as fh:
        fh.write(f"# {invocation}\n")
        fh.write("t,subopt_min,subopt_median,subopt_max\n")
        lo = subopts.min(axis=0)
        med = np.median(subopts, axis=0)
        hi = subopts.max(axis=0)
        for t in range(horizon):
            fh.write(f"{t},{float(lo[t])!r},{float(med[t])!r},{float(hi[t])!r}\n")


def cmd_solve(args, argv):
    _require(args, "objective", "k", "out", "seed")
    obj = _build_objective(args)
    if args.step == "fixed":
        step = solver.FixedStep(args.eta)
    else:
        step = solver.ArmijoStep(args.c1, args.shrink, args.max_backtracks)
    schemes = [args.scheme] if args.scheme in (solver.STATIC, solver.DYNAMIC) \
        else [solver.STATIC, solver.DYNAMIC]
    threads = _threads(args)
    invocation = _invocation(argv)
    _ensure_parent(args.out)
    for scheme in schemes:
        config = solver.SolverConfig(
            k_blocks=args.k, scheme=scheme, seed=args.seed, n_iters=args.t,
            model=args.model, step=step, repeats=args.repeats, jitter=args.jitter)
        try:
            traces = solver.run_repeats(obj, config, threads=threads)
        except DivergenceError as exc:
            if exc.trace is not None:
                _write_scheme_outputs(args.out, scheme, config, [exc.trace], invocation)
            raise
        _write_scheme_outputs(args.out, scheme, config, traces, invocation)
    return 0


def _parse_grid(text, kind, convert):
    try:
        values = [convert(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise InvalidArgumentError(f"bad {kind} grid {text!r}") from None
    if not values:
        raise InvalidArgumentError(f"empty {kind} grid")
    return values


def cmd_sweep(args, argv):
    _require(args, "n", "k_grid", "alpha_grid", "out")
    ks = _parse_grid(args.k_grid, "K", int)
    alphas = _parse_grid(args.alpha_grid, "alpha", float)
    for k in ks:
        if k < 1 or args.n % k != 0:
            raise InvalidArgumentError(f"grid K={k} does not divide n={args.n}")
    for alpha in alphas:
        if not 0.0 <= alpha < 1.0:
            raise InvalidArgumentError(f"grid alpha={alpha} outside [0, 1)")
    _ensure_parent(args.out)
    with open(args.out, "w", encoding="ascii") as fh:
        fh.write(f"# {_invocation(argv)}\n")
        fh.write("n,K,alpha,epsilon,rho_static,rho_dynamic\n")
        for k in ks:
            for alpha in alphas:
                form = spectral.uniform_closed_form(args.n, k, alpha)
                fh.write(f"{args.n},{k},{alpha!r},{form.epsilon!r},"
                         f"{form.rho_static!r},{form.rho_dynamic!r}\n")
    return 0


_COMMANDS = {"gen": cmd_gen, "spectral": cmd_spectral, "solve": cmd_solve,
             "sweep": cmd_sweep}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args)
        return _COMMANDS[args.command](args, argv)
    except (SingularBlockError, DivergenceError, LineSearchError) as exc:
        print(f"blockprec: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (LibsvmParseError, UnicodeDecodeError) as exc:
        print(f"blockprec: parse error: {exc}", file=sys.stderr)
        return 4
    except (InvalidArgumentError, UnsupportedLossError, EnumerationCapError) as exc:
        print(f"blockprec: invalid arguments: {exc}", file=sys.stderr)
        return 2
    except BlockprecError as exc:
        print(f"blockprec: error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"blockprec: i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
