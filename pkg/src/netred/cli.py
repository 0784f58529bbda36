"""Command-line interface.

Subcommands: ``graph-info``, ``enumerate``, ``cluster``, ``simulate`` and
``repro``.  System files may be given by path or by the name of a bundled file
(``small_network``, ``vanderpol``).

Exit codes:

==  =====================================================
0   success
1   other runtime error (unsynchronized system, bad data)
2   usage or system-file parse error
3   exhaustive search exceeds the partition budget
4   invalid combination of reduction/clustering options
5   time integration failure
==  =====================================================
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from .graph import GraphError, build_matrices, is_connected
from .mas import MasError
from .nonlinear import INPUT_PRESETS, NonlinearError, simulate
from .numerics import IntegrationError, NumericsError, integrate_ode, sym_gen_eig
from .partition import count_partitions
from .search import (DEFAULT_BUDGET, BudgetExceeded, InvalidCombination, SearchError,
                     h2_error_stable, heuristic_pipeline, nonlinear_pipeline, partition_census)
from .sysfile import ParseError, format_number, load_system

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARSE = 2
EXIT_BUDGET = 3
EXIT_COMBINATION = 4
EXIT_INTEGRATION = 5

ERROR_SWEEP_DEFAULT = (2, 5, 10, 20, 30, 40, 50)
IRKA_SEEDS = (0, 1, 2, 3, 4)


def _num(x) -> str:
    return format_number(x)


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _input_callable(spec: str):
    """A preset name or an expression in ``t`` using numpy functions (``exp``, ``sin``, ...)."""
    if spec in INPUT_PRESETS:
        return INPUT_PRESETS[spec]
    namespace = {name: getattr(np, name) for name in dir(np) if not name.startswith("_")}
    try:
        code = compile(spec, "<input>", "eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse input expression {spec!r}: {exc.msg}") from None

    def u(t):
        return eval(code, {"__builtins__": {}}, dict(namespace, t=t))

    u(0.0)
    return u


def _initial_state(spec: str | None, size: int) -> np.ndarray | None:
    if spec is None:
        return None
    vals = np.array([float(v) for v in spec.split(",")])
    if vals.size == 1:
        return np.full(size, vals[0])
    if vals.size != size:
        raise ValueError(f"initial state needs 1 or {size} values, got {vals.size}")
    return vals


def _trajectory_rows(times, states, n):
    return [[_num(t)] + [_num(v) for v in x] for t, x in zip(times, states)]


def _state_header(n_agents, n):
    return ["t"] + [f"x_{i}_{j}" for i in range(1, n_agents + 1) for j in range(1, n + 1)]


# ---------------------------------------------------------------------------
# subcommands


def cmd_graph_info(args) -> int:
    sf = load_system(args.file)
    g = sf.graph()
    print(f"vertices: {g.n_vertices}")
    print(f"edges: {g.n_edges}")
    print(f"directed: {'true' if g.directed else 'false'}")
    if g.directed:
        print("connected: n/a (directed graph)")
        return EXIT_OK
    connected = is_connected(g)
    print(f"connected: {'true' if connected else 'false'}")
    lam = sym_gen_eig(build_matrices(g).laplacian, np.diag(sf.inertia_vector()))[0]
    if g.n_vertices > 1:
        print(f"lambda_2: {lam[1]:.10g}")
    print(f"lambda_n: {lam[-1]:.10g}")
    print(f"agent: {sf.agent[0]} (order {sf.agent_order})")
    return EXIT_OK


def cmd_enumerate(args) -> int:
    sf = load_system(args.file)
    if sf.is_nonlinear:
        raise InvalidCombination("exhaustive ranking requires a linear system")
    mas = sf.to_linear_mas()
    total = count_partitions(mas.n_agents, args.clusters)
    print(f"evaluating {total} partitions into {args.clusters} clusters ({args.metric})",
          file=sys.stderr)
    t0 = time.perf_counter()

    def progress(done, n_chunks):
        print(f"  chunk {done}/{n_chunks} ({time.perf_counter() - t0:.1f} s)", file=sys.stderr)

    census = partition_census(mas, args.clusters, args.metric, workers=args.workers,
                              budget=args.budget, checkpoint_dir=args.checkpoint_dir,
                              refine=max(args.top, 100), progress=progress)
    ranked = census.ranked(args.top)
    rows = [[rp.rank, f"{rp.relative_error:.6f}", str(rp.partition)] for rp in ranked]
    if args.out:
        _write_csv(args.out, ["rank", "rel_error", "partition"], rows)
    for rank, err, part in rows:
        print(f"{rank:>3}  {err}  {part}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    sf = load_system(args.file)
    order = args.clusters if args.order is None else args.order
    if sf.is_nonlinear:
        if args.mor != "pod":
            raise InvalidCombination(f"reduction method {args.mor!r} is not available for "
                                     "nonlinear systems; use --mor pod")
        if args.basis != "v":
            raise InvalidCombination("POD yields a single basis; --basis must be v")
        sysn = sf.to_nonlinear_mas()
        res = nonlinear_pipeline(sysn, args.clusters, order=order, algo=args.algo, seed=args.seed,
                                 n_init=args.n_init, train=args.train, test=args.test,
                                 t_span=tuple(args.tspan), samples=args.samples)
        print(f"partition: {res.partition}")
        print(f"snapshots: {res.n_snapshots}")
        print(f"relative L2 error: {res.relative_l2:.6e}")
        print(f"max pointwise error: {res.max_pointwise:.6e}")
        return EXIT_OK
    if args.mor == "pod":
        raise InvalidCombination("POD requires a nonlinear (simulated) system; "
                                 "use --mor irka or --mor bt")
    mas = sf.to_linear_mas()
    tables = None
    if args.rank:
        tables = {m: partition_census(mas, args.clusters, m, workers=args.workers)
                  for m in ("h2", "hinf")}
    res = heuristic_pipeline(mas, args.clusters, mor=args.mor, source=args.basis, algo=args.algo,
                             order=order, seed=args.seed, n_init=args.n_init, tables=tables)
    print(f"partition: {res.partition}")
    print(f"relative H2 error: {res.h2:.6f}")
    print(f"relative Hinf error: {res.hinf:.6f}")
    print(f"basis reduction H2 error: {res.basis_error:.6e}")
    if tables is not None:
        print(f"H2 rank: {res.h2_rank}")
        print(f"Hinf rank: {res.hinf_rank}")
    return EXIT_OK


def _simulate_linear(sf, u, t_span, times, x0_spec):
    mas = sf.to_linear_mas()
    real = mas.realize()
    x0 = _initial_state(x0_spec, real.order)
    x0 = np.zeros(real.order) if x0 is None else x0
    m = real.B.shape[1]

    def rhs(t, x):
        ut = np.broadcast_to(np.asarray(u(t), dtype=float), (m,))
        return real.A @ x + real.B @ ut

    sol = integrate_ode(rhs, x0, t_span, mass=real.E, jac=lambda t, x: real.A,
                        sample_times=times)
    return sol, mas.n_agents, mas.agent.n


def cmd_simulate(args) -> int:
    sf = load_system(args.file)
    t_span = tuple(args.tspan)
    times = np.linspace(t_span[0], t_span[1], args.samples)
    if args.error_sweep is not None:
        if not sf.is_nonlinear:
            raise InvalidCombination("the reduction error sweep requires a nonlinear system")
        sysn = sf.to_nonlinear_mas()
        test = _input_callable("test" if args.input is None else args.input)
        rows, sv = _error_sweep(sysn, args.error_sweep, args.order, args.seed, args.train,
                                test, t_span, args.samples)
        _write_csv(args.out, ["clusters", "rel_l2_error", "max_abs_error"], rows)
        if args.sv_out:
            _write_csv(args.sv_out, ["index", "sigma"],
                       [[k, _num(s)] for k, s in enumerate(sv, start=1)])
        for r, e, mx in rows:
            print(f"clusters {r:>3}: relative L2 error {float(e):.3e}, max error {float(mx):.3e}")
        return EXIT_OK
    u = _input_callable("train" if args.input is None else args.input)
    if sf.is_nonlinear:
        sysn = sf.to_nonlinear_mas()
        x0 = _initial_state(args.x0, sysn.order)
        sol = simulate(sysn, x0, u, t_span, times)
        n_agents, n = sysn.n_agents, sysn.n
        if args.sv_out:
            full = simulate(sysn, x0, u, t_span)
            sv = np.linalg.svd(full.snapshot_matrix(), compute_uv=False)
            _write_csv(args.sv_out, ["index", "sigma"],
                       [[k, _num(s)] for k, s in enumerate(sv, start=1)])
    else:
        sol, n_agents, n = _simulate_linear(sf, u, t_span, times, args.x0)
    _write_csv(args.out, _state_header(n_agents, n), _trajectory_rows(sol.times, sol.states, n))
    print(f"wrote {len(sol.times)} samples of {sol.states.shape[1]} states to {args.out}")
    print(f"max |state|: {np.abs(sol.states).max():.6g}")
    return EXIT_OK


def _error_sweep(sysn, clusters, order, seed, train, test, t_span, samples):
    train_sol = simulate(sysn, u=train, t_span=t_span)
    times = np.linspace(t_span[0], t_span[1], samples)
    ref = simulate(sysn, u=test, t_span=t_span, sample_times=times)
    rows, sv = [], None
    for r in clusters:
        res = nonlinear_pipeline(sysn, r, order=order, seed=seed, train=train, test=test,
                                 t_span=t_span, samples=samples, train_solution=train_sol,
                                 reference=ref)
        sv = res.singular_values
        rows.append([r, _num(res.relative_l2), _num(res.max_pointwise)])
    return rows, sv


def cmd_repro(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.experiment in ("small", "all"):
        _repro_small(out, args.workers)
    if args.experiment in ("vanderpol", "all"):
        _repro_vanderpol(out, args.seed)
    return EXIT_OK


def _repro_small(out: Path, workers):
    from .mor import irka
    from .stabsep import decompose_mas

    mas = load_system("small_network").to_linear_mas()
    tables = {}
    for metric in ("h2", "hinf"):
        t0 = time.perf_counter()
        census = partition_census(mas, 5, metric, workers=workers)
        tables[metric] = census
        rows = [[rp.rank, f"{rp.relative_error:.6f}", str(rp.partition)] for rp in census.ranked(15)]
        _write_csv(out / f"table_{metric}.csv", ["rank", "rel_error", "partition"], rows)
        print(f"[small] {metric}: best {rows[0][1]} {rows[0][2]} "
              f"({time.perf_counter() - t0:.1f} s) -> table_{metric}.csv")
    decomp = decompose_mas(mas)
    best_h2 = tables["h2"].ranked(1)[0].relative_error
    irka_rows = []
    for seed in IRKA_SEEDS:
        basis = irka(decomp.stable, 5, seed=seed)
        err = h2_error_stable(decomp.stable, basis.reduce(decomp.stable))
        irka_rows.append([seed, _num(err), _num(best_h2 / err), basis.iterations])
    _write_csv(out / "irka.csv", ["seed", "rel_h2_error", "best_partition_ratio", "iterations"],
               irka_rows)
    print(f"[small] irka: relative H2 error {float(irka_rows[0][1]):.6e} (seed 0) -> irka.csv")
    rows = []
    for mor in ("irka", "bt"):
        for source in ("v", "w", "vw"):
            for algo in ("qr", "kmeans"):
                seeds = IRKA_SEEDS if mor == "irka" else (0,)
                for seed in seeds:
                    res = heuristic_pipeline(mas, 5, mor, source, algo, seed=seed, tables=tables)
                    rows.append([mor, source, algo, seed, str(res.partition), f"{res.h2:.6f}",
                                 f"{res.hinf:.6f}", res.h2_rank, res.hinf_rank])
    _write_csv(out / "pipelines.csv", ["mor", "basis", "algo", "seed", "partition", "rel_h2",
                                       "rel_hinf", "h2_rank", "hinf_rank"], rows)
    print(f"[small] {len(rows)} pipeline runs -> pipelines.csv")


def _repro_vanderpol(out: Path, seed: int):
    sysn = load_system("vanderpol").to_nonlinear_mas()
    t_span = (0.0, 20.0)
    times = np.linspace(*t_span, 1000)
    train = simulate(sysn, u="train", t_span=t_span, sample_times=times)
    _write_csv(out / "vanderpol_train.csv", _state_header(sysn.n_agents, sysn.n),
               _trajectory_rows(train.times, train.states, sysn.n))
    X = train.states.reshape(len(times), sysn.n_agents, sysn.n)
    print(f"[vanderpol] training run: max |x1| {np.abs(X[..., 0]).max():.4f}, "
          f"max |x2| {np.abs(X[..., 1]).max():.4f} -> vanderpol_train.csv")
    rows, sv = _error_sweep(sysn, ERROR_SWEEP_DEFAULT, 2, seed, "train", "test", t_span, 1000)
    _write_csv(out / "vanderpol_error_sweep.csv", ["clusters", "rel_l2_error", "max_abs_error"],
               rows)
    _write_csv(out / "vanderpol_singular_values.csv", ["index", "sigma"],
               [[k, _num(s)] for k, s in enumerate(sv, start=1)])
    res = nonlinear_pipeline(sysn, 10, order=2, seed=seed, t_span=t_span)
    err = res.error
    _write_csv(out / "vanderpol_error_r10.csv", _state_header(sysn.n_agents, sysn.n),
               _trajectory_rows(err.times, err.error, sysn.n))
    print(f"[vanderpol] 10 clusters: {res.partition}")
    print(f"[vanderpol] 10 clusters: max pointwise error {res.max_pointwise:.4f}, "
          f"relative L2 error {res.relative_l2:.3e} -> vanderpol_error_r10.csv")
    print("[vanderpol] error sweep: " + ", ".join(f"{r}:{float(e):.2e}" for r, e, _ in rows))


# ---------------------------------------------------------------------------
# argument parsing


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netred", description=(
        "Clustering-based structure-preserving reduction of multi-agent network systems."))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("graph-info", help="summarize the graph of a system file")
    p.add_argument("file")
    p.set_defaults(func=cmd_graph_info)

    p = sub.add_parser("enumerate", help="rank all partitions by reduction error")
    p.add_argument("file")
    p.add_argument("--clusters", "-r", type=int, required=True)
    p.add_argument("--metric", choices=("h2", "hinf"), default="h2")
    p.add_argument("--top", type=int, default=15)
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $NETRED_WORKERS or 1)")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET,
                   help="maximum number of partitions to evaluate")
    p.add_argument("--checkpoint-dir", default=None)
    p.add_argument("--out", default=None, help="CSV file (rank,rel_error,partition)")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("cluster", help="cluster a reduced basis and report the partition")
    p.add_argument("file")
    p.add_argument("--mor", choices=("irka", "bt", "pod"), default="irka")
    p.add_argument("--order", type=int, default=None,
                   help="reduction order (default: number of clusters)")
    p.add_argument("--clusters", "-r", type=int, required=True)
    p.add_argument("--algo", choices=("qr", "kmeans"), default="kmeans")
    p.add_argument("--basis", choices=("v", "w", "vw"), default="v")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-init", type=int, default=50, help="k-means restarts")
    p.add_argument("--rank", action="store_true",
                   help="also rank the partition among all partitions (linear systems)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--train", default="train", help="training input for POD")
    p.add_argument("--test", default="test", help="test input for the error report")
    p.add_argument("--tspan", type=float, nargs=2, default=(0.0, 20.0), metavar=("A", "B"))
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("simulate", help="simulate a system and write its trajectory")
    p.add_argument("file")
    p.add_argument("--input", default=None,
                   help="preset (train, test) or an expression in t, e.g. 'exp(-t)*cos(t)'; "
                        "defaults to train, or to test for the error sweep")
    p.add_argument("--tspan", type=float, nargs=2, default=(0.0, 20.0), metavar=("A", "B"))
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--x0", default=None, help="initial state: one value or a comma list")
    p.add_argument("--out", required=True, help="CSV file")
    p.add_argument("--sv-out", default=None, help="CSV file for snapshot singular values")
    p.add_argument("--error-sweep", type=_int_list, default=None, metavar="R1,R2,...",
                   help="write reduced-vs-full errors for these cluster counts instead")
    p.add_argument("--order", type=int, default=2, help="POD order for the error sweep")
    p.add_argument("--train", default="train", help="training input for the error sweep")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("repro", help="run the bundled experiments end to end")
    p.add_argument("experiment", choices=("small", "vanderpol", "all"))
    p.add_argument("--out-dir", default="netred-results")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_repro)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except InvalidCombination as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMBINATION
    except IntegrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (SearchError, MasError, GraphError, NonlinearError, NumericsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
