"""Command line entry point.

Every subcommand reads tensors from container files, writes results only
under its --out prefix, and is bitwise reproducible given identical
arguments. Diagnostics go to stderr; the only stdout output is the rank
query. Exit codes: 0 success, 1 usage error, 2 input or format error,
3 solver non-convergence, 4 bound or assertion violation.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import caratheodory, compressor, network, oracle, solver, trainer
from .container import ContainerError, export_csv, read_container, write_container
from .linalg import NonFiniteError, ShapeError, numerical_rank
from .solver import ConstrainedSolveError, InfeasibleError, SolverConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NOCONV = 3
EXIT_BOUND = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _tensor_ref(ref: str):
    """Parse container:tensor references like model:phi."""
    if ":" not in ref:
        raise UsageError(f"expected <container>:<tensor>, got {ref!r}")
    path, name = ref.rsplit(":", 1)
    return path, name


def _load_tensor(ref: str) -> np.ndarray:
    path, name = _tensor_ref(ref)
    return read_container(path).get(name)


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _solver_config(args) -> SolverConfig:
    kwargs = {}
    if getattr(args, "max_iters", None):
        kwargs["max_iters"] = args.max_iters
    if getattr(args, "feas_tol", None):
        kwargs["feas_tol"] = args.feas_tol
    return SolverConfig(**kwargs)


def build_parser() -> _Parser:
    p = _Parser(prog="mtlasso", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve a multi-task lasso instance")
    sp.add_argument("--phi", required=True, help="<container>:<tensor> for the K x N features")
    sp.add_argument("--psi", required=True, help="<container>:<tensor> for the D x N targets")
    sp.add_argument("--lambda", dest="lam", type=float, default=0.0)
    sp.add_argument("--constrained", action="store_true")
    sp.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    sp.add_argument("--feas-tol", dest="feas_tol", type=float, default=None)
    sp.add_argument("--out", required=True)

    rp = sub.add_parser("reduce", help="reduce a feasible solution's support")
    rp.add_argument("--phi", required=True)
    rp.add_argument("--psi", required=True)
    rp.add_argument("--v", required=True)
    rp.add_argument("--tol", type=float, default=1e-8)
    rp.add_argument("--out", required=True)

    op = sub.add_parser("oracle", help="exhaustive support search on a random instance")
    op.add_argument("--D", type=int, required=True)
    op.add_argument("--N", type=int, required=True)
    op.add_argument("--K", type=int, required=True)
    op.add_argument("--rank-phi", dest="rank_phi", type=int, required=True)
    op.add_argument("--rank-psi", dest="rank_psi", type=int, required=True)
    op.add_argument("--seed", type=int, required=True)
    op.add_argument("--out", required=True)

    ep = sub.add_parser("experiment", help="randomized support-size histograms")
    esub = ep.add_subparsers(dest="experiment", required=True)
    for name in ("lasso-hist", "exhaustive-hist"):
        e = esub.add_parser(name)
        e.add_argument("--D", type=int, required=True)
        e.add_argument("--N", type=int, required=True)
        e.add_argument("--K", type=int, required=True)
        e.add_argument("--rank-phi", dest="rank_phi", type=int, default=None)
        e.add_argument("--rank-psi", dest="rank_psi", type=int, default=None)
        e.add_argument("--trials", type=int, required=True)
        e.add_argument("--seed", type=int, required=True)
        e.add_argument("--threads", type=int, default=1)
        e.add_argument("--out", required=True)

    tp = sub.add_parser("train", help="train a shallow network on teacher data")
    tp.add_argument("--reg", choices=["wd", "l1", "none"], required=True)
    tp.add_argument("--lambda", dest="lam", type=float, default=0.0)
    tp.add_argument("--iters", type=int, default=200_000)
    tp.add_argument("--lr", type=float, default=2e-3)
    tp.add_argument("--width", type=int, default=150)
    tp.add_argument("--seed", type=int, required=True)
    tp.add_argument("--out", required=True)

    mp = sub.add_parser("train-mlp", help="train a stacked ReLU network on a blob dataset")
    mp.add_argument("--widths", default="256,256", help="hidden widths, comma separated")
    mp.add_argument("--classes", type=int, default=10)
    mp.add_argument("--samples", type=int, default=2000)
    mp.add_argument("--features", type=int, default=20)
    mp.add_argument("--lambda", dest="lam", type=float, default=1e-4)
    mp.add_argument("--iters", type=int, default=2000)
    mp.add_argument("--lr", type=float, default=1e-3)
    mp.add_argument("--seed", type=int, required=True)
    mp.add_argument("--out", required=True)

    cp = sub.add_parser("compress", help="compress hidden layers of a trained network")
    cp.add_argument("--model", required=True, help="container path prefix")
    cp.add_argument("--data", required=True, help="container path prefix with tensors X, Y")
    cp.add_argument("--lambda", dest="lam", type=float, required=True)
    cp.add_argument("--rank-threshold", dest="rank_threshold", type=float, default=1e-3)
    cp.add_argument("--layers", default=None, help="unit indices, comma separated; default all")
    cp.add_argument("--exact", action="store_true",
                    help="zero-residual route: constrained solve plus reduction")
    cp.add_argument("--out", required=True)

    kp = sub.add_parser("rank", help="numerical rank of a stored tensor")
    kp.add_argument("--tensor", required=True, help="<container>:<tensor>")
    kp.add_argument("--threshold", type=float, default=1e-3)
    kp.add_argument("--relative", action="store_true")
    return p


def _cmd_solve(args) -> int:
    phi = _load_tensor(args.phi)
    psi = _load_tensor(args.psi)
    config = _solver_config(args)
    if args.constrained:
        problem = solver.MtlProblem(phi=phi, psi=psi)
        sol = solver.solve_constrained(problem, config)
    else:
        if args.lam <= 0:
            raise UsageError("--lambda must be positive without --constrained")
        problem = solver.MtlProblem(phi=phi, psi=psi, lam=args.lam)
        sol = solver.solve_regularized(problem, config)
    write_container(args.out, {"v": sol.v})
    _write_json(args.out + ".report.json", {
        "constrained": bool(args.constrained),
        "converged": sol.converged,
        "iterations": sol.iterations,
        "kkt_residual": sol.kkt_residual,
        "lambda": args.lam,
        "objective": sol.objective,
        "support": list(sol.support),
    })
    if not sol.converged:
        return EXIT_NOCONV
    return EXIT_OK


def _cmd_reduce(args) -> int:
    phi = _load_tensor(args.phi)
    psi = _load_tensor(args.psi)
    v = _load_tensor(args.v)
    reduced, trace = caratheodory.reduce(phi, psi, v, tol=args.tol)
    write_container(args.out, {"v": reduced})
    _write_json(args.out + ".trace.json", {
        "eliminations": [[k, r] for k, r in trace.eliminations],
        "feasibility_residual": trace.feasibility_residual,
        "final_support": trace.final_support,
        "initial_support": trace.initial_support,
        "objective_after": trace.objective_after,
        "objective_before": trace.objective_before,
        "r_phi": trace.r_phi,
        "r_psi": trace.r_psi,
    })
    return EXIT_OK


def _cmd_oracle(args) -> int:
    spec = oracle.InstanceSpec(D=args.D, N=args.N, K=args.K, rank_phi=args.rank_phi,
                               rank_psi=args.rank_psi, seed=args.seed)
    phi, psi = oracle.random_instance(spec)
    result = oracle.exhaustive_min_support(phi, psi)
    _write_json(args.out + ".result.json", {
        "evaluated_patterns": result.evaluated_patterns,
        "failed_patterns": [list(p) for p in result.failed_patterns],
        "feasible_patterns": result.feasible_patterns,
        "min_support_size": result.min_support_size,
        "optimal_objective": result.optimal_objective,
        "optimal_supports": [list(p) for p in result.optimal_supports],
    })
    return EXIT_OK


def _cmd_experiment(args) -> int:
    rank_phi = args.rank_phi if args.rank_phi is not None else min(args.K, args.N)
    rank_psi = args.rank_psi if args.rank_psi is not None else min(args.D, args.N)
    spec = oracle.InstanceSpec(D=args.D, N=args.N, K=args.K, rank_phi=rank_phi,
                               rank_psi=rank_psi, seed=args.seed)
    mode = "solver" if args.experiment == "lasso-hist" else "exhaustive"
    result = oracle.histogram_experiment(spec, trials=args.trials, mode=mode,
                                         threads=args.threads)
    export_csv(args.out + ".csv", ["support_size", "count"], result.rows())
    _write_json(args.out + ".json", {
        "bounds": {"lower": result.lower, "upper": result.upper},
        "failures": result.failures,
        "mode": mode,
        "spec": {"D": spec.D, "K": spec.K, "N": spec.N, "rank_phi": spec.rank_phi,
                 "rank_psi": spec.rank_psi, "seed": spec.seed},
        "trials": result.trials,
    })
    sizes = result.support_sizes
    if sizes and (min(sizes) < result.lower or max(sizes) > result.upper):
        print(f"warning: observed support sizes [{min(sizes)}, {max(sizes)}] exceed "
              f"the theoretical bounds [{result.lower}, {result.upper}]", file=sys.stderr)
        return EXIT_BOUND
    return EXIT_OK


def _cmd_train(args) -> int:
    reg = {"wd": "weight_decay", "l1": "l1", "none": "none"}[args.reg]
    spec = trainer.TeacherSpec(seed=args.seed)
    xs, ys, _teacher = trainer.generate_teacher_data(spec)
    student = trainer.init_student(spec.d, spec.D, args.width, args.seed)
    config = trainer.TrainConfig(reg=reg, lam=args.lam, lr=args.lr, iters=args.iters,
                                 seed=args.seed)
    net, trace = trainer.train(student, xs, ys, config)
    write_container(args.out, {"W": net.W, "V": net.V},
                    meta={"activation": net.activation.tag()})
    coords = trainer.neuron_coordinates(net)
    export_csv(args.out + ".neurons.csv",
               ["theta", "b", "v_norm", "v1", "v2", "v3"],
               [[t, b, n, m[0], m[1], m[2]] for t, b, n, m in coords])
    export_csv(args.out + ".trace.csv", ["iter", "objective"],
               [[it, obj] for it, obj in trace])
    count, _ = trainer.active_neurons(net)
    print(f"active neurons: {count} of {args.width}", file=sys.stderr)
    return EXIT_OK


def _cmd_train_mlp(args) -> int:
    widths = [int(w) for w in args.widths.split(",") if w]
    if not widths:
        raise UsageError("--widths must list at least one hidden width")
    X, Y = network.make_blob_dataset(args.seed, args.samples, args.features, args.classes)
    net = network.init_network([args.features] + widths, args.classes, args.seed)
    net, trace = network.train_network(net, X, Y, lam=args.lam, lr=args.lr, iters=args.iters)
    network.network_to_container(args.out, net)
    write_container(args.out + ".data", {"X": X, "Y": Y})
    export_csv(args.out + ".trace.csv", ["iter", "objective"],
               [[it, obj] for it, obj in trace])
    return EXIT_OK


def _cmd_compress(args) -> int:
    model = network.network_from_container(read_container(args.model))
    data = read_container(args.data)
    X = np.asarray(data.get("X"))
    units = None
    if args.layers:
        units = [int(t) for t in args.layers.split(",") if t]
    compressed, reports = compressor.compress_network(
        model, X, [args.lam], rank_threshold=args.rank_threshold, units=units,
        exact=args.exact)
    network.network_to_container(args.out, compressed)
    Y = np.asarray(data.get("Y")) if "Y" in data.names() else None
    payload = {"layers": {str(i): r.to_dict() for i, r in reports.items()}}
    out_before = model.forward(X)
    out_after = compressed.forward(X)
    denom = max(float(np.linalg.norm(out_before)), 1e-300)
    payload["output_residual"] = float(np.linalg.norm(out_after - out_before)) / denom
    payload["weight_sq_before"] = model.weight_sq_sum()
    payload["weight_sq_after"] = compressed.weight_sq_sum()
    if Y is not None:
        payload["loss_before"] = float(np.sum((out_before - Y) ** 2))
        payload["loss_after"] = float(np.sum((out_after - Y) ** 2))
    _write_json(args.out + ".report.json", payload)
    return EXIT_OK


def _cmd_rank(args) -> int:
    tensor = _load_tensor(args.tensor)
    report = numerical_rank(tensor, args.threshold, relative=args.relative)
    print(report.rank)
    return EXIT_OK


_HANDLERS = {
    "solve": _cmd_solve,
    "reduce": _cmd_reduce,
    "oracle": _cmd_oracle,
    "experiment": _cmd_experiment,
    "train": _cmd_train,
    "train-mlp": _cmd_train_mlp,
    "compress": _cmd_compress,
    "rank": _cmd_rank,
}


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContainerError, ShapeError, NonFiniteError, InfeasibleError, ValueError,
            KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConstrainedSolveError, caratheodory.ReductionError, oracle.ExperimentError,
            trainer.TrainingDivergedError, solver.SolverDivergedError, RuntimeError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
