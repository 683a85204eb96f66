"""Command-line driver: compile form files, run demos, convergence studies and benchmarks."""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import form_source
from .codegen import emit, write_kernels
from .compiler import compile_source
from .demos import PROBLEMS, RunManifest, convergence, rows_to_csv, run
from .errors import DGFCError
from .formlang import parse
from .formlang.syntax import Call
from .integration import IntegrationData, cell_data, pair_data
from .quadrep import model_costs, model_points, model_speedup
from .tensorrep import contraction_flops, kernel_keys

REFERENCE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
NEIGHBOUR = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])


def _mesh_arg(text):
    parts = [int(p) for p in text.split(",")]
    if len(parts) not in (1, 2) or min(parts) < 1:
        raise argparse.ArgumentTypeError("expected NX or NX,NY with positive integers")
    return tuple(parts)


def _int_list(text):
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def read_form(target: str) -> tuple:
    """A path to a form file or the name of a bundled form; returns (label, source)."""
    path = Path(target)
    if path.exists():
        return path.stem, path.read_text()
    try:
        return target, form_source(target)
    except (FileNotFoundError, ModuleNotFoundError):
        raise FileNotFoundError(f"no form file or bundled form named {target!r}")


def declared_elements(source: str) -> list:
    """Names bound directly to FiniteElement / VectorElement declarations."""
    names = []
    for stmt in parse(source).statements:
        if isinstance(stmt.value, Call) and stmt.value.func in ("FiniteElement", "VectorElement"):
            names.extend(stmt.targets)
    return names


def compile_with(source, degree=None, alpha=None, quadrature_degree=None):
    elements = {n: degree for n in declared_elements(source)} if degree else None
    constants = {"alpha": alpha} if alpha is not None else None
    return compile_source(source, elements, constants, quadrature_degree)


def sample_data(measure, key, batch=1) -> IntegrationData:
    """Synthetic geometry for one facet slot (only used to count and time kernels)."""
    cells = np.repeat(REFERENCE[None], batch, axis=0)
    if measure == "dx":
        return cell_data(cells)
    if measure == "ds":
        return cell_data(cells, key[0])
    return pair_data(cells, np.repeat(NEIGHBOUR[None], batch, axis=0), key[0], key[1],
                     {"+": np.ones(batch), "-": np.zeros(batch)})


def sample_coefficients(compiled, measure, batch=1, seed=0):
    rng = np.random.default_rng(seed)
    out = {}
    for name, el in sorted(compiled.coefficient_elements.items()):
        if measure == "dS":
            out[(name, "+")] = rng.normal(size=(batch, el.space_dim))
            out[(name, "-")] = rng.normal(size=(batch, el.space_dim))
        else:
            out[name] = rng.normal(size=(batch, el.space_dim))
    return out


def measured_flops(compiled, measure, key, mode) -> int:
    kernel = compiled.kernel(measure, key, mode)
    _, flops = kernel.evaluate(sample_data(measure, key), sample_coefficients(compiled, measure))
    return int(flops)


def compile_report(compiled_forms, modes) -> dict:
    report = {}
    for name, cf in compiled_forms.items():
        entry = {"rank": cf.rank, "measures": {}}
        for measure in cf.measures:
            slots = {}
            for key in kernel_keys(measure):
                slots[",".join(map(str, key)) or "cell"] = {
                    mode: measured_flops(cf, measure, key, mode) for mode in modes}
            entry["measures"][measure] = {"slots": len(slots), "flops": slots}
        report[name] = entry
    return report


def cmd_compile(args) -> int:
    label, source = read_form(args.form)
    forms = compile_with(source, args.degree, args.alpha)
    modes = ("tensor", "quadrature") if args.mode == "both" else (args.mode,)
    report = compile_report(forms, modes)
    for name, entry in report.items():
        print(f"form {name}: rank {entry['rank']}")
        for measure, m in entry["measures"].items():
            print(f"  {measure}: {m['slots']} kernel slot(s)")
            for slot, flops in m["flops"].items():
                counts = "  ".join(f"{mode}={f}" for mode, f in flops.items())
                print(f"    [{slot}] flops {counts}")
    if args.emit:
        out = Path(args.out or ".")
        written = []
        for name, cf in forms.items():
            for mode in modes:
                kernels = [replace(k, name=f"{label}_{k.name}") for k in emit(cf, mode)]
                written.extend(write_kernels(kernels, out))
        print(f"wrote {len(written)} kernel file(s) to {out}")
    return 0


def _manifest(args, resolutions) -> RunManifest:
    kw = dict(problem=args.problem, degree=args.degree, alpha=args.alpha, mode=args.mode,
              resolutions=resolutions, interpolation_degree=args.interpolation_degree, out=args.out)
    if args.kappa is not None:
        kw["kappa"] = args.kappa
    if args.b is not None:
        kw["b"] = tuple(float(x) for x in args.b.split(","))
    return RunManifest(**kw)


def cmd_demo(args) -> int:
    nx = args.mesh[0] if args.mesh else 8
    if args.mesh and len(args.mesh) == 2 and args.mesh[1] != args.mesh[0]:
        print("demos run on square meshes; using NX for both directions", file=sys.stderr)
    m = _manifest(args, (nx,))
    res = run(m, nx)
    out = {"problem": res.problem, "resolution": res.resolution, "h_max": res.h_max,
           "unknowns": res.dim, "residual": res.residual, "L2_error": res.L2_error,
           "seminorm_error": res.seminorm_error}
    for k, v in res.extra.items():
        if isinstance(v, (int, float)):
            out[k] = v
    out = {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in out.items()}
    text = json.dumps(out, indent=2)
    print(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / f"{res.problem}_demo.json").write_text(text + "\n")
    return 0


def cmd_convergence(args) -> int:
    resolutions = args.resolutions or (8, 16, 32)
    if len(resolutions) < 3:
        raise ValueError("a convergence study needs at least 3 resolutions")
    rows = convergence(_manifest(args, resolutions))
    text = rows_to_csv(rows)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / f"{args.problem}_convergence.csv").write_text(text)
    return 0


def time_kernel(kernel, compiled, measure, key, evaluations=10_000, batch=1000) -> float:
    """Seconds for ``evaluations`` element tensors, timed in batches."""
    data = sample_data(measure, key, batch)
    coefs = sample_coefficients(compiled, measure, batch)
    kernel.evaluate(data, coefs)
    t0 = time.perf_counter()
    for _ in range(max(evaluations // batch, 1)):
        kernel.evaluate(data, coefs)
    return time.perf_counter() - t0


def bench(source, degrees=(1, 2, 3, 4, 5), measure="dx", form=None, timing=True) -> dict:
    """Flop counts (measured and modelled) per degree for the cell kernel of one form."""
    rows = []
    for k in degrees:
        forms = compile_with(source, k)
        cf = forms[form] if form else next(f for f in forms.values() if f.rank == 2)
        tk = cf.kernel(measure, (), "tensor")
        qk = cf.kernel(measure, (), "quadrature")
        entries = int(np.prod(tk.shape))
        t_t, t_q = model_costs(k)
        row = {
            "degree": k,
            "entries": entries,
            "quadrature_points": qk.num_points,
            "tensor_flops": measured_flops(cf, measure, (), "tensor"),
            "quadrature_flops": measured_flops(cf, measure, (), "quadrature"),
            "tensor_contraction_flops": contraction_flops(tk),
            "tensor_contraction_flops_per_entry_dense": 2 * tk.num_secondary,
            "model_points": model_points(k),
            "model_tensor_per_entry": t_t,
            "model_quadrature_per_entry": t_q,
            "model_speedup": model_speedup(k),
        }
        row["tensor_flops_per_entry"] = row["tensor_flops"] / entries
        row["quadrature_flops_per_entry"] = row["quadrature_flops"] / entries
        row["measured_speedup"] = row["quadrature_flops"] / max(row["tensor_flops"], 1)
        if timing:
            row["tensor_seconds_per_1e4"] = time_kernel(tk, cf, measure, ())
            row["quadrature_seconds_per_1e4"] = time_kernel(qk, cf, measure, ())
        rows.append(row)
    return {"form": form, "measure": measure, "rows": rows}


def cmd_bench(args) -> int:
    label, source = read_form(args.form or "laplacian")
    result = bench(source, args.degrees or (1, 2, 3, 4, 5), timing=not args.no_timing)
    result["form"] = label
    text = json.dumps(result, indent=2)
    print(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / f"{label}_bench.json").write_text(text + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dgfc", description="Variational form compiler for DG methods")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile a form file and report kernel op counts")
    c.add_argument("--form", required=True, help="form file path or bundled form name")
    c.add_argument("--mode", choices=("tensor", "quadrature", "both"), default="tensor")
    c.add_argument("--degree", type=int)
    c.add_argument("--alpha", type=float)
    c.add_argument("--out", help="directory for emitted kernels")
    c.add_argument("--emit", action="store_true", help="write kernel source files")
    c.set_defaults(func=cmd_compile)

    for name, func, helptext in (("demo", cmd_demo, "solve one model problem"),
                                 ("convergence", cmd_convergence, "run a refinement study")):
        d = sub.add_parser(name, help=helptext)
        d.add_argument("problem", choices=PROBLEMS)
        d.add_argument("--mode", choices=("tensor", "quadrature"), default="tensor")
        d.add_argument("--degree", type=int)
        d.add_argument("--alpha", type=float)
        d.add_argument("--kappa", type=float)
        d.add_argument("--b", help="advection velocity BX,BY")
        d.add_argument("--interpolation-degree", type=int,
                       help="interpolate the exact solution at this degree in error forms")
        d.add_argument("--out")
        if name == "demo":
            d.add_argument("--mesh", type=_mesh_arg)
        else:
            d.add_argument("--resolutions", type=_int_list)
        d.set_defaults(func=func)

    b = sub.add_parser("bench", help="tensor versus quadrature op counts per degree")
    b.add_argument("--form", help="form file path or bundled form name (default: laplacian)")
    b.add_argument("--degrees", type=_int_list)
    b.add_argument("--out")
    b.add_argument("--no-timing", action="store_true")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DGFCError, FileNotFoundError, ValueError) as exc:
        where = getattr(args, "form", None)
        prefix = f"{where}:" if where else ""
        print(f"error: {prefix}{exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
