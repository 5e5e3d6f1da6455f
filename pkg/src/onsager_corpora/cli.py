"""Command-line front end.

Exit codes: 0 success, 2 schema or usage error, 3 non-convergence,
4 kernel validation failure. The default output directory is taken from
the ``ONSAGER_OUT`` environment variable (falling back to ``./onsager-out``).
"""

from __future__ import annotations

import argparse
import copy
import os
import sys
from pathlib import Path

import numpy as np

from . import branch as br
from . import limit as lm
from .config import BUILTIN, SchemaError, dump_config, load_config, validate_config
from .io import (BRANCH_COLUMNS, CONCENTRATION_COLUMNS, STATE_COLUMNS, TRACE_COLUMNS, read_density, write_csv,
                 write_density, write_json)
from .kernel import KernelSpec, assemble, load_tabulated, validate
from .solver import SolverConfig, continue_in_b
from .space import build_space

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_NONCONVERGED = 3
EXIT_VALIDATION = 4

ENV_OUT = "ONSAGER_OUT"
DEFAULT_OUT = "onsager-out"


class _Log:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, msg: str = ""):
        if not self.quiet:
            print(msg)


def _default_out(name: str) -> Path:
    return Path(os.environ.get(ENV_OUT, DEFAULT_OUT)) / name


def build_from_config(cfg: dict):
    """``(space, kernel)`` for a validated config."""
    space = build_space(cfg["space"]["axes"], cfg["space"]["resolution"])
    params = dict(cfg["kernel"]["parameters"])
    spec = KernelSpec(cfg["kernel"]["kind"], params)
    try:
        k = assemble(spec, space, seed=cfg["seed"])
    except ValueError as exc:
        raise SchemaError("kernel", str(exc)) from None
    return space, k


def solver_config(cfg: dict, space) -> SolverConfig:
    s = dict(cfg["solver"])
    path = s.pop("init_path", None)
    if s.get("init") == "tabulated":
        dens, _ = read_density(path, space)
        s["init_values"] = dens.values
    return SolverConfig(b_schedule=tuple(cfg["b_schedule"]), seed=cfg["seed"], **s)


def _resolve_candidates(cands: list, k, tau):
    space = k.space
    out = []
    for i, c in enumerate(cands):
        path = f"analyses.concentration.candidates[{i}]"
        if "level" in c:
            if not k.is_factored:
                raise SchemaError(path, "level candidates need a two-rod type kernel")
            out.append(lm.level_set(k, c["level"], tau, c["label"] or f"level {c['level']:g}"))
        elif "point" in c:
            if len(c["point"]) != space.dim:
                raise SchemaError(f"{path}.point", f"expected {space.dim} coordinates")
            idx = int(lm.snap(space, [c["point"]])[0])
            if idx < 0:
                raise SchemaError(f"{path}.point", "point lies outside the space")
            out.append(lm.zero_set(k, [idx], tau if tau is not None else lm.default_tau(k),
                                   c["label"] or f"point {idx}"))
        elif "indices" in c:
            if max(c["indices"]) >= space.n:
                raise SchemaError(f"{path}.indices", "index out of range")
            out.append(lm.zero_set(k, c["indices"], tau, c["label"] or f"set {i}"))
        else:
            out.extend(lm.zero_pairs(k, tau).component_sets())
    return out


def _selection_specs(entries: list, k):
    specs = []
    for i, e in enumerate(entries):
        path = f"analyses.selection[{i}]"
        try:
            if e["map"] == "two_rod":
                specs.append(lm.two_rod_selection(k, e["c"], e["eps"], e["tau"]))
            elif e["map"] == "rhombus":
                if k.space.dim != 1:
                    raise ValueError("the rhombus map needs a one-axis space")
                qi = int(lm.snap(k.space, [[e["q"]]])[0])
                specs.append(lm.rhombus_selection(k, qi, e["c"], e["eps"]))
            else:
                specs.append(lm.identity_selection(specs[e["of"]], e["c"]))
        except ValueError as exc:
            raise SchemaError(path, str(exc)) from None
    return specs


def _fmt_b(b: float) -> str:
    return format(b, "g").replace(".", "p")


def run_experiment(cfg: dict, out: Path, log=print) -> int:
    """Execute a validated config, writing every artifact under ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(cfg))
    space, k = build_from_config(cfg)
    summary = {"name": cfg["name"], "space_hash": space.descriptor_hash(), "n_points": space.n}
    an = cfg["analyses"]
    code = EXIT_OK

    if an["validate_kernel"]:
        rep = validate(k)
        write_json(out / "kernel_validation.json", rep.to_dict())
        summary["kernel_validation"] = rep.passed
        log(f"kernel {k!r}: validation {'passed' if rep.passed else 'FAILED'}; "
            f"sup_norm {rep.sup_norm:.6g}, Lipschitz estimate {rep.lipschitz_estimate:.6g}")
        if not rep.passed:
            write_json(out / "summary.json", summary)
            return EXIT_VALIDATION

    states = []
    if cfg["b_schedule"]:
        scfg = solver_config(cfg, space)
        states = continue_in_b(k, scfg)
        trace, table = [], []
        for st in states:
            trace.extend((st.b, it, e, r, 2 * e / st.b if st.b > 0 else float("nan")) for it, e, r, _ in st.trace)
            table.append((st.b, st.iterations, st.energy, st.residual, st.two_over_b_energy, st.converged,
                          float(st.density.values.min())))
            write_density(out / "densities" / f"b_{_fmt_b(st.b)}.txt", st.density,
                          {"b": st.b, "energy": st.energy, "residual": st.residual, "converged": st.converged})
            log(f"b={st.b:<8g} {st.status:<13} it={st.iterations:<6d} E={st.energy:.10g} "
                f"res={st.residual:.3e} 2E/b={st.two_over_b_energy:.6g}")
        write_csv(out / "trace.csv", TRACE_COLUMNS, trace)
        write_csv(out / "states.csv", STATE_COLUMNS, table)
        summary["states"] = [dict(zip(STATE_COLUMNS, row)) for row in table]
        if not all(st.converged for st in states):
            code = EXIT_NONCONVERGED

    if "branches" in an:
        b_cfg = an["branches"]
        rows = []
        for b, pts in br.branch_sweep(b_cfg["b_schedule"], b_cfg["example"], b_cfg["scan_resolution"], b_cfg["L"]):
            for p in pts:
                rows.append((b, p.a, p.h_value, p.energy, p.gamma, p.stable_hint))
            log(f"branches b={b:<8g} roots " + ", ".join(f"{p.a:+.9f}" for p in pts))
        write_csv(out / "branches.csv", BRANCH_COLUMNS, rows)

    if "concentration" in an and states:
        co = an["concentration"]
        cands = _resolve_candidates(co["candidates"], k, co["tau"])
        rows = []
        for st in states:
            rep = lm.concentration(st, cands, co["eps"], with_bl=co["bl"])
            rows.extend(rep.to_rows())
        write_csv(out / "concentration.csv", CONCENTRATION_COLUMNS, rows)
        last = lm.concentration(states[-1], cands, co["eps"], with_bl=False)
        for lab, m in zip(last.labels, last.mass_in_neighborhood):
            log(f"concentration b={last.b:g}: mass within {co['eps']:g} of {lab!r} = {m:.6f}")

    if "selection" in an:
        reports = []
        for spec in _selection_specs(an["selection"], k):
            rep = lm.selection_test(spec, k, seed=cfg["seed"])
            reports.append(rep.to_dict())
            log(f"selection {spec.name!r}: {'pass' if rep.passed else 'fail ' + ','.join(rep.failed)}")
        write_json(out / "selection.json", reports)

    if "zeroset" in an:
        zp = lm.zero_pairs(k, an["zeroset"]["tau"])
        write_json(out / "zeroset.json", zp.to_dict())
        log(f"zero pairs at tau={zp.tau:.3g}: {zp.n_pairs} ordered pairs, diagonal only: {zp.is_diagonal_only}")

    summary["exit_code"] = code
    write_json(out / "summary.json", summary)
    return code


# --- argument handling ------------------------------------------------------


def _example_config(example: int) -> dict:
    name = f"example{example}"
    if name not in BUILTIN:
        raise SchemaError("--example", f"unknown example {example}")
    return copy.deepcopy(BUILTIN[name])


def _apply_overrides(raw: dict, args) -> dict:
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "resolution", None) is not None:
        raw.setdefault("space", {})["resolution"] = args.resolution
    return raw


def _load(args, fallback_example=None) -> dict:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
        raw = copy.deepcopy(cfg)
    elif getattr(args, "example", None) is not None or fallback_example is not None:
        raw = _example_config(args.example if getattr(args, "example", None) is not None else fallback_example)
    else:
        raise SchemaError("--config", "give --config PATH or --example N")
    return validate_config(_apply_overrides(raw, args))


def _out_dir(args, cfg: dict, suffix: str = "") -> Path:
    if args.out:
        return Path(args.out)
    if cfg.get("output"):
        return Path(cfg["output"])
    return _default_out(cfg["name"] + suffix)


def cmd_run(args, log) -> int:
    cfg = _load(args)
    return run_experiment(cfg, _out_dir(args, cfg), log)


def cmd_solve(args, log) -> int:
    cfg = _load(args)
    cfg["b_schedule"] = [float(args.b)]
    if args.init:
        cfg["solver"]["init"] = args.init
    cfg["analyses"] = {"validate_kernel": False}
    return run_experiment(validate_config(cfg), _out_dir(args, cfg, f"-solve-b{_fmt_b(args.b)}"), log)


def cmd_sweep(args, log) -> int:
    cfg = _load(args)
    if args.b_schedule:
        cfg["b_schedule"] = args.b_schedule
    keep = {"concentration"} & set(cfg["analyses"])
    cfg["analyses"] = {"validate_kernel": False, **{k: cfg["analyses"][k] for k in keep}}
    return run_experiment(validate_config(cfg), _out_dir(args, cfg, "-sweep"), log)


def cmd_branches(args, log) -> int:
    if args.example not in (1, 2):
        raise SchemaError("--example", "branches are defined for examples 1 and 2")
    sched = args.b
    rows = []
    for b, pts in br.branch_sweep(sched, args.example, args.scan_resolution, args.L):
        for p in pts:
            rows.append((b, p.a, p.h_value, p.energy, p.gamma, p.stable_hint))
        log(f"b={b:g}: {len(pts)} root(s): " + ", ".join(f"{p.a:+.12f}" for p in pts))
    out = Path(args.out) if args.out else _default_out(f"branches-example{args.example}")
    write_csv(out / "branches.csv", BRANCH_COLUMNS, rows)
    return EXIT_OK


def cmd_select(args, log) -> int:
    cfg = _load(args)
    space, k = build_from_config(cfg)
    if args.example == 1 or (args.example is None and k.spec.kind == "two_rod_area"):
        spec = lm.two_rod_selection(k, args.c or 1.2, args.eps or 0.3)
    else:
        qi = int(lm.snap(space, [[args.q]])[0])
        spec = lm.rhombus_selection(k, qi, args.c, args.eps or 0.03)
    if args.identity:
        spec = lm.identity_selection(spec, args.c or 1.5)
    rep = lm.selection_test(spec, k, seed=cfg["seed"])
    out = _out_dir(args, cfg, "-select")
    write_json(out / "selection.json", rep.to_dict())
    log(f"selection {spec.name!r}: {'pass' if rep.passed else 'fail ' + ','.join(rep.failed)}")
    for name, c in rep.conditions.items():
        log(f"  {name:<22} {'ok' if c['passed'] else 'VIOLATED'}  margin={c['margin']}")
    log(f"  note: {rep.note}")
    return EXIT_OK


def cmd_zeroset(args, log) -> int:
    cfg = _load(args)
    _, k = build_from_config(cfg)
    zp = lm.zero_pairs(k, args.tau)
    report = zp.to_dict()
    out = _out_dir(args, cfg, "-zeroset")
    write_json(out / "zeroset.json", report)
    log(f"tau={zp.tau:.3g}: {zp.n_pairs} ordered pairs over {k.n} points; "
        f"{'diagonal only' if zp.is_diagonal_only else str(report['n_components']) + ' component(s)'}")
    return EXIT_OK


def cmd_validate_kernel(args, log) -> int:
    if args.kernel_file:
        matrix = load_tabulated(args.kernel_file)
        n = matrix.shape[0]
        from .kernel import KernelMatrix
        from .space import Axis
        space = build_space([Axis.periodic()], n)
        k = KernelMatrix(space, dense=matrix, spec=KernelSpec("custom-tabulated", {"matrix": matrix}),
                         seed=args.seed or 0)
        name = Path(args.kernel_file).stem
    else:
        cfg = _load(args)
        _, k = build_from_config(cfg)
        name = cfg["name"]
    rep = validate(k)
    out = Path(args.out) if args.out else _default_out(f"{name}-validate")
    write_json(out / "kernel_validation.json", rep.to_dict())
    log(f"{k!r}: {'pass' if rep.passed else 'FAIL'}")
    log(f"  sup_norm {rep.sup_norm:.6g}; Lipschitz estimate {rep.lipschitz_estimate:.6g}; "
        f"max asymmetry {rep.max_symmetry_violation:.3g}; max diagonal {rep.max_diagonal:.3g}; "
        f"min entry {rep.min_entry:.3g}")
    for f in rep.failures:
        log(f"  failure: {f['condition']} at {f['index']} (magnitude {f['magnitude']:.3g})")
    return EXIT_OK if rep.passed else EXIT_VALIDATION


def cmd_show_config(args, log) -> int:
    cfg = _load(args)
    print(dump_config(cfg), end="")
    return EXIT_OK


def _common(p: argparse.ArgumentParser, config=True, example=True):
    if config:
        p.add_argument("--config", metavar="PATH", help="YAML config file or built-in name (example1..3)")
    if example:
        p.add_argument("--example", type=int, choices=(1, 2, 3), help="use a built-in example")
    p.add_argument("--out", metavar="DIR", help=f"output directory (default ${ENV_OUT}/<name>)")
    p.add_argument("--seed", type=int, help="seed for perturbations and sampling")
    p.add_argument("--resolution", type=int, help="points per axis (overrides the config)")
    p.add_argument("--quiet", action="store_true", help="suppress the human-readable summary")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="onsager", description="Onsager free-energy experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a full experiment from a config")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("solve", help="solve at a single b")
    _common(p)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--init", choices=("uniform", "perturbed"))
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="continuation in b")
    _common(p)
    p.add_argument("--b-schedule", type=float, nargs="+", dest="b_schedule")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("branches", help="roots of the self-consistency equation")
    _common(p, config=False)
    p.add_argument("--b", type=float, nargs="+", required=True)
    p.add_argument("--scan-resolution", type=int, default=br.SCAN_POINTS, dest="scan_resolution")
    p.add_argument("--L", type=float, default=1.0)
    p.set_defaults(func=cmd_branches)

    p = sub.add_parser("select", help="selection test with a built-in comparison map")
    _common(p)
    p.add_argument("--c", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--q", type=float, default=np.pi / 4, help="rhombus angle of the rejected singleton")
    p.add_argument("--identity", action="store_true", help="use the identity map (expected to fail)")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("zeroset", help="pairs on which the kernel is below tau")
    _common(p)
    p.add_argument("--tau", type=float)
    p.set_defaults(func=cmd_zeroset)

    p = sub.add_parser("validate-kernel", help="symmetry, diagonal and sign checks")
    _common(p)
    p.add_argument("--kernel-file", metavar="PATH", help="tabulated matrix with '# dimension N' header")
    p.set_defaults(func=cmd_validate_kernel)

    p = sub.add_parser("show-config", help="print a normalized config")
    _common(p)
    p.set_defaults(func=cmd_show_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    log = _Log(args.quiet)
    try:
        return args.func(args, log)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
