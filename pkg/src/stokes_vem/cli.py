"""Command-line entry point: ``stokes-vem study ...``."""
import argparse
import logging
import os
import sys

from .errors import ConfigurationError, VemError
from .harness import compute_errors, polynomial_case, run_study, solve_case
from .mesh import FAMILIES, generate, read_mesh, write_mesh
from .system import infsup_estimate, write_coo
from .vemspace import SchemeConfig

log = logging.getLogger("stokes_vem")

PATCH_TOL = 1e-8


def parse_levels(text):
    """``"A..B"`` (inclusive) or a single level ``"A"``."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must look like A..B, got {text!r}")
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"need 1 <= A <= B, got {text!r}")
    return list(range(lo, hi + 1))


def parse_degrees(text):
    try:
        ks = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"degrees must be integers, got {text!r}")
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError(f"degrees must be >= 1, got {text!r}")
    return ks


def _choices(allowed):
    def parse(text):
        out = [t.strip().upper() for t in text.split(",") if t.strip()]
        bad = [t for t in out if t not in allowed]
        if not out or bad:
            raise argparse.ArgumentTypeError(
                f"expected a comma list from {', '.join(a.lower() for a in allowed)}, got {text!r}")
        return out
    return parse


def build_parser():
    p = argparse.ArgumentParser(prog="stokes-vem",
                                description="Virtual element Stokes solver on polygonal meshes.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("study", help="convergence study on the manufactured problem")
    s.add_argument("--family", type=_choices(FAMILIES), required=True, help="m1|m2|m3 (comma list ok)")
    s.add_argument("--levels", type=parse_levels, required=True, help="A..B")
    s.add_argument("--degree", type=parse_degrees, required=True, help="K[,K2,...]")
    s.add_argument("--formulation", type=_choices(("F1", "F2")), default=["F1"], help="f1|f2")
    variant = s.add_mutually_exclusive_group()
    variant.add_argument("--enhanced", dest="enhanced", action="store_true", default=True)
    variant.add_argument("--regular", dest="enhanced", action="store_false")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="CSV output path")
    s.add_argument("--mesh-dir", help="read meshes from / write generated meshes to DIR")
    s.add_argument("--dump-system", action="store_true",
                   help="write each assembled saddle-point matrix as COO next to the CSV")
    s.add_argument("--infsup", action="store_true",
                   help="also estimate the discrete inf-sup constant (dense, small levels only)")
    s.add_argument("--patch-test", action="store_true",
                   help="also run the polynomial patch test on every grid point")
    return p


def _mesh_path(mesh_dir, family, level, seed):
    return os.path.join(mesh_dir, f"{family.lower()}_l{level}_s{seed}.mesh")


def _load_meshes(args):
    """Mesh cache for the study; honours ``--mesh-dir``."""
    cache = {}
    if not args.mesh_dir:
        return cache
    os.makedirs(args.mesh_dir, exist_ok=True)
    for fam in args.family:
        for lev in args.levels:
            path = _mesh_path(args.mesh_dir, fam, lev, args.seed)
            try:
                if os.path.exists(path):
                    with open(path) as fh:
                        mesh = read_mesh(fh)
                else:
                    mesh = generate(fam, lev, args.seed)
                    with open(path, "w") as fh:
                        write_mesh(mesh, fh)
            except VemError as exc:
                mesh = exc
            cache[(fam, lev, args.seed)] = mesh
    return cache


def _stem(args):
    root, _ = os.path.splitext(args.out)
    return root


def _tag(row):
    return (f"{row.family.lower()}_l{row.level}_k{row.k}_{row.formulation.lower()}_"
            f"{'enh' if row.enhanced else 'reg'}")


def _dumper(args):
    stem = _stem(args)

    def observe(row, solution):
        with open(f"{stem}_{_tag(row)}.coo", "w") as fh:
            write_coo(solution.system.matrix(), fh)
    return observe


def _patch_tests(args, cache, out):
    failed = False
    out.write("family,level,k,formulation,enhanced,err_h1_u,err_l2_u,err_l2_p,status\n")
    for fam in args.family:
        for lev in args.levels:
            mesh = cache.get((fam, lev, args.seed))
            for k in args.degree:
                for form in args.formulation:
                    cfg = SchemeConfig(form, k, args.enhanced)
                    try:
                        if mesh is None:
                            mesh = cache[(fam, lev, args.seed)] = generate(fam, lev, args.seed)
                        if isinstance(mesh, Exception):
                            raise mesh
                        errs = compute_errors(solve_case(mesh, cfg, polynomial_case(k, args.seed)),
                                              polynomial_case(k, args.seed))
                        status = "ok" if max(errs) <= PATCH_TOL else "inexact"
                    except VemError as exc:
                        errs, status = (float("nan"),) * 3, f"error: {exc}"
                    failed |= status != "ok"
                    out.write(f"{fam},{lev},{k},{form},{int(args.enhanced)},"
                              f"{errs[0]:.3e},{errs[1]:.3e},{errs[2]:.3e},{status}\n")
    return failed


def _infsup(args, cache, out):
    failed = False
    out.write("family,level,k,formulation,enhanced,beta_h,status\n")
    for fam in args.family:
        for lev in args.levels:
            mesh = cache.get((fam, lev, args.seed))
            for k in args.degree:
                for form in args.formulation:
                    try:
                        if mesh is None:
                            mesh = cache[(fam, lev, args.seed)] = generate(fam, lev, args.seed)
                        if isinstance(mesh, Exception):
                            raise mesh
                        beta = infsup_estimate(mesh, SchemeConfig(form, k, args.enhanced))
                        status = "ok" if beta > 1e-3 else "small"
                    except VemError as exc:
                        beta, status = float("nan"), f"error: {exc}"
                    failed |= status.startswith("error")
                    out.write(f"{fam},{lev},{k},{form},{int(args.enhanced)},{beta:.6e},{status}\n")
    return failed


def run(args):
    cache = _load_meshes(args)
    report = run_study(args.family, args.levels, args.degree, args.formulation,
                       [args.enhanced], seed=args.seed, out=args.out, mesh_cache=cache,
                       observer=_dumper(args) if args.dump_system else None)
    failed = any(not r.status.startswith("ok") for r in report.rows)
    for r in report.rows:
        log.info("%s level %d k=%d %s %s: %s", r.family, r.level, r.k, r.formulation,
                 "enhanced" if r.enhanced else "regular", r.status)
    if args.patch_test:
        with open(f"{_stem(args)}_patch.csv", "w") as fh:
            failed |= _patch_tests(args, cache, fh)
    if args.infsup:
        with open(f"{_stem(args)}_infsup.csv", "w") as fh:
            failed |= _infsup(args, cache, fh)
    return 2 if failed else 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (ConfigurationError, OSError) as exc:
        print(f"stokes-vem: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
