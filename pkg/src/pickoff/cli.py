"""Command-line front end: ``pickoff <command> [flags]``.

Commands::

    generate           write a synthetic play-by-play corpus
    build-transitions  plays + coefficients -> kernel file
    solve              kernel -> solution file
    tables             solution -> lead tables by count, outs or player skill
    simulate           kernel + policy -> Monte Carlo runs per inning

Every file a command writes gets a ``<file>.manifest.json`` companion that
records the command, the resolved flags, SHA-256 hashes of the inputs, the
tool version and the wall time.  The manifest hash covers everything except
the wall time and is embedded in the output itself, so rerunning a command
on identical inputs reproduces the output byte for byte.

Exit codes: 0 success, 2 usage, 3 non-convergence, 4 invalid kernel,
5 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import outcomes as om
from . import report as rp
from . import solver as so
from . import states as st
from .builder import AssemblyError, assemble_from_rows, build_kernel
from .kernel import InvalidKernelError, load_kernel, save_kernel
from .plays import PlayDataError, ingest_plays, save_plays
from .simulate import empirical_policy, monte_carlo_value

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NONCONVERGENCE = 3
EXIT_INVALID_KERNEL = 4
EXIT_DATA = 5

DEFAULT_QUANTILES = (0.1, 0.5, 0.9)
log = logging.getLogger("pickoff")


class UsageError(Exception):
    """Bad flag combination or missing input file (exit code 2)."""


# -- manifests -------------------------------------------------------------


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _canonical(doc) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


class RunManifest:
    """Provenance of one command run; see the module docstring."""

    def __init__(self, command: str, config: dict, inputs: dict):
        self.command = command
        self.config = {k: config[k] for k in sorted(config)}
        self.inputs = {name: file_sha256(p) for name, p in sorted(inputs.items()) if p is not None}
        self.version = __version__
        self.wall_time = 0.0
        self._t0 = time.perf_counter()

    def body(self) -> dict:
        return {"command": self.command, "config": self.config, "inputs": self.inputs,
                "version": self.version}

    @property
    def hash(self) -> str:
        return hashlib.sha256(_canonical(self.body())).hexdigest()

    def write_beside(self, output) -> Path:
        self.wall_time = time.perf_counter() - self._t0
        doc = dict(self.body(), manifest_hash=self.hash, output=Path(output).name,
                   wall_time=round(self.wall_time, 3))
        path = Path(str(output) + ".manifest.json")
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        return path


def _config(args, *names) -> dict:
    out = {}
    for n in names:
        v = getattr(args, n)
        out[n] = list(v) if isinstance(v, tuple) else v
    return out


# -- helpers -----------------------------------------------------------------


def _existing(path, flag):
    if path is None:
        return None
    if not Path(path).is_file():
        raise UsageError(f"{flag}: no such file: {path}")
    return path


def _grid(text):
    try:
        return st.LeadGrid.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r} (want lo:hi:step): {exc}") from None


def _count(text):
    try:
        b, s = (int(x) for x in text.split("-"))
        return st.Count(b, s)
    except (ValueError, TypeError):
        raise argparse.ArgumentTypeError(f"bad count {text!r} (want balls-strikes, e.g. 3-2)") from None


def _pair(text):
    try:
        qb, qr = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad percentile pair {text!r} (want battery,runner)") from None
    for q in (qb, qr):
        if not 0 < q < 1:
            raise argparse.ArgumentTypeError(f"percentiles must lie in (0, 1), got {text!r}")
    return qb, qr


def _load_model_set(path):
    return om.load_model_set(path)


def _load_kernel(path):
    k = load_kernel(path)
    k.require_solvable()
    return k


def _solve(k, method, tol, max_iters):
    """Solve ``k``; a one-player kernel is solved as the runner's MDP."""
    if k.n_pitcher == 1 and method == "vi":
        V, runner, rep = so.solve_one_player(k, tol, max_iters)
        return so.Solution(V, runner, None, rep, dict(k.metadata, mode=k.mode))
    return so.solve(k, method, tol, max_iters)


# -- commands -----------------------------------------------------------------


def cmd_generate(args):
    from .synthetic import GeneratorConfig, generate_synthetic_plays, synthetic_model_set

    ms = _load_model_set(_existing(args.coeffs, "--coeffs")) if args.coeffs else synthetic_model_set()
    cfg = GeneratorConfig(innings=args.innings, seed=args.seed, model_set=ms)
    plays = generate_synthetic_plays(cfg)
    man = RunManifest("generate", _config(args, "innings", "seed"), {"coeffs": args.coeffs})
    save_plays(plays, args.out)
    man.write_beside(args.out)
    if args.coeffs_out:
        om.save_model_set(ms, args.coeffs_out)
        man.write_beside(args.coeffs_out)
    print(f"wrote {len(plays)} plays from {args.innings} innings to {args.out}")
    return EXIT_OK


def cmd_build_transitions(args):
    plays_path = _existing(args.plays, "--plays")
    coeffs_path = _existing(args.coeffs, "--coeffs")
    ms = _load_model_set(coeffs_path)
    plays = ingest_plays(plays_path, missing_lead=args.missing_lead)
    man = RunManifest("build-transitions", _config(args, "mode", "grid", "missing_lead"),
                      {"plays": plays_path, "coeffs": coeffs_path})
    k = build_kernel(plays, ms, mode=args.mode, grid=_grid(args.grid),
                     metadata={"manifest": man.hash})
    h = k.halting
    print(f"halting report: m = {h.m}, rho = {h.rho:.3e}")
    if not h.solvable:
        print("error: kernel may not halt (rho = 1); refusing to write it", file=sys.stderr)
        return EXIT_INVALID_KERNEL
    save_kernel(k, args.out)
    man.write_beside(args.out)
    levels = ", ".join(f"{n} {c}" for n, c in k.metadata.get("fallback_levels", {}).items())
    print(f"{args.mode} kernel from {len(plays)} plays written to {args.out}")
    print(f"row sources: {levels}")
    return EXIT_OK


def cmd_solve(args):
    kernel_path = _existing(args.kernel, "--kernel")
    k = _load_kernel(kernel_path)
    man = RunManifest("solve", _config(args, "method", "tol", "max_iters"), {"kernel": kernel_path})
    try:
        sol = _solve(k, args.method, args.tol, args.max_iters)
    except so.NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        partial = getattr(exc, "partial", None)
        if partial is not None:
            rep = partial[1] if isinstance(partial, tuple) else partial
            if hasattr(rep, "to_dict"):
                print(json.dumps(rep.to_dict(include_time=False), indent=1), file=sys.stderr)
        return EXIT_NONCONVERGENCE
    rep = sol.report
    if not rep.converged:
        print(f"error: {args.method} did not converge in {args.max_iters} iterations "
              f"(residual {rep.residual:.3e})", file=sys.stderr)
        print(json.dumps(rep.to_dict(include_time=False), indent=1), file=sys.stderr)
        return EXIT_NONCONVERGENCE
    sol.kernel_meta["solution_manifest"] = man.hash
    so.save_solution(sol, args.out, include_time=False)
    man.write_beside(args.out)
    print(f"start-state value: {sol.start_value():.4f} runs per inning")
    print(f"method {rep.method}: {rep.iterations} iterations, residual {rep.residual:.3e}, "
          f"error bound {rep.error_bound:.3e}")
    if np.isfinite(rep.rate):
        print(f"fitted residual decay rate: {rep.rate:.4f}")
    print(f"solution written to {args.out}")
    return EXIT_OK


def _player_solutions(args, sol):
    """Re-solve the kernel for each (battery, runner) percentile pair."""
    kernel_path = _existing(args.kernel, "--kernel")
    coeffs_path = _existing(args.coeffs, "--coeffs")
    if kernel_path is None or coeffs_path is None:
        raise UsageError("--by players needs --kernel and --coeffs")
    k = _load_kernel(kernel_path)
    ms = _load_model_set(coeffs_path)
    grid = st.LeadGrid.parse(k.metadata["grid"]) if "grid" in k.metadata else st.LeadGrid(
        float(k.leads[0]), float(k.leads[-1]), float(round(k.leads[1] - k.leads[0], 10)))
    pairs = args.players or list(itertools.product(DEFAULT_QUANTILES, DEFAULT_QUANTILES))
    method = (sol.report.method if sol.report.method in ("vi", "pi") else "vi")
    out = []
    for qb, qr in pairs:
        effects = om.merge_effects(om.percentile_profile(ms, "battery", qb),
                                   om.percentile_profile(ms, "runner", qr))
        kq = assemble_from_rows(k.base, k.components, ms, om.PlayContext(effects=effects),
                                grid, k.mode, metadata=k.metadata)
        out.append(((qb, qr), _solve(kq, method, args.tol, so.DEFAULT_MAX_ITERS)))
    return out


def _emit_tables(args, runner, title_prefix=""):
    chunks = []
    if args.by == "outs":
        header, rows = rp.table_by_outs(runner, (args.count.balls, args.count.strikes))
        title = f"{title_prefix}lead (ft) by outs at count {args.count.balls}-{args.count.strikes}"
    else:
        header, rows = rp.table_by_count(runner, args.outs)
        title = f"{title_prefix}lead (ft) by count with {args.outs} out{'s' if args.outs != 1 else ''}"
    chunks.append(rp.format_table(header, rows, args.format, title))
    return chunks


def cmd_tables(args):
    sol_path = _existing(args.solution, "--solution")
    sol = so.load_solution(sol_path)
    if len(sol.values) != st.N_STATES:
        raise UsageError("tables need a solution of the baseball game")
    chunks = []
    if args.by == "players":
        args_by = argparse.Namespace(**vars(args))
        args_by.by = "count"
        for (qb, qr), s in _player_solutions(args, sol):
            prefix = f"battery q={qb:g}, runner q={qr:g} (value {s.start_value():.4f}): "
            chunks += _emit_tables(args_by, s.runner, prefix)
    else:
        chunks += _emit_tables(args, sol.runner)
    if args.two_foot:
        chunks.append(rp.two_foot_rule_report(sol.runner).format() + "\n")
    sep = "\n"
    text = sep.join(chunks)
    if args.out:
        man = RunManifest("tables", _config(args, "by", "format", "outs", "two_foot") | {
            "count": f"{args.count.balls}-{args.count.strikes}",
            "players": [list(p) for p in args.players] if args.players else None,
        }, {"solution": sol_path, "kernel": args.kernel, "coeffs": args.coeffs})
        Path(args.out).write_text(f"# manifest {man.hash}\n" + text)
        man.write_beside(args.out)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args):
    kernel_path = _existing(args.kernel, "--kernel")
    if kernel_path is None:
        raise UsageError("simulate needs --kernel")
    if (args.solution is None) == (args.policy is None):
        raise UsageError("give exactly one of --solution and --policy empirical")
    k = _load_kernel(kernel_path)
    pickoff_prob, pitcher, dp_value = None, None, None
    if args.solution:
        sol = so.load_solution(_existing(args.solution, "--solution"))
        runner, pitcher = sol.runner, sol.pitcher
        if len(runner.leads) != k.n_leads or not np.array_equal(runner.agency, k.agency):
            raise UsageError("solution does not match the kernel's grid or states")
        dp_value = so.evaluate_policy_pair(runner, pitcher, k, method="linear")
        label = "solution policy"
    else:
        plays_path = _existing(args.plays, "--plays")
        if plays_path is None:
            raise UsageError("--policy empirical needs --plays")
        runner, pickoff_prob = empirical_policy(ingest_plays(plays_path), k)
        if k.n_pitcher == 1:
            pickoff_prob = None
        dp_value = so.evaluate_mixed(k, runner.lead_idx, pickoff_prob)
        label = "empirical policy"
    res = monte_carlo_value(k, runner, pitcher, args.innings, seed=args.seed,
                            threads=args.threads, pickoff_prob=pickoff_prob)
    start = so.START_INDEX if k.n_states == st.N_STATES else 0
    dp = float(dp_value[start])
    gap = res.mean - dp
    lines = [
        f"{label}: {res.n} innings, seed {args.seed}",
        f"mean runs per inning: {res.mean:.4f} +/- {res.se:.4f} (SE)",
        f"dynamic-programming value: {dp:.4f}",
        f"difference: {gap:+.4f} ({gap / res.se if res.se > 0 else 0.0:+.2f} SE)",
        f"longest inning: {res.max_plays} plays; truncated innings: {res.truncated}",
    ]
    agree = res.covers(dp, 3.0)
    if not agree:
        lines.append("WARNING: Monte Carlo and dynamic programming disagree by more than 3 SE")
    text = "\n".join(lines) + "\n"
    if args.out:
        man = RunManifest("simulate", _config(args, "innings", "seed", "policy"),
                          {"kernel": kernel_path, "solution": args.solution, "plays": args.plays})
        doc = dict(res.to_dict(), dp_value=dp, agree_within_3se=agree, manifest=man.hash)
        Path(args.out).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        man.write_beside(args.out)
    sys.stdout.write(text)
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pickoff", description="Runner/pitcher pickoff game solver.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic play-by-play corpus")
    g.add_argument("--innings", type=int, default=100_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--coeffs", help="coefficient file (default: the shipped synthetic set)")
    g.add_argument("--out", required=True, help="output CSV")
    g.add_argument("--coeffs-out", help="also write the coefficient file used")
    g.set_defaults(func=cmd_generate)

    b = sub.add_parser("build-transitions", help="estimate and assemble a transition kernel")
    b.add_argument("--plays", required=True, help="play-by-play CSV")
    b.add_argument("--coeffs", required=True, help="outcome-model coefficient JSON")
    b.add_argument("--mode", choices=("two-player", "one-player"), default="two-player")
    b.add_argument("--grid", default=str(st.DEFAULT_GRID), type=lambda t: str(_grid(t)),
                   help="lead grid lo:hi:step in feet (default %(default)s)")
    b.add_argument("--missing-lead", choices=("drop", "impute"), default="drop",
                   help="first-base-only rows without a lead (default %(default)s)")
    b.add_argument("--out", required=True, help="output kernel file")
    b.set_defaults(func=cmd_build_transitions)

    s = sub.add_parser("solve", help="solve a kernel")
    s.add_argument("--kernel", required=True)
    s.add_argument("--method", choices=("vi", "pi"), default="vi")
    s.add_argument("--tol", type=float, default=so.DEFAULT_TOL)
    s.add_argument("--max-iters", type=int, default=so.DEFAULT_MAX_ITERS)
    s.add_argument("--out", required=True, help="output solution file")
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("tables", help="print lead tables from a solution")
    t.add_argument("--solution", required=True)
    t.add_argument("--by", choices=("count", "outs", "players"), default="count")
    t.add_argument("--format", choices=("text", "csv"), default="text")
    t.add_argument("--outs", type=int, choices=(0, 1, 2), default=0,
                   help="outs for --by count (default %(default)s)")
    t.add_argument("--count", type=_count, default=st.Count(0, 0),
                   help="count for --by outs, e.g. 3-2 (default 0-0)")
    t.add_argument("--players", type=_pair, nargs="+", metavar="QB,QR",
                   help="battery,runner skill percentiles for --by players "
                        "(default: every pair from 0.1, 0.5, 0.9)")
    t.add_argument("--kernel", help="kernel the solution came from (--by players)")
    t.add_argument("--coeffs", help="coefficient file (--by players)")
    t.add_argument("--tol", type=float, default=so.DEFAULT_TOL)
    t.add_argument("--two-foot", action="store_true", help="append the lead-by-disengagement summary")
    t.add_argument("--out", help="also write the tables to this file")
    t.set_defaults(func=cmd_tables)

    m = sub.add_parser("simulate", help="Monte Carlo evaluation of a policy")
    m.add_argument("--kernel", help="kernel file")
    m.add_argument("--solution", help="solution file whose policies to roll out")
    m.add_argument("--policy", choices=("empirical",), help="use observed behaviour from --plays")
    m.add_argument("--plays", help="play-by-play CSV (--policy empirical)")
    m.add_argument("--innings", type=int, default=1_000_000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $PICKOFF_THREADS or 1)")
    m.add_argument("--out", help="also write the report as JSON")
    m.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"pickoff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidKernelError as exc:
        print(f"pickoff: invalid kernel: {exc}", file=sys.stderr)
        return EXIT_INVALID_KERNEL
    except (PlayDataError, om.CoefficientError, AssemblyError) as exc:
        print(f"pickoff: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except so.NonConvergenceError as exc:
        print(f"pickoff: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
