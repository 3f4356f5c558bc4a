"""Command line entry point.

Exit status is 0 on success, 1 when a verification check fails and 2 on usage
or configuration errors.  Worker threads for abstraction are capped by the
``IMCVERIFY_THREADS`` environment variable.

States are numbered from 0; the sink of an abstraction is the last state.
Trace dumps (``simulate --trace-out``) hold one line per path with the
comma-separated cell indices visited at times ``0..horizon``; a stopped path
repeats the sink index.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .abstraction import build_imc, thread_count
from .checker import check_property, winning_region
from .errors import ImcVerifyError
from .imc import marginal_vertices, validate_imc
from .io import load_config, load_imc_document, results_csv, save_imc
from .properties import BoundedUntil, DfaSpec, Safety, Until, check_aps, parse_property
from .robustness import report_json, report_text, sandwich_report
from .simulation import (FAIL, estimate_probability, monte_carlo, property_horizon,
                         simulate_paths, soundness_check)
from .system import build_partition

_DYADIC_DEN = 2 ** 20


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _Usage(f"{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="imcverify", description="IMC abstraction and verification of "
                "perturbed stochastic systems.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("abstract", help="build an IMC abstraction from a config file")
    a.add_argument("--config", required=True)
    a.add_argument("--eta", type=float, required=True)
    a.add_argument("--kappa", type=float, help="subdivision accuracy (default eta/10)")
    a.add_argument("--out", required=True, help="IMC JSON output path")

    c = sub.add_parser("check", help="probability intervals for a property on an IMC")
    c.add_argument("--imc", required=True)
    c.add_argument("--property", required=True)
    c.add_argument("--horizon", type=int, help="bound (or rebound) the property's horizon")
    c.add_argument("--rho", type=float)
    c.add_argument("--op", choices=["ge", "le", "gt", "lt"], default="ge")
    c.add_argument("--out", help="CSV output path (state, lo, hi, verdict)")

    v = sub.add_parser("vertices", help="vertices of the t-step marginal set")
    v.add_argument("--imc", required=True)
    v.add_argument("--init", required=True,
                   help="initial state index, or a comma-separated distribution")
    v.add_argument("--t", type=int, required=True)

    s = sub.add_parser("simulate", help="Monte Carlo estimate on the concrete system")
    s.add_argument("--config", required=True)
    s.add_argument("--x0", type=_floats, required=True)
    s.add_argument("--paths", type=int, required=True)
    s.add_argument("--horizon", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--property", required=True)
    s.add_argument("--eta", type=float, help="grid size (default [verify].eta)")
    s.add_argument("--imc", help="compare with this IMC's interval at the initial cell")
    s.add_argument("--confidence", type=float, default=0.99)
    s.add_argument("--trace-out", help="write traces, one comma-separated line per path")

    k = sub.add_parser("complete", help="completeness certificate and sandwich check")
    k.add_argument("--config", required=True)
    k.add_argument("--theta1", type=float, required=True)
    k.add_argument("--theta2", type=float, required=True)
    k.add_argument("--kappa", type=float, required=True)
    k.add_argument("--eta", type=float)
    k.add_argument("--property")
    k.add_argument("--x0", type=_floats)
    k.add_argument("--paths", type=int, default=10000)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--confidence", type=float, default=0.99)
    k.add_argument("--out", help="JSON report path")
    return p


# --- subcommands -------------------------------------------------------------------


def _abstract(args, out) -> int:
    cfg = load_config(args.config)
    partition = build_partition(cfg.spec, args.eta)
    imc, ledger = build_imc(cfg.spec, partition, args.kappa, threads=thread_count())
    save_imc(imc, args.out, extra={"eta": args.eta, "kappa": ledger.kappa,
                                   "W": cfg.spec.W.as_list()})
    report = validate_imc(imc)
    print(f"wrote {args.out}: {partition.N} cells + sink, eta={args.eta!r}, "
          f"kappa={ledger.kappa!r}", file=out)
    for d in ledger.diagnostics + report.diagnostics:
        print(f"warning: {d}", file=out)
    return 0


def _with_horizon(prop, horizon):
    if horizon is None:
        return prop
    if horizon < 0:
        raise _Usage("--horizon must be nonnegative")
    if isinstance(prop, (BoundedUntil, Until)):
        return BoundedUntil(prop.left, prop.right, horizon)
    if isinstance(prop, Safety):
        return Safety(prop.safe, horizon)
    raise _Usage("--horizon does not apply to DFA properties")


def _alphabet(labels):
    return set().union(*labels) if labels else set()


def _check(args, out) -> int:
    imc, _ = load_imc_document(args.imc)
    prop = _with_horizon(parse_property(args.property, Path(args.imc).parent), args.horizon)
    if not isinstance(prop, DfaSpec):
        check_aps(prop, _alphabet(imc.labels))
    iv = check_property(imc, prop)
    verdicts = None
    if args.rho is not None:
        good, bad, undecided = winning_region(iv, args.rho, args.op)
        verdicts = ["guaranteed" if i in good else "impossible" if i in bad else "undecided"
                    for i in range(imc.n_states)]
        print(f"guaranteed: {_fmt_set(good)}", file=out)
        print(f"impossible: {_fmt_set(bad)}", file=out)
        print(f"undecided: {_fmt_set(undecided)}", file=out)
    text = results_csv(iv.lo, iv.hi, verdicts)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    elif args.rho is None:
        out.write(text)
    return 0


def _fmt_set(items) -> str:
    return "{" + ", ".join(str(i) for i in sorted(items)) + "}"


def _is_dyadic(values) -> bool:
    return all(Fraction(float(x)).denominator <= _DYADIC_DEN for x in np.ravel(values))


def _vertices(args, out) -> int:
    imc, _ = load_imc_document(args.imc)
    n = imc.n_states
    spec = _floats(args.init)
    if len(spec) == 1 and float(spec[0]).is_integer() and n > 1:
        q = int(spec[0])
        if not 0 <= q < n:
            raise _Usage(f"--init state {q} out of range 0..{n - 1}")
        mu0 = [0.0] * n
        mu0[q] = 1.0
    elif len(spec) == n:
        mu0 = spec
        if abs(sum(mu0) - 1.0) > 1e-9 or min(mu0) < 0:
            raise _Usage("--init distribution must be nonnegative and sum to 1")
    else:
        raise _Usage(f"--init must be a state index or {n} probabilities")
    if args.t < 0:
        raise _Usage("--t must be nonnegative")
    exact = _is_dyadic(imc.lower) and _is_dyadic(imc.upper) and _is_dyadic(mu0)
    verts = marginal_vertices(imc, mu0, args.t, exact=True)
    for v in verts:
        cells = [str(x) for x in v] if exact else [repr(float(x)) for x in v]
        print("(" + ", ".join(cells) + ")", file=out)
    return 0


def _grid_eta(args, cfg):
    eta = args.eta if args.eta is not None else cfg.verify.get("eta")
    if eta is None:
        raise _Usage("no grid size: pass --eta or set [verify].eta")
    return float(eta)


def _simulate(args, out) -> int:
    cfg = load_config(args.config)
    spec = cfg.spec
    partition = build_partition(spec, _grid_eta(args, cfg))
    prop = parse_property(args.property, Path(args.config).parent)
    if not isinstance(prop, DfaSpec):
        check_aps(prop, spec.props)
    need = property_horizon(prop)
    if need is not None and need > args.horizon:
        raise _Usage(f"--horizon {args.horizon} is shorter than the property horizon {need}")
    if args.trace_out:
        batch = simulate_paths(spec, partition, args.x0, args.horizon, args.paths, seed=args.seed)
        Path(args.trace_out).write_text("\n".join(batch.to_lines()) + "\n", encoding="utf-8")
        est = estimate_probability(batch, prop, partition.all_labels, args.confidence)
    else:
        est = monte_carlo(spec, partition, args.x0, prop, args.paths, args.seed,
                          confidence=args.confidence, horizon=args.horizon)
    print(f"estimate {est.point!r} from {est.successes}/{est.n} paths; "
          f"{est.confidence:g} interval [{est.ci.lo!r}, {est.ci.hi!r}]", file=out)
    if args.imc:
        imc, doc = load_imc_document(args.imc)
        if imc.n_states != partition.n_states:
            raise _Usage(f"IMC has {imc.n_states} states, the grid has {partition.n_states}")
        q0 = partition.locate(args.x0)
        iv = check_property(imc, prop)[q0]
        verdict = soundness_check(est.ci, iv)
        print(f"IMC interval at cell {q0}: [{iv.lo!r}, {iv.hi!r}] -> {verdict}", file=out)
        if verdict == FAIL:
            return 1
    return 0


def _complete(args, out) -> int:
    cfg = load_config(args.config)
    prop = parse_property(args.property, Path(args.config).parent) if args.property else None
    if prop is not None and args.x0 is None:
        raise _Usage("--property needs --x0")
    report = sandwich_report(cfg.spec, args.theta1, args.theta2, args.kappa, eta=args.eta,
                             prop=prop, x0=args.x0, paths=args.paths, seed=args.seed,
                             confidence=args.confidence)
    out.write(report_text(report))
    if args.out:
        Path(args.out).write_text(report_json(report), encoding="utf-8")
    failed = not report.get("certified", False)
    if "x1" in report:
        failed |= any(e["verdict"] == FAIL for e in report["x1"])
        failed |= not report["imc_inside_envelope"]
    return 1 if failed else 0


_COMMANDS = {"abstract": _abstract, "check": _check, "vertices": _vertices,
             "simulate": _simulate, "complete": _complete}


def dispatch(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = _parser().parse_args(argv)
        return _COMMANDS[args.command](args, out)
    except _Usage as exc:
        print(exc, file=sys.stderr)
        return 2
    except (ImcVerifyError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
