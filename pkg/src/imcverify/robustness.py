"""Completeness certificates: the grid-size inequality linking the abstraction
to a more strongly perturbed system, the admissible grid size, Wasserstein
membership against the reference ledger, and the empirical sandwich report."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from decimal import Decimal, localcontext

import numpy as np

from .abstraction import ReferenceLedger, build_imc, row_gap
from .checker import check_property
from .errors import MisalignedLabels, NoFeasibleEta
from .gaussian import GaussianPoint
from .intervals import Interval
from .properties import Property
from .simulation import (PASS, PerturbationPolicy, estimate_unbounded, monte_carlo,
                         property_horizon, soundness_check)
from .system import SystemSpec, build_partition, cell_count, check_alignment

_PREC = 60


@dataclass(frozen=True)
class CompletenessReport:
    eta: float
    N: int
    ws: float
    tv: float
    kappa: float
    lhs: float
    rhs: float
    satisfied: bool

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def _dec(x: float) -> Decimal:
    return Decimal(repr(float(x)))


def completeness_margin(eta: float, N: int, kappa: float, theta1: float,
                        theta2: float) -> CompletenessReport:
    """Evaluate ``ws = (sqrt(2N) + 2) eta``, ``tv = N eta ws`` and the test
    ``2 eta + N eta tv + kappa <= theta2 - theta1``.

    ``ws`` and ``tv`` are the plain double-precision values of their closed
    forms.  The inequality is decided in 60-digit decimal arithmetic on the
    decimal representations of the inputs, and ``lhs`` is that value rounded
    once to double.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    if N < 1:
        raise ValueError("N must be at least 1")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    ws = (math.sqrt(2 * N) + 2) * eta
    tv = N * eta * ws
    with localcontext() as ctx:
        ctx.prec = _PREC
        e, k = _dec(eta), _dec(kappa)
        ws_d = ((2 * Decimal(N)).sqrt() + 2) * e
        tv_d = Decimal(N) * e * ws_d
        lhs_d = 2 * e + Decimal(N) * e * tv_d + k
        rhs_d = _dec(theta2) - _dec(theta1)
        satisfied = lhs_d <= rhs_d
        lhs, rhs = float(lhs_d), float(rhs_d)
    return CompletenessReport(float(eta), int(N), ws, tv, float(kappa), lhs, rhs, bool(satisfied))


def eta_ladder(spec: SystemSpec, eta0: float | None = None, steps: int = 40):
    """Candidate grid sizes ``eta0 / 2^k`` (``eta0`` defaults to the widest edge of W)."""
    if eta0 is None:
        eta0 = max(d.width for d in spec.W)
    return [eta0 / 2 ** k for k in range(steps + 1)]


def max_eta(spec: SystemSpec, theta1: float, theta2: float, kappa: float,
            eta0: float | None = None, steps: int = 40) -> float:
    """Largest label-aligned ladder value whose grid satisfies the completeness
    inequality; each candidate is evaluated with its own cell count."""
    if theta2 - theta1 <= kappa:
        raise NoFeasibleEta(f"theta2 - theta1 = {theta2 - theta1} does not exceed kappa = {kappa}")
    for eta in eta_ladder(spec, eta0, steps):
        try:
            check_alignment(spec, eta)
        except MisalignedLabels:
            continue
        if completeness_margin(eta, cell_count(spec, eta), kappa, theta1, theta2).satisfied:
            return eta
    raise NoFeasibleEta(f"no grid size on the ladder satisfies the inequality "
                        f"(theta2 - theta1 = {theta2 - theta1}, kappa = {kappa})")


def wasserstein_radius_check(ledger: ReferenceLedger, g: GaussianPoint, cell: int) -> bool:
    """Whether ``g`` is within ``sqrt(2N) eta`` (Gaussian W1 upper bound) of some
    reference Gaussian recorded for ``cell``."""
    return ledger.nearest_w1_upper(g, cell) <= ledger.membership_radius * (1 + 1e-12)


def _corner_policies(n: int) -> list[PerturbationPolicy]:
    return [PerturbationPolicy.corner([1.0] * n), PerturbationPolicy.corner([-1.0] * n)]


def envelope_policies(n: int) -> list[PerturbationPolicy]:
    """Sampled disturbance laws for the strongly perturbed system."""
    zero = [0.0] * n
    return [
        PerturbationPolicy.none(),
        *_corner_policies(n),
        PerturbationPolicy.random(),
        PerturbationPolicy.two_point(0.5, [2.0] * n, zero),
        PerturbationPolicy.two_point(0.5, [-2.0] * n, zero),
    ]


def _mc(spec, partition, x0, prop, paths, seed, policy, theta, confidence):
    if property_horizon(prop) is not None:
        return monte_carlo(spec, partition, x0, prop, paths, seed, policy, confidence, theta=theta)
    return estimate_unbounded(spec, partition, x0, prop, paths, seed, policy, confidence,
                              theta=theta)


def sandwich_report(spec: SystemSpec, theta1: float, theta2: float, kappa: float,
                    eta: float | None = None, prop: Property | None = None,
                    x0=None, paths: int = 10000, seed: int = 0,
                    confidence: float = 0.99, envelope_paths: int | None = None) -> dict:
    """Certificate and empirical containment check for the perturbation sandwich.

    Builds the abstraction of the ``theta1`` system, evaluates the grid-size
    inequality and the ledger radii, and when a property and initial state are
    given compares Monte Carlo intervals of the ``theta1`` system, the IMC
    interval, and an envelope over sampled ``theta2`` disturbance laws.
    ``envelope_paths`` (default ``paths``) sets the path count per envelope law.
    """
    report: dict = {"theta1": theta1, "theta2": theta2, "kappa": kappa}
    if eta is None:
        try:
            eta = max_eta(spec, theta1, theta2, kappa)
        except NoFeasibleEta as exc:
            report.update(eta=None, certified=False, error=str(exc))
            return report
    partition = build_partition(spec, eta)
    margin = completeness_margin(eta, partition.N, kappa, theta1, theta2)
    report["eta"] = eta
    report["margin"] = asdict(margin)
    report["certified"] = margin.satisfied
    spec1 = spec.with_theta(theta1)
    imc, ledger = build_imc(spec1, partition, kappa)
    report["row_gap"] = row_gap(imc)
    report["ledger"] = ledger.summary()

    if prop is not None and x0 is not None:
        q0 = partition.locate(x0)
        iv = check_property(imc, prop)[q0]
        report["initial_cell"] = q0
        report["imc_interval"] = [iv.lo, iv.hi]
        x1_policies = [PerturbationPolicy.none()]
        if theta1 > 0:
            x1_policies += _corner_policies(spec.n)
        x1 = []
        for pol in x1_policies:
            est = _mc(spec, partition, x0, prop, paths, seed, pol, theta1, confidence)
            x1.append({"policy": pol.describe(), "point": est.point,
                       "ci": [est.ci.lo, est.ci.hi],
                       "verdict": soundness_check(est.ci, iv)})
        x2 = []
        for pol in envelope_policies(spec.n):
            est = _mc(spec, partition, x0, prop, envelope_paths or paths, seed, pol, theta2,
                      confidence)
            x2.append({"policy": pol.describe(), "point": est.point, "ci": [est.ci.lo, est.ci.hi]})
        env = Interval(min(e["ci"][0] for e in x2), max(e["ci"][1] for e in x2))
        report["x1"] = x1
        report["x2"] = x2
        report["x2_envelope"] = [env.lo, env.hi]
        report["x1_inside_imc"] = all(e["verdict"] == PASS for e in x1)
        report["imc_inside_envelope"] = env.lo <= iv.lo and iv.hi <= env.hi
    return report


def report_json(report: dict) -> str:
    return json.dumps(_plain(report), indent=2, sort_keys=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def report_text(report: dict) -> str:
    lines = [f"theta1={report['theta1']} theta2={report['theta2']} kappa={report['kappa']}"]
    if report.get("eta") is None:
        lines.append(f"completeness inequality: not satisfiable ({report.get('error', '')})")
        return "\n".join(lines) + "\n"
    m = report["margin"]
    lines.append(f"eta={m['eta']!r} N={m['N']} ws={m['ws']!r} tv={m['tv']!r}")
    lines.append(f"lhs={m['lhs']!r} rhs={m['rhs']!r} satisfied={m['satisfied']}")
    led = report["ledger"]
    lines.append(f"membership radius={led['membership_radius']!r} recovery radius={led['recovery_radius']!r} "
                 f"row gap={report['row_gap']!r}")
    if "imc_interval" in report:
        lo, hi = report["imc_interval"]
        lines.append(f"initial cell {report['initial_cell']}: IMC [{lo!r}, {hi!r}]")
        for e in report["x1"]:
            lines.append(f"  X1 {e['policy']}: [{e['ci'][0]!r}, {e['ci'][1]!r}] {e['verdict']}")
        for e in report["x2"]:
            lines.append(f"  X2 {e['policy']}: [{e['ci'][0]!r}, {e['ci'][1]!r}]")
        env = report["x2_envelope"]
        lines.append(f"  X2 envelope [{env[0]!r}, {env[1]!r}]")
        lines.append(f"X1 inside IMC: {report['x1_inside_imc']}; "
                     f"IMC inside envelope: {report['imc_inside_envelope']}")
    return "\n".join(lines) + "\n"
