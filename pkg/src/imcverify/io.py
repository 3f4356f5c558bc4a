"""Configuration files, IMC documents and CSV results.

Configuration is TOML with three sections::

    [system]
    f = ["0.5*x1"]            # drift, one expression per state dimension
    b = [["0.5"]]             # n x k diffusion matrix (b b^T must be diagonal)
    theta = 0.0               # disturbance intensity
    W = [[-1.0, 1.0]]         # working box, one [lo, hi] per dimension
    # optional: n, k (checked against f and b), lipschitz = [L_f, L_b], name

    [labels]
    goal = [[[0.5, 1.0]]]     # proposition -> list of boxes

    [verify]                  # optional defaults for the command line
    eta = 0.25
    kappa = 0.025
    property = "P[ true U<=10 goal ]"
    x0 = [0.0]
"""

from __future__ import annotations

import csv
import io as _io
import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .expr import parse_expr
from .imc import Imc
from .intervals import IntervalBox
from .system import Region, SystemSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

IMC_FORMAT = "imcverify-imc"


@dataclass
class Config:
    spec: SystemSpec
    verify: dict = field(default_factory=dict)
    base_dir: Path = Path(".")


def _locate_text(source: str, needle: str) -> int | None:
    for lineno, line in enumerate(source.splitlines(), start=1):
        if needle in line:
            return lineno
    return None


def _expr(text, n, key, source):
    if not isinstance(text, (str, int, float)):
        raise ValidationError("expected an expression string", key=key)
    try:
        return parse_expr(str(text), n)
    except ParseError as exc:
        line = _locate_text(source, str(text)) if isinstance(text, str) else None
        raise ParseError(f"{key}: {exc.args[0].rsplit(' (', 1)[0]}", line, exc.column) from None


def _box(value, n, key) -> IntervalBox:
    try:
        pairs = [(float(lo), float(hi)) for lo, hi in value]
    except (TypeError, ValueError):
        raise ValidationError("expected a list of [lo, hi] pairs", key=key) from None
    if len(pairs) != n:
        raise ValidationError(f"expected {n} intervals, got {len(pairs)}", key=key)
    for lo, hi in pairs:
        if not lo <= hi:
            raise ValidationError(f"empty interval [{lo}, {hi}]", key=key)
    return IntervalBox.from_bounds(pairs)


def config_from_dict(doc: dict, source: str = "", base_dir=".") -> Config:
    system = doc.get("system")
    if not isinstance(system, dict):
        raise ValidationError("missing section", key="system")
    for key in ("f", "b", "W"):
        if key not in system:
            raise ValidationError("missing key", key=f"system.{key}")
    f_raw = system["f"]
    if isinstance(f_raw, str):
        f_raw = [f_raw]
    if not isinstance(f_raw, list) or not f_raw:
        raise ValidationError("expected a nonempty list of expressions", key="system.f")
    n = len(f_raw)
    if "n" in system and system["n"] != n:
        raise ValidationError(f"n = {system['n']} but f has {n} entries", key="system.n")
    f = tuple(_expr(t, n, f"system.f[{i}]", source) for i, t in enumerate(f_raw))
    b_raw = system["b"]
    if not isinstance(b_raw, list) or len(b_raw) != n or not all(isinstance(r, list) for r in b_raw):
        raise ValidationError(f"expected {n} rows of expressions", key="system.b")
    k = len(b_raw[0])
    if "k" in system and system["k"] != k:
        raise ValidationError(f"k = {system['k']} but b rows have {k} entries", key="system.k")
    b = tuple(tuple(_expr(t, n, f"system.b[{i}][{j}]", source) for j, t in enumerate(row))
              for i, row in enumerate(b_raw))
    W = _box(system["W"], n, "system.W")
    theta = system.get("theta", 0.0)
    if not isinstance(theta, (int, float)) or theta < 0:
        raise ValidationError("must be a nonnegative number", key="system.theta")
    lips = system.get("lipschitz")
    if lips is not None:
        if not (isinstance(lips, list) and len(lips) == 2):
            raise ValidationError("expected [L_f, L_b]", key="system.lipschitz")
        lips = (float(lips[0]), float(lips[1]))

    regions = []
    labels = doc.get("labels", {})
    if not isinstance(labels, dict):
        raise ValidationError("expected a table", key="labels")
    for name, boxes in labels.items():
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_\-]*", name) or name in ("true", "false"):
            raise ValidationError(f"invalid proposition name {name!r}", key=f"labels.{name}")
        if not isinstance(boxes, list) or not boxes:
            raise ValidationError("expected a list of boxes", key=f"labels.{name}")
        # a bare list of [lo, hi] pairs is shorthand for a single box
        if isinstance(boxes[0], list) and boxes[0] and not isinstance(boxes[0][0], list):
            boxes = [boxes]
        for j, box in enumerate(boxes):
            regions.append(Region(_box(box, n, f"labels.{name}[{j}]"), frozenset({name})))
    verify = doc.get("verify", {})
    if not isinstance(verify, dict):
        raise ValidationError("expected a table", key="verify")
    spec = SystemSpec(f=f, b=b, W=W, theta=float(theta), regions=tuple(regions),
                      name=str(system.get("name", "")), lipschitz_override=lips)
    return Config(spec, dict(verify), Path(base_dir))


def load_config(path) -> Config:
    path = Path(path)
    source = path.read_text(encoding="utf-8")
    try:
        doc = tomllib.loads(source)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc)
        m = re.search(r"\(at line (\d+), column (\d+)\)", msg)
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ParseError(re.sub(r"\s*\(at line.*\)", "", msg), line, col) from None
    return config_from_dict(doc, source, path.parent)


def parse_config(path) -> SystemSpec:
    """Read and validate a configuration file."""
    return load_config(path).spec


# --- IMC documents ---------------------------------------------------------------


def imc_to_dict(imc: Imc, extra: dict | None = None) -> dict:
    doc = {
        "format": IMC_FORMAT,
        "n_states": imc.n_states,
        "sink": imc.sink,
        "labels": [sorted(lab) for lab in imc.labels],
        "lower": [float(x) for x in imc.lower.ravel()],
        "upper": [float(x) for x in imc.upper.ravel()],
        "centers": None if imc.centers is None else imc.centers.tolist(),
        "delta_cost": imc.delta_cost,
    }
    if extra:
        doc.update(extra)
    return doc


def imc_from_dict(doc: dict) -> Imc:
    for key in ("n_states", "labels", "lower", "upper"):
        if key not in doc:
            raise ValidationError("missing field", key=key)
    n = int(doc["n_states"])
    lower = np.asarray(doc["lower"], dtype=float)
    upper = np.asarray(doc["upper"], dtype=float)
    if lower.size != n * n or upper.size != n * n:
        raise ValidationError(f"expected {n * n} entries", key="lower/upper")
    labels = tuple(frozenset(lab) for lab in doc["labels"])
    if len(labels) != n:
        raise ValidationError(f"expected {n} label sets", key="labels")
    centers = doc.get("centers")
    return Imc(lower.reshape(n, n), upper.reshape(n, n), labels,
               None if centers is None else np.asarray(centers, dtype=float),
               sink=bool(doc.get("sink", True)), delta_cost=doc.get("delta_cost"))


def save_imc(imc: Imc, path, extra: dict | None = None) -> None:
    Path(path).write_text(json.dumps(imc_to_dict(imc, extra)) + "\n", encoding="utf-8")


def load_imc_document(path) -> tuple[Imc, dict]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid IMC JSON: {exc.msg}", exc.lineno, exc.colno) from None
    return imc_from_dict(doc), doc


def load_imc(path) -> Imc:
    return load_imc_document(path)[0]


# --- CSV ------------------------------------------------------------------------------


def results_csv(lo, hi, verdicts=None) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["state", "lo", "hi", "verdict"])
    for i, (a, b) in enumerate(zip(lo, hi)):
        w.writerow([i, repr(float(a)), repr(float(b)), "" if verdicts is None else verdicts[i]])
    return buf.getvalue()
