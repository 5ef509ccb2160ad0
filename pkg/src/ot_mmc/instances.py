"""Problem instances: generators, JSON documents and CSV import.

Instance and report documents are JSON. Floats are written with Python's
shortest round-trip representation (at most 17 significant digits), so
``parse(write(x))`` reproduces every double exactly.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import SIMPLEX_ATOL, Cycle, SolveReport, TraceRecord

FORMAT_VERSION = 1
KINDS = ("ot", "mmc", "scale", "balance")
MARGINAL_KINDS = ("ot", "scale")
PRNG_NAME = "numpy.random.PCG64"


class ParseError(ValueError):
    """Malformed document; ``field`` names the offending entry."""

    def __init__(self, field, message, position=None):
        self.field = field
        self.position = position
        where = f" at {position}" if position else ""
        super().__init__(f"{field}{where}: {message}")


@dataclass
class ProblemInstance:
    kind: str
    cost: np.ndarray
    mu: Optional[np.ndarray] = None
    nu: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown instance kind {self.kind!r}")
        self.cost = np.asarray(self.cost, dtype=float)
        needs = self.kind in MARGINAL_KINDS
        for name in ("mu", "nu"):
            val = getattr(self, name)
            if needs and val is None:
                raise ValueError(f"{self.kind} instances need {name}")
            if not needs and val is not None:
                raise ValueError(f"{self.kind} instances take no {name}")
            if val is not None:
                setattr(self, name, np.asarray(val, dtype=float))
        self.metadata = {str(k): str(v) for k, v in self.metadata.items()}

    @property
    def n(self) -> int:
        return self.cost.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return a.shape == b.shape and np.array_equal(a, b)

        return (
            self.kind == other.kind
            and same(self.cost, other.cost)
            and same(self.mu, other.mu)
            and same(self.nu, other.nu)
            and self.metadata == other.metadata
        )


def _uniform_marginals(n):
    return np.full(n, 1.0 / n)


def gen_uniform_cost(n: int, seed: int, lo: float = 0.0, hi: float = 1.0,
                     kind: str = "ot") -> ProblemInstance:
    """Costs iid uniform on ``[lo, hi)``; uniform marginals for ot/scale kinds."""
    if n < 1:
        raise ValueError("n must be positive")
    if not lo < hi:
        raise ValueError("need lo < hi")
    rng = np.random.default_rng(seed)
    C = rng.uniform(lo, hi, size=(n, n))
    meta = {"generator": "uniform", "prng": PRNG_NAME, "seed": seed,
            "n": n, "lo": repr(float(lo)), "hi": repr(float(hi))}
    marg = _uniform_marginals(n) if kind in MARGINAL_KINDS else None
    return ProblemInstance(kind, C, marg, marg, meta)


def euclidean_cost(a, b, p: float = 2.0) -> np.ndarray:
    """``C_ij = ||a_i - b_j||_2 ** p``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1)) ** p


def euclidean_instance(a, b, p: float = 2.0, kind: str = "ot", metadata=None) -> ProblemInstance:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a, b = a[:, None], b[:, None]
    n = a.shape[0]
    meta = {"generator": "euclidean", "p": repr(float(p)),
            "points_a": json.dumps(a.tolist()), "points_b": json.dumps(b.tolist())}
    meta.update(metadata or {})
    marg = _uniform_marginals(n) if kind in MARGINAL_KINDS else None
    return ProblemInstance(kind, euclidean_cost(a, b, p), marg, marg, meta)


def gen_euclidean_ot(n: int, d: int, p: float, seed: int, kind: str = "ot") -> ProblemInstance:
    """p-Wasserstein cost between two clouds of n iid uniform points in [0,1]^d."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if p < 1:
        raise ValueError("p must be at least 1")
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(n, d))
    b = rng.uniform(size=(n, d))
    meta = {"prng": PRNG_NAME, "seed": seed, "n": n, "d": d}
    return euclidean_instance(a, b, p, kind, meta)


def regenerate(metadata: dict, kind: str = "ot") -> ProblemInstance:
    """Rebuild a generated instance from its recorded metadata."""
    gen = metadata.get("generator")
    if metadata.get("prng") != PRNG_NAME:
        raise ValueError(f"cannot regenerate: prng {metadata.get('prng')!r} is not {PRNG_NAME}")
    if gen == "uniform":
        return gen_uniform_cost(int(metadata["n"]), int(metadata["seed"]),
                                float(metadata["lo"]), float(metadata["hi"]), kind)
    if gen == "euclidean":
        return gen_euclidean_ot(int(metadata["n"]), int(metadata["d"]),
                                float(metadata["p"]), int(metadata["seed"]), kind)
    raise ValueError(f"unknown generator {gen!r}")


# -- documents ---------------------------------------------------------------

def _dumps(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=True) + "\n"


def _to_jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, Cycle):
        return list(value.vertices)
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    return value


def write_instance(inst: ProblemInstance) -> str:
    doc = {
        "version": FORMAT_VERSION,
        "kind": inst.kind,
        "n": inst.n,
        "cost": inst.cost.tolist(),
        "metadata": dict(inst.metadata),
    }
    if inst.mu is not None:
        doc["mu"] = inst.mu.tolist()
        doc["nu"] = inst.nu.tolist()
    return _dumps(doc)


def _load(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("document", exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    if not isinstance(doc, dict):
        raise ParseError("document", "top level must be an object")
    return doc


def _require(doc, key):
    if key not in doc:
        raise ParseError(key, "missing required field")
    return doc[key]


def _number(value, name, position=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(name, f"expected a number, got {value!r}", position)
    return float(value)


def _vector(value, name, n):
    if not isinstance(value, list):
        raise ParseError(name, "expected an array")
    if len(value) != n:
        raise ParseError(name, f"expected {n} entries, got {len(value)}")
    return np.array([_number(v, name, f"[{i}]") for i, v in enumerate(value)])


def _matrix(value, name, n):
    if not isinstance(value, list):
        raise ParseError(name, "expected an array of rows")
    if len(value) != n:
        raise ParseError(name, f"expected {n} rows, got {len(value)}")
    rows = []
    for i, row in enumerate(value):
        if not isinstance(row, list) or len(row) != n:
            raise ParseError(name, f"row must be an array of {n} numbers", f"[{i}]")
        rows.append([_number(v, name, f"[{i}][{j}]") for j, v in enumerate(row)])
    return np.array(rows, dtype=float).reshape(n, n)


def _check_version(doc):
    version = _require(doc, "version")
    if version != FORMAT_VERSION:
        raise ParseError("version", f"unsupported version {version!r}")


def parse_instance(text: str) -> ProblemInstance:
    doc = _load(text)
    _check_version(doc)
    kind = _require(doc, "kind")
    if kind not in KINDS:
        raise ParseError("kind", f"expected one of {KINDS}, got {kind!r}")
    n = _require(doc, "n")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ParseError("n", f"expected a positive integer, got {n!r}")
    cost = _matrix(_require(doc, "cost"), "cost", n)
    if not np.all(np.isfinite(cost)):
        bad = tuple(int(v) for v in np.argwhere(~np.isfinite(cost))[0])
        raise ParseError("cost", "entries must be finite (complete graph)", f"[{bad[0]}][{bad[1]}]")
    marg = {}
    for name in ("mu", "nu"):
        if kind in MARGINAL_KINDS:
            w = _vector(_require(doc, name), name, n)
            if np.any(w < 0):
                raise ParseError(name, "entries must be nonnegative")
            if abs(float(np.sum(w)) - 1.0) > SIMPLEX_ATOL:
                raise ParseError(
                    name, f"violates the simplex invariant: entries sum to {float(np.sum(w))!r}, not 1"
                )
            marg[name] = w
        elif name in doc:
            raise ParseError(name, f"not allowed for kind {kind!r}")
    meta = doc.get("metadata", {})
    if not isinstance(meta, dict) or not all(isinstance(v, str) for v in meta.values()):
        raise ParseError("metadata", "expected a map of strings")
    return ProblemInstance(kind, cost, marg.get("mu"), marg.get("nu"), meta)


def read_csv_matrix(text: str) -> np.ndarray:
    """Dense square matrix from n lines of n comma-separated decimals, no header."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    n = len(rows)
    if n == 0:
        raise ParseError("cost", "empty CSV matrix")
    out = np.empty((n, n))
    for i, row in enumerate(rows):
        if len(row) != n:
            raise ParseError("cost", f"expected {n} columns, got {len(row)}", f"line {i + 1}")
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise ParseError("cost", f"not a number: {cell!r}", f"line {i + 1} column {j + 1}") from None
    if not np.all(np.isfinite(out)):
        raise ParseError("cost", "entries must be finite")
    return out


def write_report(report: SolveReport) -> str:
    cert = report.certificate
    if isinstance(cert, Cycle):
        cert_doc = list(cert.vertices)
    elif cert is None:
        cert_doc = None
    else:
        cert_doc = np.asarray(cert).tolist()
    trace = []
    for rec in report.trace:
        item = {"iter": rec.iteration, "dual": rec.dual, "imbalance": rec.imbalance}
        if rec.extra:
            item["extra"] = _to_jsonable(rec.extra)
        trace.append(item)
    doc = {
        "version": FORMAT_VERSION,
        "kind": report.kind,
        "value": report.value,
        "lower_bound": report.lower_bound,
        "upper_bound": report.upper_bound,
        "iterations": report.iterations,
        "converged": report.converged,
        "certificate": cert_doc,
        "trace": trace,
    }
    if report.extra:
        doc["extra"] = _to_jsonable(report.extra)
    return _dumps(doc)


def parse_report(text: str) -> SolveReport:
    doc = _load(text)
    _check_version(doc)
    kind = _require(doc, "kind")
    if kind not in KINDS:
        raise ParseError("kind", f"expected one of {KINDS}, got {kind!r}")
    nums = {k: _number(_require(doc, k), k) for k in ("value", "lower_bound", "upper_bound")}
    iterations = _require(doc, "iterations")
    if isinstance(iterations, bool) or not isinstance(iterations, int):
        raise ParseError("iterations", "expected an integer")
    converged = _require(doc, "converged")
    if not isinstance(converged, bool):
        raise ParseError("converged", "expected true or false")

    cert = doc.get("certificate")
    if isinstance(cert, list) and cert and isinstance(cert[0], list):
        cert = _matrix(cert, "certificate", len(cert))
    elif isinstance(cert, list) and cert:
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in cert):
            raise ParseError("certificate", "cycle must be a list of vertex indices")
        cert = Cycle(tuple(cert))
    elif cert not in (None, []):
        raise ParseError("certificate", "expected a matrix or a vertex sequence")
    else:
        cert = None

    trace = []
    for t, item in enumerate(_require(doc, "trace")):
        if not isinstance(item, dict):
            raise ParseError("trace", "records must be objects", f"[{t}]")
        try:
            trace.append(
                TraceRecord(int(item["iter"]), _number(item["dual"], "trace", f"[{t}].dual"),
                            _number(item["imbalance"], "trace", f"[{t}].imbalance"),
                            dict(item.get("extra", {})))
            )
        except KeyError as exc:
            raise ParseError("trace", f"missing {exc.args[0]!r}", f"[{t}]") from None
    try:
        return SolveReport(kind, nums["value"], nums["lower_bound"], nums["upper_bound"],
                           iterations, converged, cert, trace, dict(doc.get("extra", {})))
    except ValueError as exc:
        raise ParseError("lower_bound", str(exc)) from None


def report_to_dict(report: SolveReport) -> dict:
    """Canonical JSON-compatible view, handy for comparisons."""
    return json.loads(write_report(report))
