"""Report records and their JSON/CSV persistence."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

from pamlab.errors import UsageError


def _clean(x):
    """JSON-safe copy: non-finite floats become strings, tuples become lists."""
    if isinstance(x, float):
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item"):  # numpy scalar
        return _clean(x.item())
    return x


def _unclean(x):
    if isinstance(x, str) and x in ("nan", "inf", "-inf"):
        return float(x)
    if isinstance(x, dict):
        return {k: _unclean(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_unclean(v) for v in x]
    return x


@dataclass
class Check:
    name: str
    passed: bool
    lhs: float
    rhs: float
    tol: float
    one_sided: bool = False
    tags: list = field(default_factory=list)

    def to_dict(self):
        return {"name": self.name, "pass": bool(self.passed), "lhs": float(self.lhs), "rhs": float(self.rhs),
                "tol": float(self.tol), "one_sided": self.one_sided, "tags": list(self.tags)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["pass"], d["lhs"], d["rhs"], d["tol"], d.get("one_sided", False), d.get("tags", []))


def check_close(name, lhs, rhs, tol, tags=()):
    """Passes iff ``|lhs - rhs| <= tol``."""
    lhs, rhs, tol = float(lhs), float(rhs), float(tol)
    return Check(name, bool(abs(lhs - rhs) <= tol), lhs, rhs, tol, False, list(tags))


def check_le(name, lhs, rhs, tol=0.0, tags=()):
    """One-sided: passes iff ``lhs <= rhs + tol``."""
    lhs, rhs, tol = float(lhs), float(rhs), float(tol)
    return Check(name, bool(lhs <= rhs + tol), lhs, rhs, tol, True, list(tags))


@dataclass
class ExperimentReport:
    experiment: str
    params: dict
    seed: int
    estimates: list = field(default_factory=list)
    predictions: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    runtime_ms: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def estimate(self, name, value, stderr=float("nan")):
        self.estimates.append({"name": name, "value": float(value), "stderr": float(stderr)})

    def predict(self, name, value, band=0.0):
        self.predictions.append({"name": name, "value": float(value), "band": float(band)})

    def add(self, check: Check):
        self.checks.append(check)
        return check

    def to_dict(self, include_runtime=True):
        d = {"experiment": self.experiment, "params": self.params, "seed": int(self.seed),
             "estimates": self.estimates, "predictions": self.predictions,
             "checks": [c.to_dict() for c in self.checks]}
        if include_runtime:
            d["runtime_ms"] = float(self.runtime_ms)
        return _clean(d)

    @classmethod
    def from_dict(cls, d):
        d = _unclean(d)
        return cls(d["experiment"], d["params"], d["seed"], d["estimates"], d["predictions"],
                   [Check.from_dict(c) for c in d["checks"]], d.get("runtime_ms", 0.0))

    def canonical_json(self, include_runtime=False) -> str:
        return json.dumps(self.to_dict(include_runtime), sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        """Digest of everything except the wall-clock runtime."""
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, ExperimentReport):
            return NotImplemented
        return self.canonical_json(True) == other.canonical_json(True)


@dataclass
class SuiteReport:
    seed: int
    reports: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def checks(self):
        return [(r.experiment, c) for r in self.reports for c in r.checks]

    def to_dict(self, include_runtime=True):
        return {"seed": int(self.seed), "passed": self.passed,
                "reports": [r.to_dict(include_runtime) for r in self.reports]}

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(False), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _atomic_write(path, write):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".pamlab-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _rows(report):
    if isinstance(report, SuiteReport):
        for exp, c in report.checks:
            yield f"{exp}/{c.name}", c
    else:
        for c in report.checks:
            yield c.name, c


def export(report, format="json", path=None):
    """Write a report (or a suite of them) as JSON or as one CSV row per check.

    Files are written to a temporary sibling and renamed into place.
    """
    if format not in ("json", "csv"):
        raise UsageError(f"unknown export format {format!r}")
    if format == "json":
        def write(fh):
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        def write(fh):
            w = csv.writer(fh)
            w.writerow(["name", "pass", "lhs", "rhs", "tol"])
            for name, c in _rows(report):
                w.writerow([name, str(bool(c.passed)).lower(), repr(c.lhs), repr(c.rhs), repr(c.tol)])
    _atomic_write(path, write)


def load_report(path):
    with open(path) as fh:
        d = json.load(fh)
    if "reports" in d:
        return SuiteReport(d["seed"], [ExperimentReport.from_dict(r) for r in d["reports"]])
    return ExperimentReport.from_dict(d)
