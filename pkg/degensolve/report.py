"""Run reports and artifact files"""

import csv
from dataclasses import dataclass, field
import io
import json
import logging
import pathlib
import time
from typing import Any, Dict, List, Optional

from degensolve import __version__
from degensolve.basics import DegenSolveError, ExitStatus
from degensolve.verdict import Check, Verdict

# Summary file name in the output directory
REPORT_FILE = "report.json"


@dataclass
class Table:
    """Tabular result written as CSV"""
    columns: List[str]
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def text(self) -> str:
        """CSV text"""
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.columns)
        w.writeheader()
        for r in self.rows:
            w.writerow(r)
        return buf.getvalue()


class RunReport:
    """Report of one run, written even when the run fails"""
    def __init__(self, command: str, echo: Optional[Dict[str, Any]] = None):
        self.logger = logging.getLogger("runner")
        self.command = command
        self.echo = echo or {}
        self.results: Dict[str, Any] = {}
        self.checks: List[Check] = []
        self.tables: Dict[str, Table] = {}
        self.partial = False
        self.error: Optional[str] = None
        self.error_status: Optional[ExitStatus] = None
        self.start = time.monotonic()
        self.wall_time = 0.0

    def add_check(self, check: Check) -> Check:
        """Add an exercised assertion"""
        self.checks.append(check)
        self.logger.info("check %s", check)
        return check

    def add_table(self, name: str, columns: List[str], rows: List[Dict[str, Any]]) -> Table:
        """Add CSV table, written as <name>.csv"""
        t = Table(columns, rows)
        self.tables[name] = t
        return t

    def fail(self, error: DegenSolveError):
        """Record the error that stopped the run"""
        self.error = str(error)
        self.error_status = error.exit_status
        self.logger.error("%s failed: %s", self.command, error)

    def verdict(self) -> Verdict:
        """Aggregate verdict of the checks"""
        return Verdict.aggregate(*[c.verdict for c in self.checks])

    def exit_status(self) -> ExitStatus:
        """Exit status of the run"""
        if self.error_status is not None:
            return self.error_status
        if any(c.verdict == Verdict.FAIL for c in self.checks):
            return ExitStatus.ASSERTION
        if self.partial:
            return ExitStatus.PARTIAL
        return ExitStatus.SUCCESS

    def finish(self) -> 'RunReport':
        """Stop the wall clock"""
        self.wall_time = time.monotonic() - self.start
        return self

    def get_json(self) -> Dict[str, Any]:
        """Get as JSON"""
        js: Dict[str, Any] = {
            "command": self.command,
            "version": __version__,
            "config": self.echo,
            "results": self.results,
            "checks": [c.get_json() for c in self.checks],
            "verdict": self.verdict().value,
            "tables": {k: f"{k}.csv" for k in self.tables},
            "wall_time": self.wall_time,
            "exit_status": int(self.exit_status()),
        }
        if self.error:
            js["error"] = self.error
        return js

    def write(self, out: pathlib.Path) -> List[pathlib.Path]:
        """Write report JSON and CSV tables into the output directory"""
        out.mkdir(parents=True, exist_ok=True)
        files = []
        for name, t in self.tables.items():
            path = out / f"{name}.csv"
            with path.open("w", newline="", encoding="utf-8") as f:
                f.write(t.text())
            files.append(path)
        path = out / REPORT_FILE
        with path.open("w", encoding="utf-8") as f:
            json.dump(self.get_json(), f, indent=2, default=_json_default)
            f.write("\n")
        files.append(path)
        self.logger.info("wrote %s", ", ".join(p.name for p in files))
        return files


def _json_default(value: Any) -> Any:
    """Numpy scalars and complex numbers in JSON"""
    if isinstance(value, complex):
        return [value.real, value.imag]
    if hasattr(value, "tolist"):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")
