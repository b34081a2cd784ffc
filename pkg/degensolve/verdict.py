"""Verdicts and related classes"""

import enum
from dataclasses import dataclass
from typing import Any, Dict, Optional


class Verdict(enum.Enum):
    """Verdict for an acceptance check"""
    INCON = "Incon"                # Not evaluated or inconclusive
    FAIL = "Fail"                  # Assertion violated
    PASS = "Pass"                  # Assertion holds

    @classmethod
    def of(cls, value: bool) -> 'Verdict':
        """Verdict from boolean outcome"""
        return cls.PASS if value else cls.FAIL

    @classmethod
    def aggregate(cls, *verdicts: 'Verdict') -> 'Verdict':
        """Resolve aggregate verdict, any failure fails"""
        if not verdicts:
            return Verdict.INCON
        v_set = set(verdicts)
        for s in [Verdict.FAIL, Verdict.PASS]:
            if s in v_set:
                return s
        return Verdict.INCON


@dataclass
class Check:
    """Outcome of one exercised assertion"""
    name: str
    verdict: Verdict
    value: Optional[float] = None
    bound: Optional[Any] = None
    explanation: str = ""

    @classmethod
    def at_most(cls, name: str, value: float, bound: float, explanation="") -> 'Check':
        """Check value <= bound"""
        return Check(name, Verdict.of(bool(value <= bound)), float(value), bound, explanation)

    @classmethod
    def at_least(cls, name: str, value: float, bound: float, explanation="") -> 'Check':
        """Check value >= bound"""
        return Check(name, Verdict.of(bool(value >= bound)), float(value), bound, explanation)

    @classmethod
    def within(cls, name: str, value: float, low: float, high: float, explanation="") -> 'Check':
        """Check low <= value <= high"""
        return Check(name, Verdict.of(bool(low <= value <= high)), float(value), [low, high], explanation)

    def get_json(self) -> Dict:
        """Get check as JSON"""
        js: Dict[str, Any] = {"name": self.name, "verdict": self.verdict.value}
        if self.value is not None:
            js["value"] = self.value
        if self.bound is not None:
            js["bound"] = self.bound
        if self.explanation:
            js["exp"] = self.explanation
        return js

    def __repr__(self):
        v = f"{self.name}={self.verdict.value}"
        if self.value is not None:
            v += f" ({self.value:.6g} vs {self.bound})"
        return v
