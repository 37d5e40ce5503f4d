"""Plan and trajectory files, written atomically."""
from __future__ import annotations

import io
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .control import CaratheodoryReport, ControlPlan, SimulationResult
from .exceptions import ScenarioError
from .mintime import MinimalTimeReport

PLAN_FORMAT = "crowdctl-plan/1"


def atomic_write(path, text: str) -> None:
    """Write to a temporary sibling, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class PlanFile:
    plan: ControlPlan
    report: MinimalTimeReport
    scenario_hash: str
    mode: str
    verification: Optional[dict] = None

    def to_json(self) -> str:
        data = {
            "format": PLAN_FORMAT,
            "scenario_hash": self.scenario_hash,
            "mode": self.mode,
            "report": self.report.to_dict(),
            "plan": self.plan.to_dict(),
            "verification": self.verification,
        }
        return json.dumps(data, indent=1, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str, source: str = "<plan>") -> "PlanFile":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        if not isinstance(data, dict) or data.get("format") != PLAN_FORMAT:
            raise ScenarioError(f"{source}: not a {PLAN_FORMAT} file")
        try:
            return cls(ControlPlan.from_dict(data["plan"]),
                       MinimalTimeReport.from_dict(data["report"]),
                       data["scenario_hash"], data["mode"], data.get("verification"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"{source}: malformed plan ({exc})") from None


def verification_dict(rep: CaratheodoryReport) -> dict:
    return {"sup_norm": rep.sup_norm, "bound": rep.bound,
            "lipschitz_ratio": rep.lipschitz_ratio, "lipschitz_budget": rep.lipschitz_budget,
            "samples": rep.samples, "passed": rep.passed}


def save_plan(path, planfile: PlanFile) -> None:
    atomic_write(path, planfile.to_json())


def load_plan(path) -> PlanFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read plan {path}: {exc.strerror}") from None
    return PlanFile.from_json(text, str(path))


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def trajectory_csv(result: SimulationResult) -> str:
    """Rows ``t,agent,x0,...`` with 17 significant digits, time-major."""
    n, d = result.trajectories.shape[1:]
    buf = io.StringIO()
    buf.write(",".join(["t", "agent"] + [f"x{k}" for k in range(d)]) + "\n")
    for t, frame in zip(result.times, result.trajectories):
        ts = _fmt(float(t))
        for i in range(n):
            buf.write(ts + f",{i}," + ",".join(_fmt(float(c)) for c in frame[i]) + "\n")
    return buf.getvalue()


def simulation_summary(result: SimulationResult, horizon: float) -> dict:
    return {"T": horizon, "endpoint_error": result.endpoint_error,
            "control_sup_norm": result.control_sup_norm,
            "matching": [int(j) for j in result.matching],
            "rows": int(result.trajectories.shape[0] * result.trajectories.shape[1])}


def read_trajectory_csv(path):
    """Inverse of :func:`trajectory_csv`: ``(times, agents, coords)`` arrays."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1].astype(int), data[:, 2:]
