"""
Path Models - simulated trajectories of Z and X
"""
from typing import Any, Dict, List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class PathDiagnostics(BaseModel):
    """Counters collected while simulating one path"""
    n_proposed: int = Field(0, ge=0, description="Jumps proposed by the dominating kernel")
    n_accepted: int = Field(0, ge=0, description="Jumps applied to the path")
    n_gaussian: int = Field(0, ge=0, description="Gaussian increments applied")
    min_acceptance: float = Field(1.0, description="Smallest acceptance probability seen")
    max_acceptance: float = Field(1.0, description="Largest acceptance probability seen")


class PathSample(BaseModel):
    """
    One trajectory on [0, horizon].

    Events are stored column-wise: times (strictly increasing), axes
    (0-based internally, 1-based when exported), signed sizes and the
    accepted flags. gaussian has one row per inter-event interval
    (n_events + 1 rows), all zeros in Drop mode.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    path_index: int = Field(..., ge=0)
    horizon: float = Field(..., gt=0)
    start: np.ndarray
    times: np.ndarray
    axes: np.ndarray
    sizes: np.ndarray
    accepted: np.ndarray
    gaussian: np.ndarray
    diagnostics: PathDiagnostics = Field(default_factory=PathDiagnostics)

    @model_validator(mode="after")
    def _check_events(self) -> "PathSample":
        n = self.times.size
        if not (self.axes.size == self.sizes.size == self.accepted.size == n):
            raise ValueError("event columns differ in length")
        if self.gaussian.shape != (n + 1, self.start.size):
            raise ValueError("gaussian increments must have shape (n_events + 1, d)")
        if n and (np.any(np.diff(self.times) <= 0) or self.times[0] < 0 or self.times[-1] > self.horizon):
            raise ValueError("event times must be strictly increasing inside [0, horizon]")
        return self

    @property
    def dim(self) -> int:
        return self.start.size

    @property
    def n_events(self) -> int:
        return self.times.size

    def jump_matrix(self) -> np.ndarray:
        """Per-event displacement, shape (n_events, d); rejected events are zero rows"""
        jumps = np.zeros((self.n_events, self.dim))
        rows = np.arange(self.n_events)
        jumps[rows, self.axes] = np.where(self.accepted, self.sizes, 0.0)
        return jumps

    @property
    def terminal(self) -> np.ndarray:
        """start + Σ accepted jumps + Gaussian part"""
        return self.start + self.jump_matrix().sum(axis=0) + self.gaussian.sum(axis=0)

    def checkpoints(self) -> np.ndarray:
        """
        Positions in time order: before the first event, then after every
        Gaussian interval and every event; shape (2 n_events + 2, d).
        """
        n, d = self.n_events, self.dim
        steps = np.zeros((2 * n + 1, d))
        steps[0::2] = self.gaussian
        steps[1::2] = self.jump_matrix()
        return np.vstack([self.start[None, :], self.start + np.cumsum(steps, axis=0)])

    def checkpoint_times(self) -> np.ndarray:
        """Time stamp of every row of checkpoints()"""
        n = self.n_events
        stamps = np.empty(2 * n + 2)
        stamps[0] = 0.0
        stamps[1:-1:2] = self.times
        stamps[2:-1:2] = self.times
        stamps[-1] = self.horizon
        return stamps

    def summary(self) -> Dict[str, Any]:
        """NDJSON record"""
        return {
            "path_index": self.path_index,
            "terminal": self.terminal.tolist(),
            "n_events": int(self.n_events),
            "n_accepted": int(self.diagnostics.n_accepted),
        }

    def events(self) -> List[Dict[str, Any]]:
        """Full event dump with 1-based axes"""
        return [
            {"time": float(t), "axis": int(a) + 1, "size": float(s), "accepted": bool(ok)}
            for t, a, s, ok in zip(self.times, self.axes, self.sizes, self.accepted)
        ]
