"""Circular flight trajectories and per-slot fleet geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple


class Position3(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class TrajectoryParams:
    """Uniform circular orbit of one UAV around a fixed center.

    Lengths in meters, angles in radians, angular velocity in rad/s
    (the sign encodes the rotation direction). A radius of zero models a
    hovering node.
    """

    center_x: float
    center_y: float
    center_z: float
    radius: float
    angular_velocity: float
    initial_phase: float = 0.0

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")
        if self.center_z <= 0:
            raise ValueError(f"center_z must be > 0 (airborne), got {self.center_z}")
        if not math.isfinite(self.angular_velocity):
            raise ValueError("angular_velocity must be finite")


@dataclass(frozen=True)
class SlotGrid:
    """Division of the topology period into equal slots.

    The slot length is primary; the period is always slot_length * slot_count.
    """

    slot_length: float
    slot_count: int

    def __post_init__(self):
        if self.slot_count < 1:
            raise ValueError(f"slot_count must be >= 1, got {self.slot_count}")
        if not (self.slot_length > 0 and math.isfinite(self.slot_length)):
            raise ValueError(f"slot_length must be positive and finite, got {self.slot_length}")

    @property
    def period(self) -> float:
        return self.slot_length * self.slot_count

    def slot_start(self, k: int) -> float:
        """Absolute start time of 1-based slot k."""
        return (k - 1) * self.slot_length


def position_at(traj: TrajectoryParams, t: float) -> Position3:
    """Position on the orbit at time t seconds."""
    phase = traj.initial_phase + traj.angular_velocity * t
    return Position3(
        traj.center_x + traj.radius * math.cos(phase),
        traj.center_y + traj.radius * math.sin(phase),
        traj.center_z,
    )


def distance(traj_i: TrajectoryParams, traj_j: TrajectoryParams, t: float) -> float:
    """Euclidean distance in meters between two UAVs at time t."""
    return math.dist(position_at(traj_i, t), position_at(traj_j, t))


def sample_fleet(
    fleet: list[TrajectoryParams] | tuple[TrajectoryParams, ...],
    grid: SlotGrid,
    sample_rule: str = "start",
) -> list[list[Position3]]:
    """One representative position per (UAV, slot).

    ``sample_rule`` picks the instant inside each slot at which the topology
    is frozen: "start" evaluates at (k-1)*dt, "midpoint" at (k-0.5)*dt.
    Returns a p x n table indexed [uav][slot], both 0-based.
    """
    if not fleet:
        raise ValueError("fleet must be nonempty")
    if sample_rule not in ("start", "midpoint"):
        raise ValueError(f"unknown sample_rule {sample_rule!r} (expected 'start' or 'midpoint')")
    offset = 0.0 if sample_rule == "start" else 0.5
    return [
        [position_at(traj, (k + offset) * grid.slot_length) for k in range(grid.slot_count)]
        for traj in fleet
    ]
