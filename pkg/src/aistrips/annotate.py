"""Mobility-event annotation of cleaned per-vessel point streams.

Each point gets a flag set describing detected events: stops, communication
gaps, significant speed changes, sustained slow motion, turns (abrupt or
smooth against the windowed velocity vector), and spike noise. A point may
carry several flags at once; heading changes while stopped or in slow
motion are ignored as sea drift.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Flag, auto
from typing import Deque, Dict, List, Optional, Sequence, Tuple

from .core import AisPoint, circular_mean_deg, heading_delta


class Annotation(Flag):
    NONE = 0
    STOP = auto()
    GAP_START = auto()
    GAP_END = auto()
    SPEED_CHANGE = auto()
    SLOW_MOTION = auto()
    TURN = auto()
    NOISE = auto()


FLAG_NAMES = ("STOP", "GAP_START", "GAP_END", "SPEED_CHANGE", "SLOW_MOTION", "TURN", "NOISE")


@dataclass
class AnnotatedPoint:
    point: AisPoint
    flags: Annotation = Annotation.NONE


@dataclass(frozen=True)
class AnnotationParams:
    """Detection thresholds; override per ship type via ``overrides``.

    Defaults: stops below 0.5 knots, gaps beyond 30 minutes of silence,
    speed changes beyond a 25% ratio against the windowed mean, slow motion
    below 1 knot sustained for 5 minutes, turns beyond 5 degrees.
    """

    stop_speed_knots: float = 0.5
    gap_seconds: float = 1800.0
    speed_change_ratio: float = 0.25
    slow_speed_knots: float = 1.0
    turn_degrees: float = 5.0
    slow_sustain_seconds: float = 300.0
    noise_return_degrees: float = 170.0
    window_mode: str = "count"  # "count" or "time"
    window_count: int = 10
    window_seconds: float = 600.0
    overrides: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def for_ship_type(self, ship_type: str) -> "AnnotationParams":
        ov = self.overrides.get(ship_type)
        if not ov:
            return self
        return replace(self, **ov)


class VelocityState:
    """Windowed velocity vector over a vessel's recent points.

    Holds the last N points (count mode) or the points within W seconds of
    the newest (time mode); exposes their mean speed and circular mean
    bearing. Also tracks the start of the current low-speed run, used for
    the sustained slow-motion rule.
    """

    def __init__(self, mode: str = "count", count: int = 10, seconds: float = 600.0):
        if mode not in ("count", "time"):
            raise ValueError(f"unknown window mode {mode!r}")
        self.mode = mode
        self.count = count
        self.seconds = seconds
        self.samples: Deque[Tuple[int, float, float]] = deque()  # (ts, sog, cog)
        self.slow_run_start: Optional[int] = None

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def mean_speed(self) -> float:
        if not self.samples:
            raise ValueError("empty velocity window")
        return sum(s[1] for s in self.samples) / len(self.samples)

    @property
    def mean_bearing(self) -> float:
        if not self.samples:
            raise ValueError("empty velocity window")
        return circular_mean_deg(s[2] for s in self.samples)

    def push(self, p: AisPoint) -> None:
        self.samples.append((p.ts, p.sog, p.cog))
        if self.mode == "count":
            while len(self.samples) > self.count:
                self.samples.popleft()
        else:
            while self.samples and self.samples[0][0] < p.ts - self.seconds:
                self.samples.popleft()


def update_velocity(state: VelocityState, p: AisPoint) -> VelocityState:
    """Fold one point into the window; trims per mode, returns the state."""
    state.push(p)
    return state


def annotate_point(
    p: AisPoint,
    prev: Optional[AisPoint],
    state: VelocityState,
    params: AnnotationParams,
) -> Annotation:
    """Flags for one point given its predecessor and the prior-window state.

    The state must not yet include ``p``. GAP_END lands on ``p``; the
    matching GAP_START on the predecessor is the stream driver's job.
    Tracks the low-speed run on the state for the sustained rule.
    """
    flags = Annotation.NONE

    if p.sog < params.stop_speed_knots:
        flags |= Annotation.STOP

    if prev is not None and p.ts - prev.ts > params.gap_seconds:
        flags |= Annotation.GAP_END

    if len(state) > 0:
        mean = state.mean_speed
        denom = max(mean, 0.5)  # avoid flag storms at near-zero baselines
        if abs(p.sog - mean) / denom > params.speed_change_ratio:
            flags |= Annotation.SPEED_CHANGE

    if p.sog < params.slow_speed_knots:
        if state.slow_run_start is None:
            state.slow_run_start = p.ts
        sustained = p.ts - state.slow_run_start >= params.slow_sustain_seconds
        if sustained and not (flags & Annotation.STOP):
            flags |= Annotation.SLOW_MOTION
    else:
        state.slow_run_start = None

    if not (flags & (Annotation.STOP | Annotation.SLOW_MOTION)):
        abrupt = prev is not None and abs(heading_delta(prev.cog, p.cog)) > params.turn_degrees
        smooth = len(state) > 0 and abs(heading_delta(state.mean_bearing, p.cog)) > params.turn_degrees
        if abrupt or smooth:
            flags |= Annotation.TURN

    return flags


def annotate_stream(
    points: Sequence[AisPoint], params: AnnotationParams
) -> List[AnnotatedPoint]:
    """Annotate a cleaned, strictly time-ordered single-vessel stream.

    Output preserves order and length. Thresholds are resolved once from
    the first point's ship type.
    """
    if not points:
        return []
    eff = params.for_ship_type(points[0].ship_type)
    state = VelocityState(eff.window_mode, eff.window_count, eff.window_seconds)
    out: List[AnnotatedPoint] = []
    prev: Optional[AisPoint] = None
    for p in points:
        flags = annotate_point(p, prev, state, eff)
        if flags & Annotation.GAP_END and out:
            out[-1].flags |= Annotation.GAP_START
        out.append(AnnotatedPoint(p, flags))
        update_velocity(state, p)
        prev = p

    # spike noise: heading flips nearly opposite and back within two reports
    if not math.isinf(eff.noise_return_degrees):
        for i in range(1, len(out) - 1):
            before = abs(heading_delta(out[i - 1].point.cog, out[i].point.cog))
            after = abs(heading_delta(out[i].point.cog, out[i + 1].point.cog))
            if before > eff.noise_return_degrees and after > eff.noise_return_degrees:
                out[i].flags |= Annotation.NOISE
    return out


def flags_to_names(flags: Annotation) -> List[str]:
    return [name for name in FLAG_NAMES if flags & Annotation[name]]
