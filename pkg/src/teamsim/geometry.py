"""Planar poses, rigid transforms, and keep-in region geometry."""
from __future__ import annotations

import math
from dataclasses import dataclass

TAU = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    r = math.remainder(theta, TAU)
    if r <= -math.pi:
        r += TAU
    return r


@dataclass(frozen=True)
class Pose2D:
    """Position in meters plus heading in radians, heading kept in (-pi, pi]."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValueError(f"non-finite pose ({self.x}, {self.y}, {self.theta})")
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def heading_error(self, other: "Pose2D") -> float:
        return normalize_angle(other.theta - self.theta)


@dataclass(frozen=True)
class Transform2D:
    """Rigid SE(2) map: p -> R(rotation) @ p + translation."""

    rotation: float
    translation: tuple[float, float]

    @staticmethod
    def identity() -> "Transform2D":
        return Transform2D(0.0, (0.0, 0.0))

    def apply(self, x: float, y: float) -> tuple[float, float]:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        tx, ty = self.translation
        return (c * x - s * y + tx, s * x + c * y + ty)

    def apply_pose(self, pose: Pose2D) -> Pose2D:
        x, y = self.apply(pose.x, pose.y)
        return Pose2D(x, y, pose.theta + self.rotation)

    def compose(self, other: "Transform2D") -> "Transform2D":
        """self after other: (self.compose(other)).apply(p) == self.apply(*other.apply(p))."""
        x, y = self.apply(*other.translation)
        return Transform2D(normalize_angle(self.rotation + other.rotation), (x, y))

    def inverse(self) -> "Transform2D":
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        tx, ty = self.translation
        return Transform2D(normalize_angle(-self.rotation), (-(c * tx + s * ty), s * tx - c * ty))


class RegionError(ValueError):
    pass


@dataclass(frozen=True)
class CircleRegion:
    """Disc keep-in region, boundary inclusive."""

    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise RegionError(f"radius must be positive, got {self.radius}")

    def contains(self, x: float, y: float) -> bool:
        return math.hypot(x - self.center[0], y - self.center[1]) <= self.radius

    def bounds(self) -> tuple[float, float, float, float]:
        cx, cy = self.center
        r = self.radius
        return (cx - r, cy - r, cx + r, cy + r)


@dataclass(frozen=True)
class PolygonRegion:
    """Convex polygon keep-in region, vertices counter-clockwise, boundary inclusive."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise RegionError("polygon needs at least 3 vertices")
        n = len(self.vertices)
        for i in range(n):
            ax, ay = self.vertices[i]
            bx, by = self.vertices[(i + 1) % n]
            cx, cy = self.vertices[(i + 2) % n]
            cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if cross < 0:
                raise RegionError("polygon vertices must wind counter-clockwise and be convex")
        area = 0.0
        for i in range(n):
            ax, ay = self.vertices[i]
            bx, by = self.vertices[(i + 1) % n]
            area += ax * by - bx * ay
        if area <= 0:
            raise RegionError("degenerate polygon")

    def contains(self, x: float, y: float) -> bool:
        n = len(self.vertices)
        for i in range(n):
            ax, ay = self.vertices[i]
            bx, by = self.vertices[(i + 1) % n]
            if (bx - ax) * (y - ay) - (by - ay) * (x - ax) < 0:
                return False
        return True

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return (min(xs), min(ys), max(xs), max(ys))


KeepInRegion = CircleRegion | PolygonRegion
