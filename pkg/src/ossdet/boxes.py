"""Oriented bounding boxes: canonical parameters and corner conversions.

Canonical form is the long-edge convention: w >= h and theta in
[-pi/2, pi/2), which removes the (w,h,theta) <-> (h,w,theta+pi/2)
ambiguity before any loss or IoU computation. Exported corners are
counter-clockwise in image coordinates (y down).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

HALF_PI = math.pi / 2.0


def canonical_angle(theta: float) -> float:
    """Wrap an angle into [-pi/2, pi/2) modulo pi."""
    t = math.fmod(theta + HALF_PI, math.pi)
    if t < 0:
        t += math.pi
    return t - HALF_PI


@dataclass(frozen=True)
class OrientedBox:
    cx: float
    cy: float
    w: float
    h: float
    theta: float
    class_id: int = 0
    score: float | None = None

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box sides must be positive, got w={self.w} h={self.h}")

    def canonical(self) -> "OrientedBox":
        w, h, theta = self.w, self.h, self.theta
        if h > w:
            w, h = h, w
            theta = theta + HALF_PI
        return replace(self, w=w, h=h, theta=canonical_angle(theta))

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> np.ndarray:
        """4x2 corner array, counter-clockwise in image coordinates."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        hw, hh = self.w / 2.0, self.h / 2.0
        # With y pointing down, this ordering walks the rectangle CCW.
        local = np.array([[-hw, -hh], [-hw, hh], [hw, hh], [hw, -hh]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.cx, self.cy])

    def contains(self, x: float, y: float, shrink: float = 1.0) -> bool:
        c, s = math.cos(self.theta), math.sin(self.theta)
        dx, dy = x - self.cx, y - self.cy
        u = c * dx + s * dy
        v = -s * dx + c * dy
        return abs(u) <= shrink * self.w / 2.0 and abs(v) <= shrink * self.h / 2.0


def box_from_corners(corners: np.ndarray, class_id: int = 0,
                     score: float | None = None) -> OrientedBox:
    """Reconstruct a canonical box from a (possibly quantized) corner quad.

    The quad is treated as an approximate rectangle: the center is the
    corner mean, the orientation comes from the longer edge pair, and each
    side length is the mean of its two opposite edges. Applying this to the
    corners of an exact rectangle reproduces it; applying it twice to a
    quantized quad is a fixed point because corners are re-derived from the
    reconstructed box only at serialization time.
    """
    pts = np.asarray(corners, dtype=np.float64).reshape(4, 2)
    cx, cy = pts.mean(axis=0)
    e01 = pts[1] - pts[0]
    e12 = pts[2] - pts[1]
    e32 = pts[2] - pts[3]
    e03 = pts[3] - pts[0]
    len_a = (np.linalg.norm(e01) + np.linalg.norm(e32)) / 2.0  # side 0-1 / 3-2
    len_b = (np.linalg.norm(e12) + np.linalg.norm(e03)) / 2.0  # side 1-2 / 0-3
    if len_b >= len_a:
        direction = e12 + e03
        w, h = len_b, len_a
    else:
        direction = e01 + e32
        w, h = len_a, len_b
    theta = math.atan2(direction[1], direction[0])
    return OrientedBox(float(cx), float(cy), float(w), float(h),
                       canonical_angle(theta), class_id, score).canonical()
