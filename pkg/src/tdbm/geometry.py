"""Oriented rectangle overlap by the separating axis theorem, vectorised."""

import numpy as np


def rectangles_overlap(x1, y1, h1, l1, w1, x2, y2, h2, l2, w2):
    """Whether rectangle 1 and rectangle 2 intersect (touching counts).

    Each rectangle is given by its center, heading (radians), length along
    the heading and width across it. All arguments broadcast.
    """
    x1, y1, h1, l1, w1, x2, y2, h2, l2, w2 = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (x1, y1, h1, l1, w1, x2, y2, h2, l2, w2))
    )
    dx, dy = x2 - x1, y2 - y1
    c1, s1, c2, s2 = np.cos(h1), np.sin(h1), np.cos(h2), np.sin(h2)
    # axes: both rectangles' edge normals
    axes = ((c1, s1), (-s1, c1), (c2, s2), (-s2, c2))
    separated = np.zeros(dx.shape, dtype=bool)
    for ax, ay in axes:
        r1 = 0.5 * l1 * np.abs(c1 * ax + s1 * ay) + 0.5 * w1 * np.abs(-s1 * ax + c1 * ay)
        r2 = 0.5 * l2 * np.abs(c2 * ax + s2 * ay) + 0.5 * w2 * np.abs(-s2 * ax + c2 * ay)
        separated |= np.abs(dx * ax + dy * ay) > r1 + r2
    return ~separated


def rectangle_corners(x, y, heading, length, width):
    c, s = np.cos(heading), np.sin(heading)
    half = np.array([[length, width], [length, -width], [-length, -width], [-length, width]]) / 2.0
    rot = np.array([[c, -s], [s, c]])
    return half @ rot.T + np.array([x, y])
