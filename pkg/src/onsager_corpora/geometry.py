"""Exact convex-polygon geometry used as an independent check on rhombus kernels."""

import numpy as np


def rhombus(angle):
    """Vertices (counter-clockwise) of the unit-side rhombus with smaller angle ``angle``.

    The rhombus is centered at the origin with its long diagonal on the x-axis.
    """
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return [(c, 0.0), (0.0, s), (-c, 0.0), (0.0, -s)]


def polygon_area(poly):
    """Shoelace area (absolute value)."""
    if len(poly) < 3:
        return 0.0
    x = np.array([p[0] for p in poly])
    y = np.array([p[1] for p in poly])
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip(subject, clipper):
    """Sutherland-Hodgman clipping of ``subject`` against convex ``clipper``.

    ``clipper`` must be listed counter-clockwise. Returns the vertex list of
    the intersection polygon, empty when the polygons are disjoint.
    """
    def inside(p, a, b):
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0

    def intersect(s, e, a, b):
        dcx, dcy = a[0] - b[0], a[1] - b[1]
        dpx, dpy = s[0] - e[0], s[1] - e[1]
        n1 = a[0] * b[1] - a[1] * b[0]
        n2 = s[0] * e[1] - s[1] * e[0]
        den = dcx * dpy - dcy * dpx
        return ((n1 * dpx - n2 * dcx) / den, (n1 * dpy - n2 * dcy) / den)

    output = list(subject)
    a = clipper[-1]
    for b in clipper:
        if not output:
            break
        inp, output = output, []
        s = inp[-1]
        for e in inp:
            if inside(e, a, b):
                if not inside(s, a, b):
                    output.append(intersect(s, e, a, b))
                output.append(e)
            elif inside(s, a, b):
                output.append(intersect(s, e, a, b))
            s = e
        a = b
    return output


def symmetric_difference_area(poly_a, poly_b):
    """Area of the symmetric difference of two convex CCW polygons."""
    inter = polygon_area(clip(poly_a, poly_b))
    return polygon_area(poly_a) + polygon_area(poly_b) - 2.0 * inter


def rhombus_symdiff_area(p, q):
    """Symmetric-difference area of the rhombi with angles ``p`` and ``q``."""
    return symmetric_difference_area(rhombus(p), rhombus(q))
