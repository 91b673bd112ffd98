"""Smooth monotone ramp used to localize mass and momentum around each
soliton, and the partition of unity built from it.

The ramp is C3, rises from 0 (left of -1) to 1 (right of +1), and is
quartic near both ends: (1+s)^4/16 at the left, 1 - (1-s)^4/16 at the
right, joined on [-1/2, 1/2] by the unique degree-7 interpolant matching
value and three derivatives at both joints. The quartic matching gives
the square-root-type bounds (ramp')^2 <= C1 * ramp and
(ramp'')^2 <= C2 * ramp'; both constants are measured on a fine grid at
import rather than assumed.
"""

from __future__ import annotations

import numpy as np


def _hermite_middle():
    """Degree-7 coefficients (highest first) joining the quartic ends."""
    a, b = -0.5, 0.5
    rows, rhs = [], []
    # left joint: value/d1/d2/d3 of (1+s)^4/16 at s=-1/2
    left = [1.0 / 256.0, 1.0 / 32.0, 3.0 / 16.0, 3.0 / 4.0]
    # right joint: value/d1/d2/d3 of 1-(1-s)^4/16 at s=+1/2
    right = [255.0 / 256.0, 1.0 / 32.0, -3.0 / 16.0, 3.0 / 4.0]
    for s, vals in ((a, left), (b, right)):
        for order, target in enumerate(vals):
            row = np.zeros(8)
            for j in range(8):
                power = 7 - j
                if power >= order:
                    coeff = 1.0
                    for q in range(order):
                        coeff *= power - q
                    row[j] = coeff * s ** (power - order)
            rows.append(row)
            rhs.append(target)
    return np.linalg.solve(np.array(rows), np.array(rhs))


_MIDDLE = _hermite_middle()
_MIDDLE_D1 = np.polyder(_MIDDLE, 1)
_MIDDLE_D2 = np.polyder(_MIDDLE, 2)
_MIDDLE_D3 = np.polyder(_MIDDLE, 3)

# quartic end pieces as polynomials in s
_LEFT = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0          # (1+s)^4/16
_RIGHT = -np.array([1.0, -4.0, 6.0, -4.0, 1.0]) / 16.0      # 1-(1-s)^4/16
_RIGHT[-1] += 1.0


def _piecewise(s, polys):
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    left, lmid, rmid, right = s <= -1.0, (s > -1.0) & (s < -0.5), (s >= -0.5) & (s <= 0.5), s > 0.5
    rr = right & (s < 1.0)
    out[left] = polys["left_const"]
    out[lmid] = np.polyval(polys["left"], s[lmid])
    out[rmid] = np.polyval(polys["mid"], s[rmid])
    out[rr] = np.polyval(polys["right"], s[rr])
    out[s >= 1.0] = polys["right_const"]
    return out


def ramp(s):
    """The C3 cutoff itself, in [0, 1]."""
    return _piecewise(s, {
        "left_const": 0.0, "right_const": 1.0,
        "left": _LEFT, "mid": _MIDDLE, "right": _RIGHT,
    })


def ramp_d1(s):
    return _piecewise(s, {
        "left_const": 0.0, "right_const": 0.0,
        "left": np.polyder(_LEFT), "mid": _MIDDLE_D1, "right": np.polyder(_RIGHT),
    })


def ramp_d2(s):
    return _piecewise(s, {
        "left_const": 0.0, "right_const": 0.0,
        "left": np.polyder(_LEFT, 2), "mid": _MIDDLE_D2, "right": np.polyder(_RIGHT, 2),
    })


def ramp_d3(s):
    return _piecewise(s, {
        "left_const": 0.0, "right_const": 0.0,
        "left": np.polyder(_LEFT, 3), "mid": _MIDDLE_D3, "right": np.polyder(_RIGHT, 3),
    })


def _measure_constants():
    s = np.linspace(-1.0, 1.0, 20001)
    y, d1, d2 = ramp(s), ramp_d1(s), ramp_d2(s)
    sel1 = y > 1e-14
    c1 = float(np.max(d1[sel1] ** 2 / y[sel1]))
    sel2 = d1 > 1e-14
    c2 = float(np.max(d2[sel2] ** 2 / d1[sel2]))
    return c1, c2


#: measured constants in (ramp')^2 <= C1 ramp and (ramp'')^2 <= C2 ramp'
RAMP_C1, RAMP_C2 = _measure_constants()


def partition(grid, divides, width: float):
    """Partition of unity along the first axis with ramps centered at the
    given divide positions (length K-1, ascending): weight k covers the
    k-th window.

    Returns an array of shape (K, nx, 1) whose sum over k is 1 up to
    round-off. With no divides the single weight is identically 1.
    """
    x = grid.x.reshape(-1, 1)
    if len(divides) == 0:
        return np.ones((1, grid.nx, 1))
    ramps = [ramp((x - d) / width) for d in divides]
    weights = [1.0 - ramps[0]]
    for i in range(len(divides) - 1):
        weights.append(ramps[i] - ramps[i + 1])
    weights.append(ramps[-1])
    return np.stack(weights)
