"""Independent reference implementations used only by tests.

Deliberately written the dumb way (linear scans, exact Fractions,
statistics stdlib, no shared code with the package) so a bug in the
package cannot hide in a shared helper.
"""

from __future__ import annotations

import statistics
from datetime import timedelta
from fractions import Fraction

SIGMA_FLOORS = {
    "systolic": 1.0,
    "diastolic": 1.0,
    "pulse": 1.0,
    "spo2": 0.5,
    "bodyweight": 0.1,
}

SERIES_OF = {
    "systolic": "systolic",
    "diastolic": "diastolic",
    "pulse_rate": "pulse",
    "pulse": "pulse",
    "spo2": "spo2",
    "bodyweight": "bodyweight",
}

BAND_SEVERITY = {0: 0, 2: 1, 3: 2, 4: 3}


def band_of(distance: float, sigma: float) -> int:
    if distance > 4 * sigma:
        return 4
    if distance > 3 * sigma:
        return 3
    if distance > 2 * sigma:
        return 2
    return 0


def adaptive_oracle(series_points, reading_measurements, reading_ts, *,
                    min_prior=10, window_days=30, floors=SIGMA_FLOORS):
    """Worst severity code across sub-measurements, recomputed from scratch.

    series_points: dict series name -> list of (ts, value) in any order.
    """
    worst = 0
    for name, value in reading_measurements.items():
        series = SERIES_OF[name]
        pts = sorted(series_points.get(series, []))
        start = reading_ts - timedelta(days=window_days)
        window = [(t, v) for t, v in pts if start <= t < reading_ts]
        if len(window) < min_prior:
            continue
        values = [v for _t, v in window]
        mu = statistics.mean(values)
        sigma = max(statistics.stdev(values), floors[series])

        r1 = BAND_SEVERITY[band_of(abs(value - mu), sigma)]

        r2 = 0
        deltas = [values[i + 1] - values[i] for i in range(len(values) - 1)]
        if len(deltas) >= 2:
            sigma_d = max(statistics.stdev(deltas), floors[series])
            r2 = BAND_SEVERITY[band_of(abs(value - values[-1]), sigma_d)]

        r3 = 0
        seq = values + [value]
        for k in (4, 3, 2):
            run = 0
            for x in reversed(seq):
                if abs(x - mu) > k * sigma:
                    run += 1
                else:
                    break
            if run >= 3:
                r3 = BAND_SEVERITY[k]
                break

        worst = max(worst, r1, r2, r3)
    return worst


# --- chance-corrected agreement, computed in exact rational arithmetic -------
#
# All take per-item category-count tables: rows are items, columns the four
# ordinal categories 0..3, each row summing to the common rater count n.


def fleiss_oracle(table):
    """Plain multi-rater kappa as a Fraction, or None when chance = 1."""
    N = len(table)
    n = sum(table[0])
    p_bar = Fraction(0)
    for row in table:
        assert sum(row) == n
        p_bar += Fraction(sum(c * c for c in row) - n, n * (n - 1))
    p_bar /= N
    pj = [Fraction(sum(row[j] for row in table), N * n) for j in range(4)]
    pe = sum(p * p for p in pj)
    if pe == 1:
        return None
    return (p_bar - pe) / (1 - pe)


def weighted_fleiss_oracle(table, weights=None):
    """Ordinal-weighted generalization; default linear weights 1 - |i-j|/3."""
    if weights is None:
        weights = [[1 - Fraction(abs(i - j), 3) for j in range(4)] for i in range(4)]
    N = len(table)
    n = sum(table[0])
    p_bar = Fraction(0)
    for row in table:
        s = sum(weights[j][l] * row[j] * row[l] for j in range(4) for l in range(4))
        p_bar += Fraction(s - n, n * (n - 1))
    p_bar /= N
    pj = [Fraction(sum(row[j] for row in table), N * n) for j in range(4)]
    pe = sum(weights[j][l] * pj[j] * pj[l] for j in range(4) for l in range(4))
    if pe == 1:
        return None
    return (p_bar - pe) / (1 - pe)


def per_category_kappa_oracle(table, j):
    """Category-specific kappa, or None when the category is absent/universal."""
    N = len(table)
    n = sum(table[0])
    col = sum(row[j] for row in table)
    p = Fraction(col, N * n)
    if p in (0, 1):
        return None
    num = sum(row[j] * (n - row[j]) for row in table)
    return 1 - Fraction(num, N * n * (n - 1)) / (p * (1 - p))


def qwk_oracle(grid):
    """Quadratic-weighted Cohen kappa via the disagreement-weight identity.

    grid: 4x4 counts, rows = one rater, columns = the other, any consistent
    category order (quadratic distance only depends on index gaps).
    """
    total = sum(sum(row) for row in grid)
    rows = [sum(row) for row in grid]
    cols = [sum(row[j] for row in grid) for j in range(4)]
    observed = sum((i - j) ** 2 * grid[i][j] for i in range(4) for j in range(4))
    expected = sum((i - j) ** 2 * rows[i] * cols[j] for i in range(4) for j in range(4))
    if expected == 0:
        return None
    return 1 - Fraction(observed * total, expected)
