"""Independent oracles for constants frozen into the C++ test suites.

Run with `python3 tests/oracles/frozen_values.py`; every printed value is
pasted verbatim into the corresponding test.
"""
import math

import numpy as np
from scipy import optimize, stats

# Half-integer Matern at distance d = l, written out by hand.
r = math.sqrt(5.0)
print("matern nu=5/2 d=l     :", repr((1 + r + r * r / 3) * math.exp(-r)))
print("matern nu=1/2 d=l     :", repr(math.exp(-1.0)))
r = math.sqrt(3.0)
print("matern nu=3/2 d=l     :", repr((1 + r) * math.exp(-r)))
r = math.sqrt(7.0)
print("matern nu=7/2 d=l     :", repr((1 + r + 2 * r * r / 5 + r ** 3 / 15) * math.exp(-r)))

# Max of m independent |N(0,1)|: P(max <= q) = (2 Phi(q) - 1)^m.
for m in (1, 10):
    q = optimize.brentq(lambda q: (2 * stats.norm.cdf(q) - 1) ** m - 0.95, 0.5, 6.0)
    print(f"sup-t quantile m={m:<3d}  :", repr(q))

# Composite trapezoid of t^2 on 51 equispaced points.
t = np.linspace(0.0, 1.0, 51)
print("trapezoid t^2 (51)    :", repr(float(getattr(np, "trapezoid", getattr(np, "trapz", None))(t * t, t))))

# Smallest eigenvalue of the 100-point nu=7/2 Matern matrix (l = 0.25).
t = np.linspace(0.0, 1.0, 100)
d = np.abs(t[:, None] - t[None, :])
r = math.sqrt(7.0) * d / 0.25
k = (1 + r + 2 * r * r / 5 + r ** 3 / 15) * np.exp(-r)
w = np.linalg.eigvalsh(k)
print("nu=7/2 m=100 min eig  :", repr(float(w.min())), " trace/m:", repr(float(np.trace(k) / 100)))

# Kolmogorov-Smirnov critical value at level 0.01 for 200 observations.
print("KS crit n=200 a=0.01  :", repr(float(stats.kstwo.ppf(0.99, 200))))
