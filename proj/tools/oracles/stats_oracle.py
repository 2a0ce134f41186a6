"""Reference values frozen into the survey statistics tests.

power: scipy.stats.nct two-sided paired-t power.
ryan_joiner: Monte Carlo quantiles of the Blom-score correlation under
normality, to check the closed-form critical values."""
import numpy as np
from scipy import stats

grid = [(2, 2.0, 1.0), (3, 1.5, 1.0), (4, 1.0, 1.0), (4, 1.25, 0.5), (4, -0.75, 0.9),
        (5, 0.5, 1.2), (8, 0.8, 1.0), (10, 0.3, 1.0), (20, 0.5, 1.5), (30, -0.4, 1.0)]
print("power grid (n, mean_diff, sd_diff, alpha=0.05):")
for n, m, s in grid:
    df = n - 1
    nc = np.sqrt(n) * m / s
    tc = stats.t.ppf(0.975, df)
    p = stats.nct.sf(tc, df, nc) + stats.nct.cdf(-tc, df, nc)
    print(f"    {{{n}, {m}, {s}, {p!r}}},")

print("paired t x=[5,6,5,5] y=[4,4,4,4]:", stats.ttest_rel([5, 6, 5, 5], [4, 4, 4, 4]))

rng = np.random.default_rng(1)
for n in (4, 10, 20, 50):
    pos = (np.arange(1, n + 1) - 0.375) / (n + 0.25)
    b = stats.norm.ppf(pos)
    x = np.sort(rng.standard_normal((200000, n)), axis=1)
    xc = x - x.mean(axis=1, keepdims=True)
    r = (xc @ (b - b.mean())) / np.sqrt((xc ** 2).sum(axis=1) * ((b - b.mean()) ** 2).sum())
    print(n, {a: float(np.quantile(r, a)) for a in (0.10, 0.05, 0.01)})
