"""
Random paths and the module-sharing law
=======================================

Every task gets a random path through the module grid: N of the M modules
in each layer, chosen independently per layer. When many tasks draw paths
over the same grid, some cells end up shared by several tasks. Because a
cell lands on a given task's path with probability N/M, the number of
tasks using a cell is Binomial(k, N/M), and the expected number of cells
shared by exactly t tasks has a closed form. This script draws real path
assignments and compares the empirical sharing profile against that law.
"""

import numpy as np

from part import assign_random_path, sharing_profile
from part.analysis import expected_sharing_count

# the desk-scale analogue of a 12-modules-per-layer grid with 10 tasks,
# 4 modules per path
M, N, L, K = 12, 4, 8, 10

rng = np.random.default_rng(0)
paths = [assign_random_path(M, N, L, rng) for _ in range(K)]

profile = sharing_profile(paths, M, L)
print(f"one assignment of {K} tasks on a {L}x{M} grid (N={N}):")
for t in range(K + 1):
    count = profile.histogram.get(t, 0)
    bar = "#" * count
    print(f"  used by {t:2d} tasks: {count:3d} cells {bar}")

# averaging over many assignments recovers the binomial expectation
trials = 2000
sums = np.zeros(K + 1)
for _ in range(trials):
    ps = [assign_random_path(M, N, L, rng) for _ in range(K)]
    for t, c in sharing_profile(ps, M, L).histogram.items():
        sums[t] += c

print(f"\nmean sharing profile over {trials} assignments vs closed form:")
print(f"  {'t':>2} {'empirical':>10} {'binomial':>10}")
for t in range(K + 1):
    expect = expected_sharing_count(M, N, L, K, t)
    print(f"  {t:>2} {sums[t] / trials:>10.2f} {expect:>10.2f}")

expect4 = expected_sharing_count(M, N, L, K, 4)
print(f"\nat multiplicity 4 the law predicts {expect4:.1f} cells, i.e. about"
      " twenty modules end up shared by exactly four of the ten tasks.")
