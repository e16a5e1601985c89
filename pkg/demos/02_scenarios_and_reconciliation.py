# coding: utf-8

# # Built-in scenarios and the fixture tables
#
# Each scenario bundles a payoff, parameters, a price grid and a transcribed
# table of published values. Pricing gives a 5x5 table; reconciliation puts it
# next to the fixture.

# In[1]:

import numpy as np

from fracbs import load_builtin, price_grid, reconcile
from fracbs.pricing import builtin_ids

print(builtin_ids())


# ex3 carries a closed form as well. Its values disagree with the fixture by
# orders of magnitude, and the report says so.

# In[2]:

sc = load_builtin("ex3")
table = price_grid(sc)
print(table.to_csv(precision=4, matrix=True))
print(reconcile(table, sc).to_text())


# The truncation bound is the largest last-included term over the grid.
# Adding five more terms should move prices by less than that.

# In[3]:

for sid in builtin_ids():
    sc = load_builtin(sid)
    p25, p30 = price_grid(sc, 25), price_grid(sc, 30)
    diff = float(np.max(np.abs(p30.prices - p25.prices)))
    print(f"{sid:14s} diff {diff:9.3g}  tail {p25.tail_bound:9.3g}  converged {p25.converged}")


# ex1-literal reads the payoff's s1, s2 as log prices but evaluates exp(s1) at
# s1 = 150, so prices and tails are both near e^150. Relative to the prices
# the tail is tiny.
#
# ex5 does not converge. The s1*sin(s1) payoff picks up a power of s1 with each
# application of the asset-mode operator, and s1 reaches 150 on the grid.
