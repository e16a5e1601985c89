# coding: utf-8

# # Series solutions on an exponential payoff
#
# In log coordinates the pricing operator maps exp(a*u + b*v) onto a multiple of
# itself, so the fractional series collapses to a single Mittag-Leffler function.
# That makes it a good first check of the recursion.

# In[1]:

import math

import numpy as np

from fracbs import ModelParams, build_series, eval_series, mittag_leffler, parse_expr, to_text


# Model parameters: two volatilities, a rate, a correlation and the fractional order.

# In[2]:

p = ModelParams(sigma1=0.4, sigma2=0.25, r=0.08, rho=0.75, alpha=0.5)
a, b = 0.5, -0.5
lam = p.r - 0.5 * p.sigma1**2 * a * a - 0.5 * p.sigma2**2 * b * b - p.rho * p.sigma1 * p.sigma2 * a * b
print("eigenvalue", lam)


# Build 40 terms. Each one should be lam^n times the payoff.

# In[3]:

s = build_series(parse_expr(f"exp({a}*u + {b}*v)"), p, 40)
for n in range(4):
    print(n, to_text(s.terms[n]))


# Compare with the closed form on a few random points.

# In[4]:

rng = np.random.default_rng(1)
u, v, t = rng.uniform(-1, 1, 5), rng.uniform(-1, 1, 5), rng.uniform(0, 1, 5)
got = eval_series(s, {"u": u, "v": v}, t)
exact = np.exp(a * u + b * v) * [mittag_leffler(p.alpha, lam * x**p.alpha).value for x in t]
print(np.abs(got - exact) / np.abs(exact))


# At alpha = 1 the Mittag-Leffler function is exp, so the classical limit follows.

# In[5]:

flat = ModelParams(0.0, 0.0, 0.08, 0.0, 1.0)
print(eval_series(build_series(parse_expr("100"), flat, 25), {"u": 0.0, "v": 0.0}, 1.0), 100 * math.exp(0.08))
