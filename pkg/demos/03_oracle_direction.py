# coding: utf-8

# # Finite differences and the direction of time
#
# The series solves D^a c = -L c with L containing +sigma^2/2 d^2. Marched
# forward in t that is a backward heat equation, and an L1 finite-difference
# scheme blows up. Flipping the sign gives a well-posed problem, which is
# used here as a control for the scheme itself.

# In[1]:

import numpy as np

from fracbs import GridSpec, ModelParams, OracleError, build_series, eval_series, mittag_leffler, parse_expr, solve_fd
from fracbs.oracle import max_relative_deviation

p = ModelParams(sigma1=0.4, sigma2=0.25, r=0.08, rho=0.75, alpha=0.5)
T = 8 / 12
lam = p.r - 0.5 * 0.16 * 0.25 - 0.5 * 0.0625 * 0.25 - 0.75 * 0.1 * 0.25


def run(nodes, steps, direction):
    s = build_series(parse_expr("exp(0.5*u + 0.5*v)"), p, 40, direction=direction)
    bc = lambda U, V, t: eval_series(s, {"u": U, "v": V}, t)
    g = solve_fd(p, s.terms[0], GridSpec(nu=nodes, nv=nodes, steps=steps, t_final=T), bc, direction=direction)
    U, V = np.meshgrid(g.u, g.v, indexing="ij")
    sign = 1.0 if direction == "series" else -1.0
    exact = np.exp(0.5 * U + 0.5 * V) * mittag_leffler(p.alpha, sign * lam * T**p.alpha).value
    return max_relative_deviation(g, exact)


# The diffusive control converges at roughly first order in the grid.

# In[2]:

coarse, fine = run(33, 200, "diffusive"), run(65, 400, "diffusive")
print(coarse, fine, coarse / fine)


# The series direction does not.

# In[3]:

try:
    print(run(33, 200, "series"))
except OracleError as err:
    print("oracle failed:", err)
