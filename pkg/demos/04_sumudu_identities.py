# coding: utf-8

# # Sumudu transform and fractional calculus
#
# The transform S[f](w) = int_0^inf e^{-t} f(w t) dt is computed by quadrature.
# The identity suite checks it against known pairs together with the Caputo
# derivative and the Riemann-Liouville integral.

# In[1]:

from fracbs import caputo_derivative, identity_suite, sumudu_transform
from fracbs.sumudu import exponential, power

print(sumudu_transform(power(2), 0.5))   # 2! * 0.5^2
print(sumudu_transform(exponential(1.0), 0.5))   # 1 / (1 - 0.5)
print(caputo_derivative(power(1), 0.5, 1.0))   # 1 / Gamma(1.5)


# In[2]:

for c in identity_suite(1e-5):
    print(f"{c.identity:28s} {c.function:10s} alpha={c.alpha} w={c.w}  dev {c.deviation:.1e}  {'PASS' if c.passed else 'FAIL'}")
