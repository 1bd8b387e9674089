"""How fast does the variance of a sojourn functional grow?

Short memory makes sigma^2 grow like the space-time window volume.
Long memory in time (covariance ~ tau^{-A}) and space (~ z^{-alpha})
makes it grow faster.  We print the fitted log-log slope for a long-memory
separable model and the regime verdict for a short-memory one.
"""

import numpy as np

from lrdsojourn.covariance import ExponentialBaseline, Separable, check_lrd_conditions
from lrdsojourn.variance import sigma2_ball

Ts = np.array([16, 32, 64, 128, 256])
for name, model, gamma in (("separable A=0.4, alpha=1", Separable(alpha_s=1.0, A=0.4), 1.0),
                           ("exponential", ExponentialBaseline(1.0, 1.0), 1.0)):
    s2 = [sigma2_ball(1, 2, gamma, T, model).value for T in Ts]
    slope = np.polyfit(np.log(Ts), np.log(s2), 1)[0]
    verdict = check_lrd_conditions(model, 1, gamma, 2)
    print(f"{name:28s} slope {slope:.3f}  regime: {verdict.verdict} ({verdict.regime})")

# for the long-memory model the slope approaches 2 + 2 gamma d - A - gamma alpha = 4.6
