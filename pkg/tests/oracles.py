"""Independent reference computations used only by the tests."""

import numpy as np

from wglab.potential import J_array


def brute_force_I_Rc(spec, R, c, n_bins=64, sweeps=30, n_share=65):
    """Maximize sum t_k dlog_k over piecewise-constant deficits on log bins.

    Pairwise exchange: for each pair of bins the budget they share is
    redistributed by a grid search over the split, keeping the total cost fixed.
    """
    edges = np.geomspace(1.0, R, n_bins + 1)
    a = np.diff(np.log(edges))  # objective weight of bin k
    w = 0.5 * np.diff(edges**2)  # cost weight: J(t_k) * w_k
    # inverse of J on [0, 1] through a dense table of log J
    tt = np.geomspace(1e-8, 1.0, 40001)
    Jt = J_array(spec, tt)
    tt, logJ = tt[Jt > 1e-300], np.log(Jt[Jt > 1e-300])
    J1 = float(J_array(spec, np.array([1.0]))[0])

    def Jinv(v):
        v = np.asarray(v, float)
        out = np.interp(np.log(np.maximum(v, 1e-300)), logJ, tt)
        out[v < np.exp(logJ[0])] = 0.0  # below the table: round down, stay feasible
        return np.minimum(out, 1.0)

    # greedy fill from the inside: dead bins first while the budget allows
    t = np.zeros(n_bins)
    budget = c
    for k in range(n_bins):
        cost = min(budget, J1 * w[k])
        t[k] = Jinv(np.array([cost / w[k]]))[0]
        budget -= cost
        if budget <= 0:
            break
    share = np.linspace(0.0, 1.0, n_share)
    for _ in range(sweeps):
        improved = False
        for i in range(n_bins):
            for k in range(i + 1, n_bins):
                B = w[i] * J_array(spec, t[i:i + 1])[0] + w[k] * J_array(spec, t[k:k + 1])[0]
                if B <= 0:
                    continue
                ti = Jinv(share * B / w[i])
                tk = Jinv((1.0 - share) * B / w[k])
                obj = a[i] * ti + a[k] * tk
                m = int(np.argmax(obj))
                if obj[m] > a[i] * t[i] + a[k] * t[k] + 1e-13:
                    t[i], t[k] = ti[m], tk[m]
                    improved = True
        if not improved:
            break
    cost = float(np.sum(w * J_array(spec, t)))
    return float(np.sum(a * t)), cost
