"""Independent reference values frozen into the C++ unit tests.

Run with numpy + scipy; prints name = value lines. Matrices are built from the
closed-form pattern M[i, j] = sin(offset + 0.7 i + 1.3 j), reproduced in C++ by
tests/test_util.hpp::pattern.
"""
import itertools
import math

import numpy as np
from scipy.optimize import linprog


def pattern(rows, cols, offset):
    i = np.arange(rows)[:, None]
    j = np.arange(cols)[None, :]
    return np.sin(offset + 0.7 * i + 1.3 * j)


def show(name, value):
    if np.ndim(value) == 0:
        print(f"{name} = {float(value)!r}")
    else:
        print(f"{name} = {[float(v) for v in np.ravel(value)]!r}")


def exact_pot(c, a, b, s):
    n, m = c.shape
    a_ub = np.zeros((n + m, n * m))
    for i in range(n):
        a_ub[i, i * m:(i + 1) * m] = 1
    for j in range(m):
        a_ub[n + j, j::m] = 1
    res = linprog(c.ravel(), A_ub=a_ub, b_ub=np.concatenate([a, b]), A_eq=np.ones((1, n * m)), b_eq=[s],
                  bounds=(0, None), method="highs")
    return res.fun


def log_softmax(x):
    x = x - x.max(axis=-1, keepdims=True)
    return x - np.log(np.exp(x).sum(axis=-1, keepdims=True))


# partial OT
c = np.array([[0.2, 0.9], [0.8, 0.1]])
show("pot_2x2_s2", exact_pot(c, np.ones(2), np.ones(2), 2))
c34 = (1 + pattern(3, 4, 0.3)) / 2
for s in (0.5, 1.0, 1.7, 2.0, 3.0):
    show(f"pot_3x4_s{s}", exact_pot(c34, np.ones(3), np.ones(4), s))
show("pot_3x4_frac", exact_pot(c34, np.array([0.5, 1.2, 0.8]), np.array([0.3, 0.9, 0.4, 1.1]), 1.6))

# contrastive
s = np.array([[1.0, -1.0], [-1.0, 1.0]])
show("infonce_identity_like", -log_softmax(s[0])[0])
lam = np.arccos(np.array([0.8, 0.1]))
logits = np.array([math.cos(max(lam[0] - 0.2, 0.0)), math.cos(lam[1])])
show("angular_b2", -log_softmax(logits)[0])
s3 = np.array([[0.7, 0.2, -0.3], [0.1, 0.9, 0.4], [-0.5, 0.3, 0.6]])
lam = np.arccos(s3[:, 1])  # text-to-video, anchor 1: column 1
logits = np.cos(lam) / 0.5
logits[1] = math.cos(max(lam[1] - 0.3, 0.0)) / 0.5
show("angular_b3_tv", -log_softmax(logits)[1])
show("infonce_b3_tv", -log_softmax(s3[:, 1] / 0.5)[1])
h = 1e-6
show("darccos_half", (math.acos(0.5 + h) - math.acos(0.5 - h)) / (2 * h))

# ssm kernel, d_S = 2
lam = np.array([-0.5, -2.0])
cc = np.array([[1.0, 0.5], [-0.25, 2.0]])
delta = 0.7
e = (np.exp(lam * delta) - 1) / lam
k = np.array([[(e * cc[:, ch] * np.exp(lam * delta * j)).sum() for j in range(4)] for ch in range(2)])
show("ssm_kernel_2x4", k)

# temporal losses
def pair_term(a, negs):
    return -(a - np.logaddexp.reduce(np.concatenate([[a], negs])))


z = [pattern(8, 3, 0.1), pattern(4, 3, 0.9), pattern(2, 3, 2.0)]
pos = [[1, 2, 5], [0, 2], [1]]
neg = [[0, 7], [1, 3], [0]]
within = 0.0
for l in range(1, 3):
    if len(pos[l]) < 2:
        continue
    for i in pos[l]:
        negs = np.array([z[l][i] @ z[l][n] for n in neg[l]])
        for j in pos[l]:
            if j != i:
                within += pair_term(z[l][i] @ z[l][j], negs)
show("within_scale", within)
cross = 0.0
for i in pos[0]:
    for l in range(1, 3):
        negs = np.array([z[0][i] @ z[l][n] for n in neg[l]])
        for j in pos[l]:
            cross += pair_term(z[0][i] @ z[l][j], negs)
show("cross_scale", cross)

jv, jw = pattern(3, 5, 0.2), pattern(4, 5, 1.1)
gvw = jv @ jw.T
r = gvw @ (jw @ jw.T) @ gvw.T
g = jv @ jv.T
lp, lq = log_softmax(r), log_softmax(g)
show("c3_3x4x5", (np.exp(lp) * (lp - lq)).sum() + (np.exp(lq) * (lq - lp)).sum())
show("motion_sims", pair_term(9.5, np.array([8.0, 9.75, 7.2])))
show("focal_p03_t1", -(0.7 ** 2) * math.log(0.3))
show("focal_p03_t0", -(0.3 ** 2) * math.log(0.7))

# key frames on 5 points, K = 2
pts = np.array([[0.0, 0.0], [0.3, 0.1], [0.1, 0.4], [2.0, 2.0], [0.25, -0.35]])
d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
dens = np.array([math.exp(-np.sort(np.delete(d2[j], j))[:2].mean()) for j in range(5)])
show("kf_density", dens)
order = sorted(range(5), key=lambda j: (-dens[j], j))
rank = {j: r for r, j in enumerate(order)}
gam = np.array([d2[j].max() if rank[j] == 0 else min(d2[j, l] for l in range(5) if rank[l] < rank[j])
                for j in range(5)])
show("kf_gamma", gam)
prod = dens * gam
show("kf_select_q2", sorted(sorted(range(5), key=lambda j: (-prod[j], j))[:2]))

# grounding
T, lvl, t, alpha = 64, 2, 32, 1.5
Tl = T // 2 ** lvl
show("center_T64_l2", [cidx for cidx in range(Tl) if abs(2 ** lvl * cidx - t) <= alpha * T / Tl])

# bilevel: 2-parameter quadratic, B = 2, zero weight net -> weights 0.5
theta = np.array([0.5, -1.0])
xs = np.array([[1.0, 2.0], [-1.0, 0.5]])
ys = np.array([1.0, 0.0])
alpha_lr = 0.1
grads = [(xs[j] @ theta - ys[j]) * xs[j] for j in range(2)]
show("virtual_step_quadratic", theta - alpha_lr / 2 * 0.5 * (grads[0] + grads[1]))

# entropic partial OT optimum, min <T,C> + tau sum T(log T - 1), tau = 0.05
from scipy.optimize import minimize

def entropic_pot(C, s, tau=0.05):
    n, m = C.shape
    f = lambda x: (x * C.ravel()).sum() + tau * (x * (np.log(x) - 1)).sum()
    g = lambda x: C.ravel() + tau * np.log(x)
    cons = [{"type": "eq", "fun": lambda x: x.sum() - s}]
    cons += [{"type": "ineq", "fun": lambda x, i=i: 1 - x.reshape(n, m)[i].sum()} for i in range(n)]
    cons += [{"type": "ineq", "fun": lambda x, j=j: 1 - x.reshape(n, m)[:, j].sum()} for j in range(m)]
    r = minimize(f, np.full(n * m, s / (n * m)), jac=g, constraints=cons, method="SLSQP",
                 bounds=[(1e-15, 1)] * (n * m), options={"ftol": 1e-14, "maxiter": 2000})
    T = r.x.reshape(n, m)
    return (T * C).sum()

c170 = np.array([[0.83158820425936986, 0.46902211141692174, 0.17455098716602402],
                 [0.70946145685348194, 0.092529799372615504, 0.24161058228879312],
                 [0.51390621271463233, 0.53321761066056472, 0.26633389155995518],
                 [0.92392016085175777, 0.79904458918051535, 0.1004894218442737]])
c178 = np.array([[0.35376421216355836, 0.182600485908263, 0.34685017865944107, 0.69824664031220063, 0.35847751181290194],
                 [0.35615806459005445, 0.65274299663506807, 0.55577352904932253, 0.72692201809960877, 0.46122517930875362],
                 [0.79754581501792876, 0.14100021867525778, 0.7539614953107231, 0.66736464776345183, 0.18674104572133157],
                 [0.17741312265655892, 0.83263096003329651, 0.90464890473180792, 0.096040989539563901, 0.31446990998581809]])
show("entropic_c170_s3", entropic_pot(c170, 3.0))
show("entropic_c178_s3", entropic_pot(c178, 3.0))
