"""Independent high-precision oracle for the frozen expected values used in
the unit tests. Direct formula evaluation in mpmath (50 digits) plus central
finite differences; shares no code with the C++ implementation.

Run: python3 tests/oracle/derive_expected.py
"""
import math
import mpmath as mp

mp.mp.dps = 50


def vec(xs):
    return [mp.mpf(x) for x in xs]


def dot(u, v):
    return mp.fsum(a * b for a, b in zip(u, v))


def norm(v):
    return mp.sqrt(dot(v, v))


def unit(v):
    n = norm(v)
    return [a / n for a in v]


def cos(u, v):
    return dot(u, v) / (norm(u) * norm(v))


def center(rows):
    us = [unit(vec(r)) for r in rows]
    return [mp.fsum(u[j] for u in us) / len(us) for j in range(len(us[0]))]


def ntxent(rows, tau, c=None):
    n = len(rows)
    half = n // 2
    if c is None:
        reps = [unit(r) for r in rows]
    else:
        reps = [[a - b for a, b in zip(unit(r), c)] for r in rows]
    total = 0
    for i in range(n):
        p = (i + half) % n
        num = mp.exp(cos(reps[i], reps[p]) / tau)
        den = mp.fsum(mp.exp(cos(reps[i], reps[m]) / tau) for m in range(n) if m != i)
        total += -mp.log(num / den)
    return total / n


def fd_grad(f, rows, h=mp.mpf("1e-20")):
    grads = []
    for i in range(len(rows)):
        g = []
        for j in range(len(rows[i])):
            up = [list(r) for r in rows]
            dn = [list(r) for r in rows]
            up[i][j] += h
            dn[i][j] -= h
            g.append((f(up) - f(dn)) / (2 * h))
        grads.append(g)
    return grads


def show(name, x):
    if isinstance(x, list):
        if isinstance(x[0], list):
            print(name, "=", "{" + ", ".join("{" + ", ".join(mp.nstr(v, 17) for v in r) + "}" for r in x) + "}")
        else:
            print(name, "=", "{" + ", ".join(mp.nstr(v, 17) for v in x) + "}")
    else:
        print(name, "=", mp.nstr(x, 17))


# compute_center: three arbitrary 2-D vectors
show("center3", center([[3, 4], [1, 0], [-2, 5]]))

# center_loss, 3-D
z = vec([0.3, -1.2, 0.5]); c = vec([0.2, 0.1, -0.4])
f = lambda rows: mp.fsum((a - b) ** 2 for a, b in zip(rows[0], c))
show("center_loss_value", f([z]))
show("center_loss_grad", fd_grad(f, [z])[0])

# angular_center_loss, 4-D
z = vec([1.0, -0.5, 2.0, 0.3]); c = vec([0.3, 0.2, 0.1, -0.2])
f = lambda rows: -dot(unit(rows[0]), c)
show("ang_value", f([z]))
show("ang_grad", fd_grad(f, [z])[0])

# contrastive: 2B = 4 fixed 2-D unit vectors at 0, 100, 20, 200 degrees, tau = 0.25
deg = [0, 100, 20, 200]
rows = [[mp.cos(mp.radians(a)), mp.sin(mp.radians(a))] for a in deg]
f = lambda r: ntxent(r, mp.mpf("0.25"))
show("con_value", f(rows))
show("con_grad", fd_grad(f, rows))

# msc: 2B = 4 fixed 3-D vectors, center from a toy set, tau = 0.25
toy = [[1, 0.2, 0.1], [0.9, -0.1, 0.3], [1.1, 0.3, -0.2], [0.8, 0.0, 0.0]]
c_msc = center(toy)
show("msc_center", c_msc)
rows = [vec(r) for r in [[1.0, 0.5, -0.2], [0.7, -0.3, 0.4], [1.2, 0.4, 0.1], [0.6, -0.1, 0.6]]]
f = lambda r: ntxent(r, mp.mpf("0.25"), c_msc)
show("msc_value", f(rows))
show("msc_grad", fd_grad(f, rows))

# combined, lambda = 1: msc value + mean angular term on the same batch
ang_mean = mp.fsum(-dot(unit(r), c_msc) for r in rows) / len(rows)
show("combined_value", f(rows) + ang_mean)

# adapter_forward: d = 2, h = 3
W1 = [[0.5, -0.2], [0.1, 0.4], [-0.3, 0.3]]; b1 = [0.05, -0.1, 0.2]
W2 = [[0.2, -0.1, 0.3], [0.4, 0.5, -0.6]]; b2 = [0.01, -0.02]
x = [1.5, -0.7]
hid = [max(mp.mpf(0), mp.fsum(mp.mpf(W1[k][j]) * x[j] for j in range(2)) + b1[k]) for k in range(3)]
y = [x[i] + mp.fsum(mp.mpf(W2[i][k]) * hid[k] for k in range(3)) + b2[i] for i in range(2)]
show("adapter_y", y)

# knn_score: 5-row 3-D gallery, k = 2
gallery = [[1, 0, 0], [0.6, 0.8, 0], [0, 0, 1], [0.5, 0.5, 0.7071], [-1, 0.1, 0.2]]
q = vec([0.9, 0.3, 0.2])
sims = sorted((cos(q, vec(g)) for g in gallery), reverse=True)
show("knn_k2", (1 - sims[0]) + (1 - sims[1]))

# uniformity: all C(5,2) pairs of five fixed 3-D vectors
five = [vec(r) for r in [[1, 0, 0], [1, 1, 0], [0, 1, 1], [2, -1, 0.5], [-0.5, 0.3, 1]]]
pairs = [(i, j) for i in range(5) for j in range(i + 1, 5)]
show("uniformity5", mp.fsum(cos(five[i], five[j]) for i, j in pairs) / len(pairs))

# augmentation similarity: three fixed pairs
views = [([1, 0, 0], [0.9, 0.1, 0]), ([0, 1, 0], [0.2, 1, 0.3]), ([1, 1, 1], [1, -1, 1])]
show("augsim3", mp.fsum(cos(vec(a), vec(b)) for a, b in views) / 3)

# mean-shifted uniformity of the same five vectors around the center of
# the three view-first vectors
c5 = center([[1, 0, 0], [0, 1, 0], [1, 1, 1]])
shifted = [[a - b for a, b in zip(unit(v), c5)] for v in five]
show("uniformity5_shifted", mp.fsum(cos(shifted[i], shifted[j]) for i, j in pairs) / len(pairs))

# angular histogram toy set: angles to c in the origin frame
c_ang = vec([0.6, 0.0, 0.0])
toy_feats = [[1, 0, 0], [1, 1, 0], [0, 1, 0], [-1, 0.2, 0], [1, 0.1, 0.1]]
show("angles", [mp.acos(cos(vec(v), c_ang)) for v in toy_feats])
