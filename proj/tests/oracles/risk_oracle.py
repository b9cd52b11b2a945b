"""Independent oracle for the smooth-max risk value and its gradient (mpmath, FD)."""
import mpmath as mp

mp.mp.dps = 40
x = [mp.mpf(1), mp.mpf(2), mp.mpf(3)]
p = 20


def smax(v):
    return mp.power(sum(mp.power(t, p) for t in v), mp.mpf(1) / p)


print("smooth max:", mp.nstr(smax(x), 17))
for i in range(3):
    g = mp.diff(lambda t: smax([t if k == i else x[k] for k in range(3)]), x[i])
    print("grad", i, mp.nstr(g, 17))
