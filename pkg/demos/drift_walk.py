"""Random-walk drift of the local density on a small skeleton.

Prints E f after j steps next to e^{-j} E f(start) and the additive
constant needed to close the gap, for a few step counts.
"""
from flatdrift import margulis as M
from flatdrift.dynamics import generic_surface

x = generic_surface(11)
skel = M.toy_skeleton(x, 20, seed=0)
print("skeleton check:", skel.check())
res = M.random_walk_expectation(skel, M.DriftWalk(0.9, 1.0, 6), n_mc=12, seed=0)
print(f"{'j':>2} {'E f':>12} {'decayed':>12} {'C_j':>10}")
for j, lhs, dec, c in zip(res.k, res.lhs, res.decay, res.residual_C):
    print(f"{j:>2} {lhs:12.4f} {dec:12.4f} {c:10.4f}")
