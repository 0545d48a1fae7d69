"""Contraction probe on a perturbed prototype against the synthetic family."""
from flatdrift import margulis as M
from flatdrift.dynamics import generic_surface

grid = [float(t) for t in range(0, 13)]
x = generic_surface(0)
w = M.random_balance_vector(x, seed=0, size=0.1)
probe = M.contraction_probe(x, 0.9, w, grid, n_r=100, seed=0, stop_early=True)
print("surface: first contracting time", probe.t4)
for t, r in zip(probe.t_grid, probe.ratios):
    print(f"  t={t:4.1f} ratio={r:.4f}")
syn = M.synthetic_contraction_probe(1.0, 10 ** 4, grid)
print("synthetic gamma=1: first contracting time", syn.t4)
print("worst-case profile, gamma=1, n=1e4:", M.worst_case_profile(1.0, 10 ** 4))
