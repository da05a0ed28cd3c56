"""Jacobi derivative identity and the tangential Markov growth of the extremal family."""

from mzmesh import verify

rep = verify.jacobi_identity_check(n_max=20, betas=(1.0, 7.0))
print(rep.verdict_line())

rep = verify.sharpness_experiment(1.5, [8, 16, 32], p=2.0)
for r in rep.records:
    print(f"  n={r['n']:3d}  ratio={r['ratio']:.4e}")
fit = rep.summary["fit"]
print(f"fitted exponent {fit['slope']:.3f}; target 2/alpha = {2 / 1.5:.3f}")
print(f"exponent against n + beta + 1/2: {rep.summary['slope_vs_shifted_degree']['slope']:.3f}")
