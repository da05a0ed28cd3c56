"""Steklov smoothing of a C^{1,alpha-1} graph and doubling constants of the shifted inverse-sqrt weight."""

from mzmesh import verify

rep = verify.steklov_experiment(alphas=(1.25, 1.5))
print(rep.verdict_line())
for alpha, fit in rep.summary["fits"].items():
    print(f"  alpha={alpha}: fitted slopes {({k: round(v, 3) for k, v in fit['slopes'].items()})}")

rep = verify.doubling_experiment(eps_list=(1e-6, 1e-3, 1.0))
print(rep.verdict_line())
print(f"  constants in [{rep.summary['min']:.4f}, {rep.summary['max']:.4f}]")
