"""A miniature run of the estimator-comparison study.

Generates Dirichlet-warped noisy copies of the triangular template, estimates
the mean with both routes (quotient Karcher mean; Bayesian posterior mean),
and tabulates squared elastic distances to the truth. Shrunk well below the
desk-scale defaults so it finishes in about a minute; pass --desk to the CLI
`simulate` command for the full desk-scale grid.
"""

from elastica import StudyConfig, run_study

cfg = StudyConfig(
    example_id="I",
    n_values=(5, 10),
    sigma_values=(0.1, 0.5),
    reps=3,
    n_iter=2_000,
    burn_in=1_000,
    thin=10,
    seed=0,
)
result = run_study(cfg, workers=2)

print(f"{'n':>4} {'sigma':>6} {'estimator':>10} {'mean sq dist':>14} {'se':>10}")
for row in result.rows:
    print(f"{row['n']:>4} {row['sigma']:>6} {row['estimator']:>10} "
          f"{row['mean_sq_dist']:>14.5f} {row['se']:>10.5f}")

result.to_csv("study_demo.csv")
result.to_long_csv("study_demo_long.csv")
print("\nwrote study_demo.csv and study_demo_long.csv")
