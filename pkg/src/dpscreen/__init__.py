"""Nonparametric Bayesian screening of pairwise dependence.

Submodules
----------
stats     special functions, seeded samplers, log densities
dpm       Dirichlet process mixtures of Gaussians (Gibbs sampler)
ctbf      contingency-table Bayes factor test on DPM partitions
mixmod    mixture-weight test on DPM predictive densities
mi        kNN mutual information baseline
screen    all-pairs screening of a dataset, CSV and result I/O
simulate  synthetic scenarios, permutation nulls and ROC summaries
cli       command-line entry point
"""

__version__ = "0.1.0"
