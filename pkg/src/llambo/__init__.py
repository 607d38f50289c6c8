"""Language-model-assisted Bayesian optimisation with classical baselines."""

__version__ = "0.1.0"
