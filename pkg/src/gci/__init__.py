"""Local causal discovery of key confounders and de-confounded
treatment-effect estimation."""

__version__ = "0.1.0"
