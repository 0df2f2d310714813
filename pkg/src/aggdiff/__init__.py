"""Aggregation-diffusion lattice model, invariant checks and continuum solver."""
