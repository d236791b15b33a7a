"""Hierarchical-matrix reconstruction from black-box matrix-vector products."""
