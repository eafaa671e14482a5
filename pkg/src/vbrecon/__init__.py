"""Weighted network reconstruction from nodal time series."""
