"""Closed-loop neighboring-extremal optimal control: Galerkin HJB solves and parametric adjustments."""
