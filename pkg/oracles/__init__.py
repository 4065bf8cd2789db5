"""Independent reference computations used to anchor the spectral solvers."""
