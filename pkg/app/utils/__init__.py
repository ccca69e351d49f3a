"""
Observable Transport Lab Engines
Kernels, exact solutions, particle, broad, distributional and grid solvers
"""
