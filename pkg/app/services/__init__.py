"""
Observable Transport Lab Services
Experiment dispatch and artifact export
"""
