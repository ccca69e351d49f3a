"""
Observable Transport Lab Models
Experiment configuration and named presets
"""
