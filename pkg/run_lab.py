#!/usr/bin/env python3
"""
Observable Transport Lab Runner
Command-line entry point for experiments.

Usage:
    python run_lab.py run configs/verify_theorem3.toml
    python run_lab.py validate configs/alpha_sweep.toml
    python run_lab.py presets
"""

from app.cli import lab


if __name__ == '__main__':
    lab()
