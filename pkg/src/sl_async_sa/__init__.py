"""Provides asynchronous stochastic approximation with set-valued mean fields, its two-timescale extension and an
actor-critic learner for finite discounted Markov decision processes.

The package simulates the asynchronous iterates, audits the convergence assumptions behind them and measures how
closely the interpolated trajectories track the solutions of the limiting differential inclusion.
"""

from ataraxis_base_utilities import console

# Ensures that console output is enabled
if not console.enabled:
    console.enable()
