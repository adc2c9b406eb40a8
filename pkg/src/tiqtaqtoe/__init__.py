"""Quantum tic-tac-toe on qutrits: engine, game rules, observations, and self-play PPO."""

__version__ = "0.1.0"
