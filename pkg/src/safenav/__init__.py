"""Safe-RL workbench: online safety-property collection and refinement,
penalty-shaped PPO trainers, a 2D lidar navigation simulator, and a sound
violation-rate verifier."""

__version__ = "0.1.0"
