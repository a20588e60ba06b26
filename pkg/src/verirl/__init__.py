"""Rule-based RL harness: verifiable rewards, Sokoban planning environments,
agent protocols, and a desk-scale PPO trainer with a KL-to-reference penalty."""

__version__ = "0.1.0"
