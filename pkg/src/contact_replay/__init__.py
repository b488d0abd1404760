"""Contact-energy prioritised hindsight replay for goal-conditioned DDPG."""

__version__ = "0.1.0"
