"""Option-based planning and learning for cooperative multi-agent Dec-POMDPs."""

__version__ = "0.1.0"
