"""Activity-context compatibility priors and reward shaping for a symbolic kitchen world."""

__version__ = "0.1.0"

NULL_TOKEN = "<null>"
