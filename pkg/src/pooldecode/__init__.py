"""Non-defective subset recovery for noisy non-adaptive group testing."""

__version__ = "0.1.0"
