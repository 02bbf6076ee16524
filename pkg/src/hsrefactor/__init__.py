"""Multi-agent refactoring pipeline and metrics for Haskell codebases."""

__version__ = "0.1.0"
