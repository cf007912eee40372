"""Read-only smoke-test harness for compiled model configurations."""

from .harness import cross_check, framework_available, instantiate_and_count

__all__ = ["cross_check", "framework_available", "instantiate_and_count"]
