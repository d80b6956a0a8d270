"""LATCH binary descriptor pipeline."""
