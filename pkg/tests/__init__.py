"""Tests for the CPG continual-learning engine."""
