"""Simulation, linearization and study drivers."""
