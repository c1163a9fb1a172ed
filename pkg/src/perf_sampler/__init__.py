"""Configuration sampling for multi-objective performance modeling."""
