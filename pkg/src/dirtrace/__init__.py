"""Directional boundary measures and traces along a fixed direction."""
