"""Herramientas Monte Carlo para la ecuación de Schrödinger lineal con término de ruido δ V Ψ dB."""

__version__ = "0.1.0"
