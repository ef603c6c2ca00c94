"""Open-system simulation of ancilla-mediated spin squeezing in solid-state spin ensembles."""

__version__ = "0.1.0"
