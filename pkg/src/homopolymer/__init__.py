"""Numerics, simulation and statistical checks for the continuous-time homopolymer
on Z^d: resolvents, Feynman-Kac kernels, the eigenfunction psi_beta, its Doob
transform, limit laws and the half-line wetting model."""

__all__ = [
    "acceptance",
    "cli",
    "config",
    "doob",
    "harmonic",
    "kernel",
    "lattice",
    "limits",
    "report",
    "resolvent",
    "rng",
    "wetting",
]
