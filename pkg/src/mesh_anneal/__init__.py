"""Simulation and annealing-based programming of multiport interferometer meshes."""
