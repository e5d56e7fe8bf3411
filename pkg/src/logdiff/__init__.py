"""Numerical laboratory for the logarithmic diffusion equation u_t = lap(ln u):
implicit solver, closed-form oracle family, continuity indicator and
oscillation diagnostics, level-set lemma constants and checkers, and
parabolic covering premeasures.
"""

__version__ = "0.1.0"
