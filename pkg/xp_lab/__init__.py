"""
xp_lab: desk-scale verification of hyperbolic and arithmetic estimates on the
modular curves X(p).
"""
__version__ = "0.1.0"
