"""Admittance-control simulation and analysis toolkit.

Models a velocity-controlled robot that carries a heavy payload behind a
force sensor, closes an admittance loop around the measured force, and
makes or survives contact with a stiff environment.  Submodules:

  lti       rational transfer functions, composition, stability
  plant     controller and coupled-plant blocks, closed-loop assembly
  discrete  fixed-step controller recursions and contact handling
  sim       time-domain closed-loop simulator
  analysis  frequency sweeps, stability frontiers, trace metrics
  cli       command line front end
"""

__version__ = "0.1.0"
