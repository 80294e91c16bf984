"""Bell-test simulations for decaying particle systems.

Submodules: :mod:`quantum` (states, channels), :mod:`kaon` (neutral-kaon
pairs), :mod:`chsh` (CHSH machinery), :mod:`hyperon` (weak hyperon decay),
:mod:`qkd` (entanglement-based key distribution), :mod:`cli`.
"""

__version__ = "0.1.0"
