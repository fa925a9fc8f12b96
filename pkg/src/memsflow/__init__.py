"""MEMS design-flow toolkit: schematic, mask layout and solid model levels.

Subpackages are imported lazily by users; this module only carries the version.
"""

__version__ = "0.1.0"
