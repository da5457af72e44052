"""Frame fields on tetrahedral meshes."""

__version__ = "0.1.0"
