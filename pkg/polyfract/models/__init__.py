from .system import CellSpec, GroupKind, GroupSpec, PhiSpec, SystemDescription

__all__ = ["CellSpec", "GroupKind", "GroupSpec", "PhiSpec", "SystemDescription"]
