"""Exception hierarchy shared by every kshapenet module."""


class KShapeError(ValueError):
    """Base class for all kshapenet errors."""


class DimensionError(KShapeError):
    """Array shapes do not agree with what the operation expects."""


class DegenerateShapeError(KShapeError):
    """A landmark configuration has zero size after centering."""

    def __init__(self, message, *, frame=None, sequence_id=None):
        self.frame = frame
        self.sequence_id = sequence_id
        parts = [message]
        if sequence_id is not None:
            parts.append(f"sequence={sequence_id!r}")
        if frame is not None:
            parts.append(f"frame={frame}")
        super().__init__(", ".join(parts))


class AntipodalError(KShapeError):
    """Log map or transport requested between (near) antipodal pre-shapes."""

    def __init__(self, message, *, index=None):
        self.index = index
        if index is not None:
            message = f"{message} (index {index})"
        super().__init__(message)


class TangencyError(KShapeError):
    """A vector is not tangent to the sphere at its claimed base point."""


class DatasetError(KShapeError):
    """Dataset is empty, malformed, or carries out-of-range labels."""
