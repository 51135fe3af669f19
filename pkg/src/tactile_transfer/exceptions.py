"""Exception hierarchy shared across the package."""


class TactileTransferError(Exception):
    """Base class for all errors raised by this package."""


class EmptyInputError(TactileTransferError, ValueError):
    pass


class ConstantChannelError(TactileTransferError, ValueError):
    def __init__(self, channel, value):
        self.channel = channel
        super().__init__(f"electrode channel {channel} is constant (value {value!r})")


class StatsMismatchError(TactileTransferError, ValueError):
    pass


class InsufficientNonContactError(TactileTransferError, ValueError):
    pass


class ShapeMismatchError(TactileTransferError, ValueError):
    pass


class IsolatedVertexError(TactileTransferError, ValueError):
    def __init__(self, vertices):
        self.vertices = list(vertices)
        super().__init__(f"vertices without incident edges: {self.vertices[:10]}")


class TooFewVerticesError(TactileTransferError, ValueError):
    pass


class ZeroVarianceError(TactileTransferError, ValueError):
    pass


class UninitializedGradientError(TactileTransferError, RuntimeError):
    pass


class EmptyDatasetError(TactileTransferError, ValueError):
    pass


class DivergedLossError(TactileTransferError, FloatingPointError):
    pass


class SpecMismatchError(TactileTransferError, ValueError):
    pass


class HierarchyDepthMismatchError(TactileTransferError, ValueError):
    pass


class MissingCheckpointError(TactileTransferError, FileNotFoundError):
    pass


class NoContactError(TactileTransferError, ValueError):
    pass


class ExcessiveDepthError(TactileTransferError, ValueError):
    pass


class TooFewTrajectoriesError(TactileTransferError, ValueError):
    pass


class RankDeficientError(TactileTransferError, ValueError):
    pass


class DimensionMismatchError(TactileTransferError, ValueError):
    pass


class TopologyMismatchError(TactileTransferError, ValueError):
    pass


class EmptyMaskError(TactileTransferError, ValueError):
    pass


class LengthMismatchError(TactileTransferError, ValueError):
    pass


class CorruptFileError(TactileTransferError, ValueError):
    pass


class ConfigError(TactileTransferError, ValueError):
    pass


class MissingPrerequisiteError(TactileTransferError, FileNotFoundError):
    pass


class SplitContaminationError(TactileTransferError, RuntimeError):
    pass
