"""Exception hierarchy. Each class carries a short ``category`` used by the CLI."""


class IRNetError(Exception):
    category = "error"


class DimensionError(IRNetError, ValueError):
    category = "dimension"


class DomainError(IRNetError, ValueError):
    category = "domain"


class DegenerateWeightsError(DomainError):
    """Raised when a weight vector has zero spread and cannot be standardized."""

    category = "degenerate_weights"

    def __init__(self, message, channel=None, layer=None):
        self.channel = channel
        self.layer = layer
        parts = [message]
        if layer is not None:
            parts.append(f"layer={layer}")
        if channel is not None:
            parts.append(f"channel={channel}")
        super().__init__(" ".join(parts))


class FormatError(IRNetError, ValueError):
    """Malformed dataset or model file. ``offset`` is the byte position of the problem."""

    category = "format"

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class ConfigError(IRNetError, ValueError):
    category = "config"
