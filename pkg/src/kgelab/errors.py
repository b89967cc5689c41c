"""Exception hierarchy shared across the package."""


class KgelabError(Exception):
    """Base class for all errors raised deliberately by kgelab."""


class SFParseError(KgelabError, ValueError):
    """Raised when a scoring-function string does not match the grammar.

    Carries ``position``, the 0-based character offset of the offending token.
    """

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class GraphFormatError(KgelabError, ValueError):
    """Raised when an on-disk graph (TSV/metadata) fails validation."""


class ConfigError(KgelabError, ValueError):
    """Raised for invalid run configuration (CLI flags or config files)."""
