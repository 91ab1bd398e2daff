"""Exception types shared across the package."""


class LabelSieveError(Exception):
    """Base class for all labelsieve errors."""


class ParseError(LabelSieveError):
    """Malformed corpus or embedding-table file; carries a 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ConfigError(LabelSieveError):
    """Invalid configuration key or value."""


class TrainingDiverged(LabelSieveError):
    """A training loss became non-finite; the run was aborted."""


class BundleFormatError(LabelSieveError):
    """Model bundle file is truncated, has a bad magic string, or an

    unsupported format version."""


class BundleChecksumError(LabelSieveError):
    """Model bundle payload does not match its stored checksum."""
