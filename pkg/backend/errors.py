"""Exception hierarchy shared by the engine, the CLI and the HTTP routes."""


class PosemodError(Exception):
    """Base class for every error raised on purpose by posemod."""


class StructuralError(PosemodError, ValueError):
    """Input does not fit the skeleton, slot inventory or a data file format."""


class DegenerateOrientationError(StructuralError):
    """Neither the hip axis nor the shoulder axis gives a horizontal facing direction."""


class TemplateCoverageError(PosemodError):
    """A plan item has no template in the bank."""

    def __init__(self, key: str):
        super().__init__(f"No template for '{key}' in the template bank")
        self.key = key


class ConfigError(PosemodError):
    """A configuration value or resource file is invalid."""


class CorpusError(PosemodError):
    """A pose corpus is empty, badly ordered or too small for the request."""
