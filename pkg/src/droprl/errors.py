"""Exception types for rejected inputs."""


class ValidationError(ValueError):
    """Input data, file or configuration failed validation."""


class InstanceValidationError(ValidationError):
    def __init__(self, report: list[str]):
        super().__init__("invalid instance:\n  " + "\n  ".join(report))
        self.report = report


class ConfigError(ValidationError):
    pass


class FileFormatError(ValidationError):
    pass
