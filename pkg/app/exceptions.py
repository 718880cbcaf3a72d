
class ToolkitError(Exception):
    pass

class ValidationError(ToolkitError):
    pass

class OperationError(ToolkitError):
    pass

class ConfigurationError(ToolkitError):
    pass


class TreeError(ValidationError):
    pass

class InvalidTree(TreeError):
    def __init__(self, report):
        self.report = report
        error = report.first_error
        detail = f"{error.kind.value} at position {error.position}" if error else "unknown error"
        super().__init__(f"Invalid tree: {detail}")

class TreeSyntaxError(TreeError):
    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} at position {position}")

class MalformedPreterminal(TreeError):
    pass


class LengthMismatch(ValidationError):
    pass

class VocabularyError(ValidationError):
    pass

class NotATree(ValidationError):
    pass


class CheckpointError(OperationError):
    pass

class OverlappingVariableSpans(OperationError):
    pass
