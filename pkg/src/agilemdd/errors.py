"""Exception hierarchy shared by the toolchain modules."""


class MddError(Exception):
    """Base class for every error raised by agilemdd."""


class UnknownClassError(MddError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class HierarchyCycleError(MddError):
    pass


class ParseError(MddError):
    """Fatal parse failure (empty input, unbalanced block, missing initial state)."""

    def __init__(self, message, reason="parse-error", path=None, line=None):
        super().__init__(message)
        self.reason = reason
        self.path = path
        self.line = line


class ModelMergeError(MddError):
    pass


class EvaluationError(MddError):
    pass


class UnknownOperationError(MddError):
    pass


class OntologyError(MddError):
    def __init__(self, message, reason):
        super().__init__(message)
        self.reason = reason


class UnknownSchemaError(MddError):
    pass


class GraphSchemaError(MddError):
    def __init__(self, message, where="$"):
        super().__init__(f"{where}: {message}")
        self.where = where


class EmptyGraphError(MddError):
    pass


class UnsupportedDialectError(MddError):
    pass


class SourceParseError(MddError):
    def __init__(self, message, path=None, line=None):
        loc = f"{path}:{line}: " if path is not None else ""
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line


class InvalidLayerError(MddError):
    def __init__(self, layer, diagnostics):
        self.layer = layer
        self.diagnostics = list(diagnostics)
        detail = "; ".join(str(d) for d in self.diagnostics[:5])
        super().__init__(f"invalid {layer} layer: {detail}")


class BackendError(MddError):
    pass


class BackendNetworkError(BackendError):
    pass


class EmptyResponseError(BackendError):
    pass


class ExtractionError(BackendError):
    pass


class SimulationError(MddError):
    pass


class ConstraintViolationError(SimulationError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(v.message for v in self.violations))


class SchemaViolationError(SimulationError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(v.message for v in self.violations))


class DeadlockError(SimulationError):
    pass


class UnknownStateError(SimulationError, KeyError):
    def __str__(self):
        return Exception.__str__(self)
