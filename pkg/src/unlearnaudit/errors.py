"""Exception hierarchy shared by every module.

Each error carries the module that raised it and, where one exists, a short
remedy hint; the CLI prints both.
"""


class AuditError(Exception):
    module = "unlearnaudit"
    hint = ""

    def __init__(self, message, hint=None):
        super().__init__(message)
        if hint is not None:
            self.hint = hint


class GraphError(AuditError):
    module = "graph"


class CycleError(GraphError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("graph contains a cycle: " + " -> ".join(self.cycle),
                         hint="remove one edge of the listed cycle")


class UnknownNodeError(GraphError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown node {name!r}")


class PathExplosionError(GraphError):
    pass


class DataError(AuditError):
    module = "data"


class SchemaMismatchError(DataError):
    pass


class ValueTypeError(DataError):
    def __init__(self, row, column, value):
        self.row, self.column, self.value = row, column, value
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r}")


class DomainViolationError(DataError):
    def __init__(self, row, column, value):
        self.row, self.column, self.value = row, column, value
        super().__init__(f"row {row}, column {column!r}: value {value!r} outside declared domain")


class PredicateSyntaxError(DataError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} at offset {offset}")


class EmptyTargetError(DataError):
    hint = "check the --where predicate against the data"


class SEMError(AuditError):
    module = "sem"


class ModelError(AuditError):
    module = "models"


class ProtocolError(ModelError):
    hint = "the external model must answer each request with one {\"preds\": [...]} line"


class EstimatorError(AuditError):
    module = "cafe"


class EstimatorDegenerateError(EstimatorError):
    hint = "retry with the regression-adjusted estimator"


class SpecError(AuditError):
    module = "synth"


class PerturbationError(AuditError):
    module = "robustness"


class FuzzError(AuditError):
    module = "fuzz"


class UsageError(AuditError):
    module = "cli"


class BaselineError(AuditError):
    module = "baselines"
