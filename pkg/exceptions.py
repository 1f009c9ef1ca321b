"""Error types shared by the solvers, diagnostics and the CLI.

Every error carries a human readable ``detail`` and the process ``exit_code``
the CLI should return when it surfaces uncaught.
"""


class LabError(Exception):
    exit_code: int = 2

    def __init__(self, detail: str, exit_code: int | None = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code

    def __str__(self) -> str:
        return self.detail


class ParameterError(LabError):
    pass


class GridError(LabError):
    pass


class ScenarioError(LabError):
    pass


class PreconditionError(LabError):
    pass


class FitError(LabError):
    pass


class DomainError(LabError):
    """A cone, characteristic or backward evolution does not fit the mesh."""


class DivergenceError(LabError):
    exit_code = 1

    def __init__(self, t: float, node: int, value: float):
        super().__init__(
            f"divergence guard tripped at t={t:.6g}, node {node} (|value|={value:.3e})"
        )
        self.t = t
        self.node = node
        self.value = value


class ConsistencyError(LabError):
    exit_code = 1
