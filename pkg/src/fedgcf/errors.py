class FedGCFError(Exception):
    pass


class ConfigError(FedGCFError, ValueError):
    pass


class FormatError(FedGCFError, ValueError):
    """Malformed or incomplete input files."""


class IntegrityError(FedGCFError, ValueError):
    """Data that violates a structural invariant (bad node index, bad label, ...)."""


class ContractError(FedGCFError, ValueError):
    """Incompatible shapes or manifests passed between components."""


class NumericError(FedGCFError, ArithmeticError):
    def __init__(self, msg, graph_index=None):
        super().__init__(msg)
        self.graph_index = graph_index
