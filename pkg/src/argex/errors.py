"""Exception taxonomy shared across the package."""


class ArgexError(Exception):
    """Base class for all errors raised by this package."""


# --- AMR graph handling ---

class MalformedPenman(ArgexError):
    """Penman text could not be parsed into a valid graph."""


class MalformedSequence(ArgexError):
    """A linearized AMR token sequence is not structurally valid."""


class EmptyCorpus(ArgexError):
    """Vocabulary construction was asked to run over zero graphs."""


# --- external parser client ---

class BackendUnavailable(ArgexError):
    """Cache miss and no reachable parser backend."""


class InvalidBackendOutput(ArgexError):
    """Parser backend returned something that is not valid Penman."""


# --- prompting ---

class UnknownEventType(ArgexError):
    """Event type is not registered in the ontology."""


# --- model / prefix machinery ---

class ShapeMismatch(ArgexError):
    """Tensor arguments are not shape-compatible."""


class ConfigMismatch(ArgexError):
    """Inputs are inconsistent with the configured AMR mode."""


class OOVStructureToken(ArgexError):
    """A relation or structure token is missing from the AMR vocabulary."""


class EmptyRepresentations(ArgexError):
    """The prefix compressor received no token representations to attend over."""


class CapacityMismatch(ArgexError):
    """Compressed vector capacity does not match 2 * L * l * d_model."""


# --- copy head ---

class DegenerateMass(ArgexError):
    """All cross-attention mass fell on positions excluded from copying."""


class ZeroProbabilityGold(ArgexError):
    """A gold token has probability zero under the mixed distribution (pure copy of an un-copyable target)."""


# --- data / evaluation / training ---

class SchemaError(ArgexError):
    """A dataset record violates the instance schema."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class KeyMismatch(ArgexError):
    """Prediction keys do not align with gold keys."""


class DataMissing(ArgexError):
    """A required dataset, ontology, or cache path does not exist."""


class AMRCacheMiss(ArgexError):
    """Passages lack AMR cache entries; lists the offending passage ids."""

    def __init__(self, passage_ids):
        self.passage_ids = list(passage_ids)
        shown = ", ".join(self.passage_ids[:10])
        more = "" if len(self.passage_ids) <= 10 else f" (+{len(self.passage_ids) - 10} more)"
        super().__init__(f"no cached AMR for: {shown}{more}")
