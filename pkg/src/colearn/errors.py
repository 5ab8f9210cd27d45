"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when arguments violate an operation's preconditions."""


class DegenerateReferenceError(InvalidInputError):
    """Raised when a relative change is requested against a zero-norm reference."""


class CheckpointError(ValueError):
    """Raised when a checkpoint file is malformed or has the wrong magic/version."""


class DatasetLoadError(ValueError):
    """Raised when a CSV dataset cannot be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ParticipantFailure(RuntimeError):
    """A participant's local round did not complete (crash or lost upload)."""

    def __init__(self, participant_id: int, kind: str):
        self.participant_id = participant_id
        self.kind = kind
        super().__init__(f"participant {participant_id} failed: {kind}")


class RoundAbortError(RuntimeError):
    """A participant exceeded the retry limit within one round."""

    def __init__(self, round_index: int, participant_id: int, attempts: int):
        self.round_index = round_index
        self.participant_id = participant_id
        self.attempts = attempts
        super().__init__(
            f"round {round_index} aborted: participant {participant_id} "
            f"failed {attempts} times"
        )


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
