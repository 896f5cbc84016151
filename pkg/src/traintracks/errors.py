"""Exception taxonomy shared by all modules.

StructureError: malformed input (unresolved ids, bad file syntax).
PreconditionError: a well-formed call violating an operation's contract.
InvariantViolation: an internal identity failed; indicates a bug or a
genuine contradiction with the theory, highest severity.
"""


class StructureError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


class InvariantViolation(AssertionError):
    pass
