"""Exception types raised across the toolkit.

Every error carries a short machine-readable ``code`` which the command
line interface copies into its JSON error objects.
"""


class CarpetError(Exception):
    code = "CarpetError"


class EmptySubshift(CarpetError):
    code = "EmptySubshift"


class NotIrreducible(CarpetError):
    code = "NotIrreducible"


class NotAWord(CarpetError):
    code = "NotAWord"


class InvalidFactorMap(CarpetError):
    code = "InvalidFactorMap"


class NoApplicableTheorem(CarpetError):
    code = "NoApplicableTheorem"

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class HypothesisNotCertified(CarpetError):
    code = "HypothesisNotCertified"


class RootNotBracketed(CarpetError):
    code = "RootNotBracketed"

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class SeriesDiverges(CarpetError):
    code = "SeriesDiverges"


class NotFullShift(CarpetError):
    code = "NotFullShift"


class TooLarge(CarpetError):
    code = "TooLarge"


class SchemaError(CarpetError):
    code = "SchemaError"


class InconsistentMatrix(SchemaError):
    code = "InconsistentMatrix"
