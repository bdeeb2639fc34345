"""Exception hierarchy.

Every error carries a stable ``code`` so the CLI can print a greppable
``PICO-Exxx:`` prefix. The CLI maps the families below to exit codes:
configuration / parse problems -> 1, backend failures -> 2, I/O -> 3.
"""


class PicoError(Exception):
    code = "E000"

    def __str__(self):
        msg = ", ".join(str(a) for a in self.args)
        return f"{type(self).__name__}: {msg}" if msg else type(self).__name__


# -- configuration and input data ---------------------------------------------

class ConfigError(PicoError, ValueError):
    code = "E100"


class ManifestParseError(ConfigError):
    code = "E101"


class MissingSampleFile(ConfigError):
    code = "E102"


class PreprocessError(PicoError, ValueError):
    code = "E110"

    def __init__(self, message="", sample_id=None):
        if sample_id is not None:
            message = f"sample {sample_id!r}: {message}"
        super().__init__(message)
        self.sample_id = sample_id


class ZeroStd(PreprocessError):
    code = "E111"


class NotPowerOfTwo(PreprocessError):
    code = "E112"


class ClipTooShort(PreprocessError):
    code = "E113"


class NonPositiveScale(PreprocessError):
    code = "E114"


class UnsupportedFormat(PreprocessError):
    code = "E115"


class MalformedHeader(PreprocessError):
    code = "E116"


# -- system counters -----------------------------------------------------------

class CounterSourceUnavailable(PicoError, OSError):
    code = "E120"


class NoDelta(PicoError, ArithmeticError):
    """The snapshot window was shorter than the tick counter resolution."""

    code = "E121"


# -- backends ----------------------------------------------------------------

class BackendError(PicoError, RuntimeError):
    code = "E200"


class SpawnFailure(BackendError):
    code = "E201"


class HandshakeTimeout(BackendError):
    code = "E202"


class ReplayFileMissing(BackendError):
    code = "E203"


class ShapeMismatch(BackendError):
    code = "E204"


class BackendTimeout(BackendError):
    code = "E205"


class ProtocolError(BackendError):
    code = "E206"


class BackendCrashed(BackendError):
    code = "E207"


# -- statistics ----------------------------------------------------------------

class StatsError(PicoError, ValueError):
    code = "E250"


class EmptySeries(StatsError):
    code = "E251"


class NonFiniteValue(StatsError):
    code = "E252"


class MissingMetric(StatsError, KeyError):
    code = "E253"


# -- persistence ---------------------------------------------------------------

class ResultIOError(PicoError, OSError):
    code = "E300"


class ParseError(PicoError, ValueError):
    code = "E310"


class SchemaVersionMismatch(ParseError):
    code = "E311"


def exit_code_for(err):
    """Process exit status for a PicoError raised out of a CLI command."""
    if isinstance(err, BackendError):
        return 2
    if isinstance(err, ResultIOError):
        return 3
    return 1
