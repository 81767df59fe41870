"""
Error hierarchy shared by every lcv_auto module.
"""


class LcvError(Exception):
    """
    Base class of all errors raised by lcv_auto.
    """


class InputDomainError(LcvError, ValueError):
    """
    A numeric input lies outside the domain of the operation (non-finite, negative speed, ...).
    """


class ConfigurationError(LcvError, ValueError):
    """
    Parameters, gains or tables are invalid (also raised for an invalid gear index).
    """


class NumericalDivergenceError(LcvError, RuntimeError):
    """
    The integrated state became non-finite.

    :param step_index: index of the plant step that produced the offending state
    """

    def __init__(self, message: str, step_index: int = -1):
        super().__init__(f"{message} (step {step_index})")
        self.step_index = step_index


class SensorFaultError(LcvError):
    """
    A sensor value that a controller relies on is physically impossible.
    """


class DegenerateGeometryError(LcvError, ValueError):
    """
    Geometry is undefined, e.g. a bearing between coincident points.
    """


class EncodingError(LcvError, ValueError):
    """
    A message field cannot be put on the wire.
    """


class FramingError(LcvError, ValueError):
    """
    A wire package does not have the published layout.
    """


class MappingError(LcvError, KeyError):
    """
    An identifier is missing from the UDP to CAN mapping table.
    """

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ScenarioError(LcvError):
    """
    A scenario file cannot be parsed or validated.

    :param path: file the problem was found in
    :param line: 1-based line number, if known
    """

    def __init__(self, message: str, path=None, line: int = None):
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "

        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


class SchemaError(LcvError, KeyError):
    """
    A trace lacks the columns an evaluation needs.
    """

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class OutputError(LcvError, OSError):
    """
    Writing an output file failed.

    :param path: the file that could not be written
    """

    def __init__(self, message: str, path=None):
        super().__init__(f"{message}: {path}")
        self.path = path
