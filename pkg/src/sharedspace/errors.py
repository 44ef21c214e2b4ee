"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a structural requirement (shapes, vocabularies, arity)."""


class ParseError(ValidationError):
    """A text file could not be parsed.

    ``lineno`` is 1-based and refers to the physical line in the file.
    """

    def __init__(self, message, path=None, lineno=None):
        self.path = path
        self.lineno = lineno
        where = ""
        if path is not None:
            where += f"{path}"
        if lineno is not None:
            where += f":{lineno}" if where else f"line {lineno}"
        super().__init__(f"{where}: {message}" if where else message)
