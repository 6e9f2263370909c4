class FuzzyBMLError(ValueError):
    """Base class for every rejection raised by the library."""


class SchemaError(FuzzyBMLError):
    pass


class CaseFormatError(FuzzyBMLError):
    """A case file row could not be parsed.

    ``row`` is the 1-based line number in the source (header is line 1) and
    ``column`` the offending column name, when known.
    """

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class GraphError(FuzzyBMLError):
    pass


class CycleError(FuzzyBMLError):
    def __init__(self, message, cycle):
        self.cycle = list(cycle)
        super().__init__(f"{message}: {' -> '.join(self.cycle)}")


class RuleBaseError(FuzzyBMLError):
    pass


class FuzzyConfigError(FuzzyBMLError):
    pass
