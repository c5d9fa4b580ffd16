"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError (and its
store/format subtypes) -> 3, anything else -> 4.
"""


class ConfigError(ValueError):
    """Invalid configuration value or combination."""


class DataError(Exception):
    """Problem with input data files or their contents."""


class ParseError(DataError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class DuplicateIdError(DataError):
    def __init__(self, item_id):
        super().__init__(f"duplicate item_id {item_id}")
        self.item_id = item_id


class UnsortedInputError(DataError):
    def __init__(self, user_id):
        super().__init__(f"events for user {user_id} cannot be ordered")
        self.user_id = user_id


class TooShortError(DataError):
    def __init__(self, user_id, length):
        super().__init__(f"user {user_id} has only {length} events; need >= 3")
        self.user_id = user_id
        self.length = length


class StoreError(DataError):
    """Embedding / checkpoint file format problems."""


class BadMagicError(StoreError):
    pass


class BadVersionError(StoreError):
    pass


class DimMismatchError(StoreError):
    pass


class MissingItemError(StoreError):
    def __init__(self, item_id, context=""):
        suffix = f" ({context})" if context else ""
        super().__init__(f"no embedding for item {item_id}{suffix}")
        self.item_id = item_id


class EmptyInputError(ValueError):
    pass


class ShapeMismatchError(ValueError):
    pass


class AllMaskedRowError(ValueError):
    def __init__(self, row):
        super().__init__(f"attention mask row {row} allows no positions")
        self.row = row


class SeqTooLongError(ValueError):
    def __init__(self, length, max_len):
        super().__init__(f"sequence length {length} exceeds max_len {max_len}")
        self.length = length
        self.max_len = max_len


class BadHyperparamsError(ConfigError):
    pass


class CountExceedsLenError(ValueError):
    pass


class BatchTooSmallError(ValueError):
    pass


class EmptyIndexError(ValueError):
    pass


class EmptyTargetsError(ValueError):
    pass
