"""Exception types shared across the toolkit."""


class VocabexError(Exception):
    """Base class for all toolkit errors."""


class FormatError(VocabexError):
    """A serialized artifact (tokenizer JSON, alignment table, matrix file,
    corpus file, config) is malformed or inconsistent."""
