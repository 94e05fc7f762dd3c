"""Exception hierarchy shared across the package.

Every error carries a short machine-parsable category so the CLI can emit
one-line failures (`error: <category>: <message>`).
"""


class T2TError(Exception):
    category = "generic"


class ConfigError(T2TError):
    category = "config"


class DataError(T2TError):
    category = "data"


class VocabError(T2TError):
    category = "vocab"


class ModelError(T2TError):
    category = "model"


class DecodeError(T2TError):
    category = "decode"
