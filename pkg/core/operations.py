from enum import Enum

from core.errors import DomainError


class OperationKind(str, Enum):
    """The three free operations and their CLI spellings."""

    ADDITIVE = "add"
    MULTIPLICATIVE = "mul"
    COMPRESSION = "comp"

    @classmethod
    def parse(cls, value: "str | OperationKind") -> "OperationKind":
        if isinstance(value, cls):
            return value
        aliases = {
            "add": cls.ADDITIVE,
            "additive": cls.ADDITIVE,
            "mul": cls.MULTIPLICATIVE,
            "multiplicative": cls.MULTIPLICATIVE,
            "comp": cls.COMPRESSION,
            "compression": cls.COMPRESSION,
            "minor": cls.COMPRESSION,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise DomainError(f"Unknown operation kind: {value!r}") from None


def combine(x, y, kind: OperationKind):
    """x ⊙ y for the additive or multiplicative kind (numpy-broadcasting)."""
    if kind is OperationKind.ADDITIVE:
        return x + y
    if kind is OperationKind.MULTIPLICATIVE:
        return x * y
    raise DomainError(f"{kind.value} has no binary combination rule")
