"""Exception types raised across the package."""


class SkillBankError(Exception):
    """Base class for all errors raised by skillbank."""


class KeyShapeMismatch(SkillBankError, ValueError):
    """Observation text presence does not match the skill kind."""


class SchemaVersionMismatch(SkillBankError):
    pass


class MalformedRecord(SkillBankError, ValueError):
    pass


class PhaseViolation(SkillBankError, RuntimeError):
    """A mutation was attempted while the bank was in its read-only phase."""


class UnknownSkillId(SkillBankError, KeyError):
    pass


class UnbalancedGroup(SkillBankError, ValueError):
    pass


class DimensionMismatch(SkillBankError, ValueError):
    pass


class DomainMismatch(SkillBankError, ValueError):
    pass


class RemoteUnavailable(SkillBankError, ConnectionError):
    pass


class ReflectorFailure(SkillBankError):
    pass


class InadmissibleAction(SkillBankError, ValueError):
    pass


class ConfigError(SkillBankError, ValueError):
    pass
