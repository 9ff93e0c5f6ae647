"""Exception and warning types shared across the package."""


class MorphoError(ValueError):
    """Base class for all errors raised by morphoclass."""


class InvalidInputError(MorphoError):
    pass


class DegenerateConfigurationError(MorphoError):
    pass


class TemplateMismatchError(MorphoError):
    pass


class InsufficientSampleError(MorphoError):
    pass


class SingularRegressorError(MorphoError):
    pass


class DegenerateLabelsError(MorphoError):
    pass


class TpsParseError(MorphoError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ArtifactError(MorphoError):
    pass


class ArtifactVersionError(ArtifactError):
    pass


class ArtifactIntegrityError(ArtifactError):
    pass


class RankDeficiencyWarning(UserWarning):
    """Pooled covariance has lower rank than expected; a pseudo-inverse is used."""


class NumericalInstabilityWarning(UserWarning):
    pass


class SmallSampleWarning(UserWarning):
    pass


class SeparationWarning(UserWarning):
    """Logistic fit diverged and was refitted with a small ridge penalty."""
