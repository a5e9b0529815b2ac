class ConfigurationError(ValueError):
    """Invalid user-supplied settings (widths, pool ratio, config file fields)."""


class ShapeError(ValueError):
    pass


class NumericDivergenceError(FloatingPointError):
    """Training or synthesis produced a non-finite value.

    ``epoch`` is the training epoch (or synthesis step) at which it happened and
    ``member`` the committee index when raised from committee training.
    """

    def __init__(self, message, epoch=None, member=None):
        super().__init__(message)
        self.epoch = epoch
        self.member = member


class UnsupportedOracleError(NotImplementedError):
    pass


class UndefinedEfficiencyError(ValueError):
    def __init__(self, message, n_al_excluded=0, n_rand_excluded=0):
        super().__init__(message)
        self.n_al_excluded = n_al_excluded
        self.n_rand_excluded = n_rand_excluded
