"""Error types shared across the package.

The three category bases map onto CLI exit codes: ConfigError -> 2,
DataError -> 3, NumericError -> 4.
"""


class AutofmError(Exception):
    pass


class ConfigError(AutofmError):
    pass


class DataError(AutofmError):
    pass


class NumericError(AutofmError):
    pass


# --- fm-core ---

class EmptyPatch(DataError):
    """No carrier reaches the output after pruning."""


class EnvelopeMissing(DataError):
    def __init__(self, oscillator_id):
        super().__init__(f"no envelope for oscillator {oscillator_id}")
        self.oscillator_id = oscillator_id


class LengthMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


# --- audio-features ---

class UnreadableAudio(DataError):
    pass


class TooFewFrames(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NonPSD(NumericError):
    """Covariance is not positive semi-definite beyond the clamp tolerance."""


# --- envelope-model ---

class UnknownHead(DataError):
    def __init__(self, layer, ratio_steps):
        super().__init__(f"model has no head for layer {layer}, ratio step {ratio_steps}")
        self.layer = layer
        self.ratio_steps = ratio_steps


class NonFiniteLoss(NumericError):
    pass


class EmptyDataset(DataError):
    pass


# --- evolve-search ---

class IllegalConnection(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class ConstraintUnsatisfiable(ConfigError):
    pass


# --- pipeline ---

class EmptyCorpus(DataError):
    pass


class IllegalEdit(DataError):
    pass
