"""Architectural parameters and FPGA board descriptions.

ArchConfig holds the three parameters that fully determine an accelerator
instance; FpgaSpec describes the board it runs on. Both are immutable.
"""

from dataclasses import dataclass, fields

from django.core.exceptions import ValidationError
from django.core.validators import MinValueValidator


DATA_BITS = 32
"""Bit width of every IFM, weight and OFM value (single precision)."""

WORD_BYTES = DATA_BITS // 8


def validate_integer(value):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"Expected an integer, got {value!r}.")


def validate_number(value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"Expected a number, got {value!r}.")


def _positive_number(value):
    validate_number(value)
    if not value > 0:
        raise ValidationError(f"Ensure this value is positive (got {value}).")


def _non_negative_number(value):
    validate_number(value)
    if not value >= 0:
        raise ValidationError(
            f"Ensure this value is non-negative (got {value}).")


def _multiple_of_data_bits(value):
    if isinstance(value, int) and value % DATA_BITS:
        raise ValidationError(
            f"Ensure this value is a multiple of {DATA_BITS} (got {value}).")


def run_validators(obj, validators_by_field, prefix=''):
    """Apply validators to the fields of obj and collect every violation.

    validators_by_field maps field names to lists of validators; a validator
    raising ValidationError stops the remaining validators of that field only.
    Returns a dict of field name to messages, empty when obj is valid.
    """
    errors = {}
    for name, validators in validators_by_field.items():
        value = getattr(obj, name)
        for validator in validators:
            try:
                validator(value)
            except ValidationError as e:
                errors.setdefault(prefix + name, []).extend(e.messages)
                break
    return errors


@dataclass(frozen=True)
class ArchConfig:
    """The three architectural parameters of an accelerator instance.

    pe_num     number of PEs in the 1-D systolic array (OFM parallelism)
    vec_fac    SIMD width of the partial inner product (IFM channels per load)
    reuse_fac  IP units per PE, i.e. how often each loaded IFM vector is reused
    """

    pe_num: int
    vec_fac: int
    reuse_fac: int

    _VALIDATORS = {
        'pe_num': [validate_integer, MinValueValidator(1)],
        'vec_fac': [validate_integer, MinValueValidator(1)],
        'reuse_fac': [validate_integer, MinValueValidator(1)],
    }

    def total_parallelism(self):
        """Multiply-accumulate lanes working every cycle."""
        return self.pe_num * self.vec_fac * self.reuse_fac

    def ifm_buffer_words(self):
        """Size of the shift-register IFM buffer in words."""
        return self.reuse_fac * self.vec_fac

    def as_dict(self):
        return {'pe_num': self.pe_num,
                'vec_fac': self.vec_fac,
                'reuse_fac': self.reuse_fac}

    def __str__(self):
        return (f"(pe_num={self.pe_num}, vec_fac={self.vec_fac}, "
                f"reuse_fac={self.reuse_fac})")


def validate_arch(cfg):
    """Check every ArchConfig invariant and return cfg if all of them hold.

    Raises ValidationError whose message_dict names each offending field.
    """
    errors = run_validators(cfg, ArchConfig._VALIDATORS)
    if errors:
        raise ValidationError(errors)
    return cfg


def ifm_buffer_words(cfg):
    """Return reuse_fac * vec_fac for a valid configuration."""
    return validate_arch(cfg).ifm_buffer_words()


@dataclass(frozen=True)
class FpgaSpec:
    """Resources and memory system of a target board.

    dsp_per_lane and dsp_overhead_per_ip_unit are calibration coefficients of
    the DSP cost model, see perf_model.model.dsp_usage.

    measured_gflops optionally holds the (low, high) throughput range reported
    for real hardware; it is only ever used as an annotation.

    pe_num_profile optionally holds ((pe_num, seconds), ...) pairs of an FC
    runtime curve used by the pe_num sweep instead of the modeled latency.
    """

    name: str
    dsp_count: int
    burst_width_bits: int
    mem_bandwidth_bytes_per_sec: float
    f_clk_hz: float
    dsp_per_lane: float = 1.0
    dsp_overhead_per_ip_unit: float = 0.0
    measured_gflops: tuple = None
    pe_num_profile: tuple = None
    profile_note: str = ''

    _VALIDATORS = {
        'dsp_count': [validate_integer, MinValueValidator(1)],
        'burst_width_bits': [validate_integer, MinValueValidator(1),
                             _multiple_of_data_bits],
        'mem_bandwidth_bytes_per_sec': [_positive_number],
        'f_clk_hz': [_positive_number],
        'dsp_per_lane': [_positive_number],
        'dsp_overhead_per_ip_unit': [_non_negative_number],
    }

    def __post_init__(self):
        errors = run_validators(self, FpgaSpec._VALIDATORS)
        if not self.name:
            errors.setdefault('name', []).append('This field cannot be blank.')
        if self.pe_num_profile is not None:
            if not self.pe_num_profile:
                errors.setdefault('pe_num_profile', []).append(
                    'Profile must contain at least one point.')
            for point in self.pe_num_profile:
                if len(point) != 2 or point[0] < 1 or point[1] <= 0:
                    errors.setdefault('pe_num_profile', []).append(
                        f"Bad profile point {point!r}.")
        if errors:
            raise ValidationError(errors)

    def bytes_per_cycle(self):
        """Off-chip bytes deliverable per kernel clock cycle."""
        return self.mem_bandwidth_bytes_per_sec / self.f_clk_hz

    @classmethod
    def from_dict(cls, data):
        """Build a spec from a plain dict, ignoring unknown keys."""
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in data.items() if k in known}
        if kwargs.get('measured_gflops') is not None:
            kwargs['measured_gflops'] = tuple(kwargs['measured_gflops'])
        if kwargs.get('pe_num_profile') is not None:
            kwargs['pe_num_profile'] = tuple(
                (int(pe), float(seconds))
                for pe, seconds in kwargs['pe_num_profile'])
        missing = [f.name for f in fields(cls)
                   if f.name in ('name', 'dsp_count', 'burst_width_bits',
                                 'mem_bandwidth_bytes_per_sec', 'f_clk_hz')
                   and f.name not in kwargs]
        if missing:
            raise ValidationError(
                {name: ['This field is required.'] for name in missing})
        return cls(**kwargs)

    def __str__(self):
        return self.name
