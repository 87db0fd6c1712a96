"""
Pipeline configuration.

One JSON document with a section per module; every field has a default, and
any key can be overridden from the command line as ``section.key=value``.
Each section is validated by a form; the cleaned data builds a frozen
dataclass.
"""
from dataclasses import asdict, dataclass, field
import json
import logging
from pathlib import Path

from django import forms
from django.conf import settings
from django.core.exceptions import ValidationError

logger = logging.getLogger(__name__)


# -------------------------
# Sections
# -------------------------

@dataclass(frozen=True)
class SceneConfig:
    n_agents: int = 3
    n_objects: int = 16
    extent: tuple = (-40.0, 40.0, -40.0, 40.0)
    # agents stay within this radius of the extent center so their views overlap
    agent_radius: float = 20.0
    # surface points per m^2 at 1 m range; falls off with range^2
    density: float = 4000.0
    max_range: float = 70.0
    # LiDAR origin above the ground, over the agent's box center
    sensor_height: float = 1.9
    azimuth_bin: float = 0.001
    clearance: float = 0.8
    max_place_attempts: int = 2000
    length_range: tuple = (3.8, 5.2)
    width_range: tuple = (1.7, 2.1)
    height_range: tuple = (1.4, 1.9)
    # unlabeled static obstacles: seen and occluding, never in the ground truth
    n_clutter: int = 3
    clutter_size_range: tuple = (3.0, 6.0)
    clutter_height_range: tuple = (1.2, 2.5)
    ground: bool = False
    ground_density: float = 50.0


@dataclass(frozen=True)
class NoiseModel:
    sigma_xy: float = 0.0
    # heading noise is off unless asked for
    sigma_yaw: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class SurrogateConfig:
    p_detect: float = 0.9
    p_detect_agent: float = 1.0
    jitter_pos: float = 0.1
    jitter_size: float = 0.02
    jitter_yaw: float = 0.02
    # loose-fit bias added to every half-extent of a TP box
    jitter_margin: float = 0.2
    # share of the jitter agents get; the detector fits them tightly
    agent_jitter: float = 0.0
    fp_per_frame: float = 10.0
    fp_clutter_fraction: float = 0.3
    fp_max_attempts: int = 100
    a_tp: float = 5.0
    b_tp: float = 2.0
    a_fp: float = 2.0
    b_fp: float = 5.0
    a_agent: float = 20.0
    b_agent: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class MbeParams:
    eta_enlarge: float = 0.5
    eta_reduce: float = 0.2
    phi_r: float = 0.1
    phi_o: float = 0.7
    n_min: int = 5
    epsilon_d: float = 0.01
    use_cpe: bool = True
    use_bae: bool = True
    use_ice: bool = True


LICL_VARIANTS = ('verbatim', 'infonce')


@dataclass(frozen=True)
class LiclParams:
    tau: float = 0.07
    gamma: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    normalize_features: bool = True
    variant: str = 'verbatim'


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.5
    mode: str = 'bev'
    bins: int = 10
    thresholds: tuple = (0.3, 0.5, 0.7)
    deltas: tuple = (0.01, 0.1, 0.3, 0.5, 0.7, 0.9)
    phi_r_grid: tuple = (0.01, 0.05, 0.10, 0.15, 0.20)
    phi_o_grid: tuple = (0.1, 0.3, 0.5, 0.7, 0.8, 0.9)
    eta_grid: tuple = ((0.4, 0.2), (0.4, 0.3), (0.5, 0.2), (0.5, 0.3), (0.6, 0.2), (0.6, 0.3), (0.6, 0.4))
    sigma_grid: tuple = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    noise_seeds: int = 10
    licl_instances: int = 50


@dataclass(frozen=True)
class CorpusConfig:
    n_frames: int = 100
    first_frame: int = 0


# -------------------------
# Fields
# -------------------------

def above(limit):
    def check(value):
        if not value > limit:
            raise ValidationError(f"must be > {limit:g}", code='not_above')
    return check


def below(limit):
    def check(value):
        if not value < limit:
            raise ValidationError(f"must be < {limit:g}", code='not_below')
    return check


class NumberField(forms.FloatField):
    """JSON numbers only; true/false and quoted numbers are rejected."""

    def to_python(self, value):
        if isinstance(value, (bool, str)):
            raise ValidationError(self.error_messages['invalid'], code='invalid')
        return super().to_python(value)


class CountField(forms.IntegerField):

    def to_python(self, value):
        if isinstance(value, (bool, str)) or (isinstance(value, float) and not value.is_integer()):
            raise ValidationError(self.error_messages['invalid'], code='invalid')
        return super().to_python(value)


class SwitchField(forms.BooleanField):
    # a plain widget: the checkbox one turns 1 and "yes" into True
    widget = forms.TextInput

    def __init__(self, **kwargs):
        kwargs.setdefault('required', False)
        super().__init__(**kwargs)

    def to_python(self, value):
        if not isinstance(value, bool):
            raise ValidationError("expected true/false", code='invalid')
        return value


class TupleField(forms.Field):
    """
    A non-empty JSON list frozen to a tuple. Entries are numbers, or
    ``[a, b]`` pairs of numbers when ``pairs`` is set.
    """

    def __init__(self, length=None, pairs=False, **kwargs):
        self.length = length
        self.pairs = pairs
        super().__init__(**kwargs)

    def to_python(self, value):
        if not isinstance(value, (list, tuple)):
            raise ValidationError("expected a list", code='invalid')
        if self.length is not None and len(value) != self.length:
            raise ValidationError(f"expected {self.length} values, got {len(value)}", code='invalid')
        item = TupleField(length=2) if self.pairs else NumberField()
        return tuple(item.clean(v) for v in value)


def positive():
    return NumberField(validators=[above(0.0)])


def unit():
    return NumberField(min_value=0.0, max_value=1.0)


def _clean_range(form, key):
    lo, hi = form.cleaned_data[key]
    if not 0 < lo <= hi:
        raise ValidationError("expected 0 < lo <= hi")
    return lo, hi


# -------------------------
# Forms
# -------------------------

class SceneForm(forms.Form):
    n_agents = CountField(min_value=2, error_messages={'min_value': "a frame needs at least two agents"})
    n_objects = CountField(min_value=0)
    extent = TupleField(length=4)
    agent_radius = positive()
    density = positive()
    max_range = positive()
    sensor_height = NumberField(min_value=0.0)
    azimuth_bin = positive()
    clearance = NumberField(min_value=0.0)
    max_place_attempts = CountField(min_value=1)
    length_range = TupleField(length=2)
    width_range = TupleField(length=2)
    height_range = TupleField(length=2)
    n_clutter = CountField(min_value=0)
    clutter_size_range = TupleField(length=2)
    clutter_height_range = TupleField(length=2)
    ground = SwitchField()
    ground_density = positive()

    def clean_extent(self):
        x_min, x_max, y_min, y_max = self.cleaned_data['extent']
        if not (x_max > x_min and y_max > y_min):
            raise ValidationError("extent is empty")
        return self.cleaned_data['extent']

    def clean_length_range(self):
        return _clean_range(self, 'length_range')

    def clean_width_range(self):
        return _clean_range(self, 'width_range')

    def clean_height_range(self):
        return _clean_range(self, 'height_range')

    def clean_clutter_size_range(self):
        return _clean_range(self, 'clutter_size_range')

    def clean_clutter_height_range(self):
        return _clean_range(self, 'clutter_height_range')


class NoiseForm(forms.Form):
    sigma_xy = NumberField(min_value=0.0)
    sigma_yaw = NumberField(min_value=0.0)
    seed = CountField()


class SurrogateForm(forms.Form):
    p_detect = unit()
    p_detect_agent = unit()
    jitter_pos = NumberField(min_value=0.0)
    jitter_size = NumberField(min_value=0.0)
    jitter_yaw = NumberField(min_value=0.0)
    jitter_margin = NumberField(min_value=0.0)
    agent_jitter = unit()
    fp_per_frame = NumberField(min_value=0.0)
    fp_clutter_fraction = unit()
    fp_max_attempts = CountField(min_value=1)
    a_tp = positive()
    b_tp = positive()
    a_fp = positive()
    b_fp = positive()
    a_agent = positive()
    b_agent = positive()
    seed = CountField()

    def clean(self):
        data = super().clean()
        beta = [data.get(key) for key in ('a_tp', 'b_tp', 'a_fp', 'b_fp')]
        if None not in beta:
            a_tp, b_tp, a_fp, b_fp = beta
            if a_tp / (a_tp + b_tp) <= a_fp / (a_fp + b_fp):
                self.add_error('a_tp', "expected TP score must exceed expected FP score")
        return data


class MbeForm(forms.Form):
    eta_enlarge = positive()
    eta_reduce = NumberField(validators=[above(0.0), below(1.0)])
    phi_r = positive()
    phi_o = NumberField(validators=[above(0.0), below(1.0)])
    n_min = CountField(min_value=3, error_messages={'min_value': "a hull needs at least 3 points"})
    epsilon_d = positive()
    use_cpe = SwitchField()
    use_bae = SwitchField()
    use_ice = SwitchField()


class LiclForm(forms.Form):
    tau = positive()
    gamma = NumberField(min_value=0.0)
    alpha = NumberField()
    beta = NumberField()
    normalize_features = SwitchField()
    variant = forms.ChoiceField(choices=[(v, v) for v in LICL_VARIANTS])


class EvalForm(forms.Form):
    iou_threshold = NumberField(validators=[above(0.0), below(1.0)])
    mode = forms.ChoiceField(choices=[('bev', 'bev'), ('3d', '3d')])
    bins = CountField(min_value=1)
    thresholds = TupleField()
    deltas = TupleField()
    phi_r_grid = TupleField()
    phi_o_grid = TupleField()
    eta_grid = TupleField(pairs=True)
    sigma_grid = TupleField()
    noise_seeds = CountField(min_value=1)
    licl_instances = CountField(min_value=1)

    def clean_thresholds(self):
        values = self.cleaned_data['thresholds']
        if not all(0 < t < 1 for t in values):
            raise ValidationError("thresholds must be in (0, 1)")
        return values

    def clean_deltas(self):
        values = self.cleaned_data['deltas']
        if not all(0 <= d <= 1 for d in values):
            raise ValidationError("deltas must be in [0, 1]")
        return values

    def clean_sigma_grid(self):
        values = self.cleaned_data['sigma_grid']
        if not all(0 <= s <= 2 for s in values):
            raise ValidationError("sigmas must be in [0, 2]")
        return values


class CorpusForm(forms.Form):
    n_frames = CountField(min_value=1)
    first_frame = CountField(min_value=0)


class RunForm(forms.Form):
    seed = CountField()


SECTIONS = {
    'scene': (SceneConfig, SceneForm),
    'noise': (NoiseModel, NoiseForm),
    'surrogate': (SurrogateConfig, SurrogateForm),
    'mbe': (MbeParams, MbeForm),
    'licl': (LiclParams, LiclForm),
    'eval': (EvalConfig, EvalForm),
    'corpus': (CorpusConfig, CorpusForm),
}


def _clean(form, prefix):
    """Run ``form``; errors come back as one ``prefix.key: message`` line each."""
    if form.is_valid():
        return form.cleaned_data
    raise ValidationError([
        f"{prefix}{key}: {message}"
        for key, errors in form.errors.as_data().items()
        for error in errors
        for message in error
    ])


def _build_section(name, data):
    config_cls, form_cls = SECTIONS[name]
    if not isinstance(data, dict):
        raise ValidationError(f"{name}: expected an object")
    unknown = set(data) - set(form_cls.base_fields)
    if unknown:
        raise ValidationError(f"{name}: unknown key(s) {', '.join(sorted(unknown))}")
    values = {**asdict(config_cls()), **data}
    return config_cls(**_clean(form_cls(data=values), f"{name}."))


@dataclass(frozen=True)
class PipelineConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    mbe: MbeParams = field(default_factory=MbeParams)
    licl: LiclParams = field(default_factory=LiclParams)
    eval: EvalConfig = field(default_factory=EvalConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    seed: int = 0

    def validate(self):
        """The same config, cleaned; raises ValidationError when any value is out of range."""
        return type(self).from_dict(self.to_dict())

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ValidationError("config: expected a JSON object at top level")
        unknown = set(data) - set(SECTIONS) - {'seed'}
        if unknown:
            raise ValidationError(f"config: unknown section(s) {', '.join(sorted(unknown))}")
        built = {name: _build_section(name, data.get(name, {})) for name in SECTIONS}
        seed = _clean(RunForm(data={'seed': data.get('seed', 0)}), '')['seed']
        return cls(seed=seed, **built)


def parse_override(text):
    """``section.key=value`` -> (section, key, value); the value is JSON or a bare string."""
    path, sep, raw = text.partition('=')
    if not sep or not path:
        raise ValidationError(f"override {text!r}: expected section.key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = path.strip().split('.')
    if parts == ['seed']:
        return None, 'seed', value
    if len(parts) != 2:
        raise ValidationError(f"override {text!r}: expected section.key=value")
    return parts[0], parts[1], value


def load_config(path=None, overrides=()):
    """Read the config file (or the defaults), apply overrides, validate."""
    path = path or settings.AUTOLABEL.get('CONFIG') or None
    data = {}
    if path:
        path = Path(path)
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as exc:
            raise ValidationError(f"{path}: cannot read config ({exc.strerror})")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:{exc.lineno}: {exc.msg}")
        logger.debug("loaded config %s", path)
    for text in overrides:
        section, key, value = parse_override(text)
        if section is None:
            data[key] = value
        else:
            if not isinstance(data.setdefault(section, {}), dict):
                raise ValidationError(f"{section}: expected an object")
            data[section][key] = value
    return PipelineConfig.from_dict(data)
