"""Run configuration

A run configuration is a flat YAML mapping from dotted key names to
values, for instance:

  encoder.kind: toy
  span.max_len: 20
  train.total_steps: 20000

Keys not listed in DEFAULTS are rejected.  train.total_steps has no
default and must be given.

"""

import logging

import yaml


LOG = logging.getLogger('ecsp.config')

REQUIRED = object()

DEFAULTS = {
    'encoder.kind': 'toy',
    'encoder.model_id': 'bert-base-chinese',
    'encoder.hidden_dim': 64,
    'encoder.max_positions': 512,
    'encoder.trainable': True,
    'encoder.seed': 0,
    'span.max_len': 20,
    'span.phi_dim': 25,
    'span.candidates': 'spans',
    'pair.psi_dim': 50,
    'pair.dist_buckets': 64,
    'pair.use_localized_context': True,
    'train.peak_lr': 5e-5,
    'train.warmup_fraction': 0.1,
    'train.total_steps': REQUIRED,
    'train.dropout': 0.1,
    'train.batch_size': 1,
    'train.patience_evals': 20,
    'train.eval_interval_steps': None,
    'train.seed': 0,
    'train.span_loss_weight': 1.0,
    'train.pair_loss_weight': 1.0,
    'train.neg_downsample': None,
    'train.dev_fraction': 0.1,
}

KEY_TYPES = {
    'encoder.kind': str,
    'encoder.model_id': str,
    'encoder.hidden_dim': int,
    'encoder.max_positions': int,
    'encoder.trainable': bool,
    'encoder.seed': int,
    'span.max_len': int,
    'span.phi_dim': int,
    'span.candidates': str,
    'pair.psi_dim': int,
    'pair.dist_buckets': int,
    'pair.use_localized_context': bool,
    'train.peak_lr': float,
    'train.warmup_fraction': float,
    'train.total_steps': int,
    'train.dropout': float,
    'train.batch_size': int,
    'train.patience_evals': int,
    'train.eval_interval_steps': int,
    'train.seed': int,
    'train.span_loss_weight': float,
    'train.pair_loss_weight': float,
    'train.neg_downsample': float,
    'train.dev_fraction': float,
}

# Keys that may be null
OPTIONAL_KEYS = frozenset(
    ['train.eval_interval_steps', 'train.neg_downsample']
)


class ConfigError(ValueError):
    """Invalid run configuration"""


class RunConfig:
    """Validated run configuration

    Behaves as a read-only mapping from dotted key names to values,
    with every key of DEFAULTS present.

    """

    __slots__ = ['_values']

    def __init__(self, values=None):
        values = {} if values is None else dict(values)
        unknown = sorted(set(values) - set(DEFAULTS))
        if unknown:
            raise ConfigError(
                'unknown config key(s): {}'.format(', '.join(unknown))
            )
        merged = {}
        for key, default in DEFAULTS.items():
            if key in values:
                merged[key] = coerce_value(key, values[key])
            elif default is REQUIRED:
                raise ConfigError(
                    'missing required config key "{}"'.format(key)
                )
            else:
                merged[key] = default
        check_constraints(merged)
        self._values = merged

    def __getitem__(self, key):
        return self._values[key]

    def __iter__(self):
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def __eq__(self, other):
        return isinstance(other, RunConfig) and (
            self._values == other._values
        )

    def __repr__(self):
        return 'RunConfig({!r})'.format(self._values)

    def to_dict(self):
        """Plain dict copy, suitable for JSON"""
        return dict(self._values)

    def with_overrides(self, overrides):
        """Return a new RunConfig with some values replaced"""
        values = self.to_dict()
        values.update(overrides)
        return RunConfig(values)


def load_config(config_file, overrides=None):
    """Load a run configuration from a YAML file object

    overrides is a mapping applied on top of the file contents, for
    instance from --set flags.

    """
    try:
        values = yaml.safe_load(config_file)
    except yaml.YAMLError as error:
        raise ConfigError(  # pylint: disable=raise-missing-from
            'config file is not valid YAML: {}'.format(error)
        )
    if values is None:
        values = {}
    if not isinstance(values, dict):
        raise ConfigError(
            'config file must hold a mapping, got {}'.format(
                type(values).__name__
            )
        )
    values.update(overrides or {})
    return RunConfig(values)


def parse_overrides(assignments):
    """Parse KEY=VALUE strings into a dict

    Values are parsed as YAML scalars, so "false" is a bool and "20"
    an integer.

    """
    overrides = {}
    for assignment in assignments or ():
        key, sep, text = assignment.partition('=')
        if not sep or not key:
            raise ConfigError(
                'override "{}" is not of the form KEY=VALUE'.format(
                    assignment
                )
            )
        overrides[key.strip()] = yaml.safe_load(text)
    return overrides


def coerce_value(key, value):
    """Coerce a config value to the type of its key"""
    value_type = KEY_TYPES[key]
    if value is None:
        if key in OPTIONAL_KEYS:
            return None
        raise ConfigError('config key "{}" may not be null'.format(key))
    if value_type is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ('true', 'false'):
            return value.lower() == 'true'
        raise ConfigError(
            'config key "{}" must be true or false, got {!r}'.format(
                key, value
            )
        )
    if value_type is int:
        if isinstance(value, bool):
            raise ConfigError(
                'config key "{}" must be an integer, got {!r}'.format(
                    key, value
                )
            )
        if isinstance(value, float) and value.is_integer():
            return int(value)
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(  # pylint: disable=raise-missing-from
                'config key "{}" must be an integer, got {!r}'.format(
                    key, value
                )
            )
    if value_type is float:
        if isinstance(value, bool):
            raise ConfigError(
                'config key "{}" must be a number, got {!r}'.format(
                    key, value
                )
            )
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(  # pylint: disable=raise-missing-from
                'config key "{}" must be a number, got {!r}'.format(
                    key, value
                )
            )
    if not isinstance(value, str):
        raise ConfigError(
            'config key "{}" must be a string, got {!r}'.format(key, value)
        )
    return value


def check_constraints(values):
    """Check value ranges; raises ConfigError"""

    def require(condition, message, *args):
        if not condition:
            raise ConfigError(message.format(*args))

    require(
        values['encoder.kind'] in ('toy', 'pretrained'),
        'encoder.kind must be "toy" or "pretrained", got "{}"',
        values['encoder.kind'],
    )
    if values['encoder.kind'] == 'toy':
        require(
            values['encoder.hidden_dim'] >= 8,
            'encoder.hidden_dim must be >= 8 for the toy encoder, got {}',
            values['encoder.hidden_dim'],
        )
    require(
        values['span.candidates'] in ('spans', 'clauses'),
        'span.candidates must be "spans" or "clauses", got "{}"',
        values['span.candidates'],
    )
    for key in (
        'encoder.max_positions',
        'span.max_len',
        'span.phi_dim',
        'pair.psi_dim',
        'pair.dist_buckets',
        'train.patience_evals',
    ):
        require(values[key] >= 1, '{} must be >= 1, got {}', key, values[key])
    require(
        values['train.total_steps'] >= 2,
        'train.total_steps must be >= 2, got {}',
        values['train.total_steps'],
    )
    require(
        values['train.peak_lr'] > 0,
        'train.peak_lr must be positive, got {}',
        values['train.peak_lr'],
    )
    for key in ('train.warmup_fraction', 'train.dev_fraction'):
        require(
            0 < values[key] < 1, '{} must lie in (0, 1), got {}',
            key, values[key],
        )
    require(
        0 <= values['train.dropout'] < 1,
        'train.dropout must lie in [0, 1), got {}',
        values['train.dropout'],
    )
    require(
        values['train.batch_size'] == 1,
        'only train.batch_size 1 is supported, got {}',
        values['train.batch_size'],
    )
    for key in ('train.span_loss_weight', 'train.pair_loss_weight'):
        require(values[key] >= 0, '{} must be >= 0, got {}', key, values[key])
    interval = values['train.eval_interval_steps']
    require(
        interval is None or interval >= 1,
        'train.eval_interval_steps must be >= 1, got {}',
        interval,
    )
    ratio = values['train.neg_downsample']
    require(
        ratio is None or 0 < ratio <= 1,
        'train.neg_downsample must lie in (0, 1], got {}',
        ratio,
    )
