"""Checkpoint storage

A checkpoint directory holds:

  metadata.json      schema_version, config, categories, encoder_id,
                     step, dev_f1
  parameters.pt      model state dict (torch.save)
  run_metadata.json  counters collected while training

metadata.json alone is enough to rebuild the model's shapes.

"""

import collections
import json
import logging
import os
import pickle

import torch

import ecsp.config as config_mod
import ecsp.model as model_mod


LOG = logging.getLogger('ecsp.checkpoint')

SCHEMA_VERSION = 1
METADATA_FILE = 'metadata.json'
PARAMETERS_FILE = 'parameters.pt'
RUN_METADATA_FILE = 'run_metadata.json'
METADATA_KEYS = frozenset(
    ['schema_version', 'config', 'categories', 'encoder_id', 'step', 'dev_f1']
)

Checkpoint = collections.namedtuple(
    'Checkpoint', ['metadata', 'parameters', 'run_metadata']
)


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint"""


def make_metadata(run_config, categories, encoder_id, step, dev_f1):
    """Assemble a checkpoint metadata record"""
    return {
        'schema_version': SCHEMA_VERSION,
        'config': run_config.to_dict(),
        'categories': list(categories),
        'encoder_id': encoder_id,
        'step': step,
        'dev_f1': dev_f1,
    }


def save_checkpoint(checkpoint, directory):
    """Write a checkpoint to a directory, creating it if needed"""
    os.makedirs(directory, exist_ok=True)
    write_json(os.path.join(directory, METADATA_FILE), checkpoint.metadata)
    write_json(
        os.path.join(directory, RUN_METADATA_FILE), checkpoint.run_metadata
    )
    torch.save(checkpoint.parameters, os.path.join(directory, PARAMETERS_FILE))
    LOG.info('checkpoint written to %s', directory)


def write_json(path, record):
    """Write a JSON document with sorted keys"""
    with open(path, 'wt', encoding='utf-8') as json_file:
        json.dump(record, json_file, indent=2, sort_keys=True, ensure_ascii=False)
        json_file.write('\n')


def load_metadata(directory):
    """Read and check checkpoint metadata"""
    path = os.path.join(directory, METADATA_FILE)
    try:
        with open(path, 'rt', encoding='utf-8') as metadata_file:
            metadata = json.load(metadata_file)
    except (OSError, ValueError) as error:
        raise CheckpointError(  # pylint: disable=raise-missing-from
            'cannot read checkpoint metadata {}: {}'.format(path, error)
        )
    if not isinstance(metadata, dict) or set(metadata) != METADATA_KEYS:
        raise CheckpointError(
            'checkpoint metadata {} must have exactly the keys {}'.format(
                path, ', '.join(sorted(METADATA_KEYS))
            )
        )
    if metadata['schema_version'] != SCHEMA_VERSION:
        raise CheckpointError(
            'checkpoint schema version {} is not supported (expected {})'.format(
                metadata['schema_version'], SCHEMA_VERSION
            )
        )
    return metadata


def build_model(metadata, parameters):
    """Rebuild a model from metadata and load its parameters"""
    try:
        run_config = config_mod.RunConfig(metadata['config'])
    except config_mod.ConfigError as error:
        raise CheckpointError(  # pylint: disable=raise-missing-from
            'checkpoint config is invalid: {}'.format(error)
        )
    model = model_mod.create_model(run_config, metadata['categories'])
    try:
        model.load_state_dict(parameters)
    except RuntimeError as error:
        raise CheckpointError(  # pylint: disable=raise-missing-from
            'checkpoint parameters do not match metadata: {}'.format(error)
        )
    model.eval()
    return model


def load_model(directory):
    """Load a model from a checkpoint directory

    Returns (model, metadata).

    """
    metadata = load_metadata(directory)
    path = os.path.join(directory, PARAMETERS_FILE)
    try:
        parameters = torch.load(path, map_location='cpu', weights_only=True)
    except (
        EOFError, OSError, RuntimeError, ValueError, pickle.UnpicklingError
    ) as error:
        raise CheckpointError(  # pylint: disable=raise-missing-from
            'cannot read checkpoint parameters {}: {}'.format(path, error)
        )
    return (build_model(metadata, parameters), metadata)
