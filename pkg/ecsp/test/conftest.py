"""Fixtures for ecsp tests

"""

import json
import os

import numpy as np

import pytest

import ecsp.config as config_mod
import ecsp.corpus as corpus_mod
import ecsp.training as training_mod


SAMPLE_DATA_DIR = os.path.join(os.path.dirname(__file__), 'sample_data')

# Emotion words determine the category of their pair
EMOTION_WORDS = {
    'anger': ('angry', 'furious'),
    'fear': ('afraid', 'scared'),
    'happiness': ('glad', 'joyful'),
    'sadness': ('sad', 'gloomy'),
}
CAUSE_WORDS = ('rain', 'exam', 'gift', 'storm', 'news', 'loss', 'letter', 'game')
FILLER_WORDS = ('the', 'a', 'then', 'and', 'so', 'we', 'it', 'was', 'very')

# Settings under which the toy model overfits the synthetic corpus
TOY_CONFIG = {
    'encoder.kind': 'toy',
    'encoder.hidden_dim': 64,
    'encoder.max_positions': 128,
    'span.max_len': 8,
    'span.phi_dim': 8,
    'pair.psi_dim': 8,
    'pair.dist_buckets': 16,
    'train.peak_lr': 1e-2,
    'train.warmup_fraction': 0.05,
    'train.total_steps': 500,
    'train.dropout': 0.0,
    'train.eval_interval_steps': 20,
    'train.patience_evals': 1000,
    'train.seed': 0,
}


collect_ignore = []  # pylint: disable=invalid-name

for dirpath, dirnames, filenames in os.walk(os.path.dirname(__file__)):
    collect_ignore += [
        os.path.join(dirpath, filename.replace('.py', '_flymake.py'))
        for filename in filenames
        if filename.endswith('.py')
    ]


def synthetic_record(rng, doc_id):
    """One synthetic document record

    Pair 1 sits in clause 0 and an optional pair 2 in clause 2; in
    each pair clause the emotion span "<e> w </e>" is followed by one
    filler token and the cause span "<c> w... </c>".  Other clauses
    are filler only.

    """
    n_pairs = int(rng.integers(1, 3))
    n_clauses = int(rng.integers(3, 6))
    pair_clauses = [0, 2][:n_pairs]
    tokens = []
    clauses = []
    pairs = []
    for clause_index in range(n_clauses):
        start = len(tokens)
        if clause_index in pair_clauses:
            category = sorted(EMOTION_WORDS)[int(rng.integers(len(EMOTION_WORDS)))]
            words = EMOTION_WORDS[category]
            emotion = ['<e>'] + [
                words[int(rng.integers(len(words)))]
                for _ in range(int(rng.integers(1, 3)))
            ] + ['</e>']
            cause = ['<c>'] + [
                CAUSE_WORDS[int(rng.integers(len(CAUSE_WORDS)))]
                for _ in range(int(rng.integers(1, 5)))
            ] + ['</c>']
            emotion_start = start
            tokens.extend(emotion)
            tokens.append(FILLER_WORDS[int(rng.integers(len(FILLER_WORDS)))])
            cause_start = len(tokens)
            tokens.extend(cause)
            pairs.append(
                {
                    'emotion': {
                        'start': emotion_start,
                        'end': emotion_start + len(emotion) - 1,
                    },
                    'cause': {
                        'start': cause_start,
                        'end': cause_start + len(cause) - 1,
                    },
                    'category': category,
                }
            )
        else:
            tokens.extend(
                FILLER_WORDS[int(rng.integers(len(FILLER_WORDS)))]
                for _ in range(int(rng.integers(3, 7)))
            )
        clauses.append({'start': start, 'end': len(tokens) - 1})
    return {'doc_id': doc_id, 'tokens': tokens, 'clauses': clauses, 'pairs': pairs}


def synthetic_records(n_documents, seed=0):
    """Records of a seeded synthetic corpus"""
    rng = np.random.default_rng(seed)
    return [
        synthetic_record(rng, 'doc{:03d}'.format(i)) for i in range(n_documents)
    ]


def records_to_corpus(records):
    """Parse records through the corpus reader"""
    return corpus_mod.read_corpus(json.dumps(record) for record in records)


def write_records(path, records):
    """Write records as a JSON-lines corpus file"""
    with open(path, 'wt', encoding='utf-8') as corpus_file:
        for record in records:
            corpus_file.write(json.dumps(record))
            corpus_file.write('\n')
    return path


def write_config(path, values):
    """Write a YAML run configuration"""
    with open(path, 'wt', encoding='utf-8') as config_file:
        for key, value in sorted(values.items()):
            config_file.write('{}: {}\n'.format(key, json.dumps(value)))
    return path


def toy_run_config(**overrides):
    """RunConfig with the toy test settings and overrides

    Keyword names use "__" for the dot in config keys.

    """
    values = dict(TOY_CONFIG)
    values.update(
        {key.replace('__', '.'): value for key, value in overrides.items()}
    )
    return config_mod.RunConfig(values)


# pylint: disable=redefined-outer-name
@pytest.fixture(scope='session')
def synthetic_corpus():
    """20-document synthetic corpus"""
    return records_to_corpus(synthetic_records(20, seed=0))


@pytest.fixture
def tiny_corpus():
    """Hand-annotated three-document corpus"""
    return corpus_mod.load_corpus(get_sample_file_path('tiny_corpus'))


@pytest.fixture(scope='session')
def overfit_checkpoint(synthetic_corpus):
    """Checkpoint of the toy model trained to fit the synthetic corpus"""
    return training_mod.train(
        synthetic_corpus,
        toy_run_config(),
        dev_documents=synthetic_corpus,
    )


def get_sample_file_path(file_name, extension='jsonl'):
    """Return path to a sample data file"""
    return os.path.join(SAMPLE_DATA_DIR, '{}.{}'.format(file_name, extension))
