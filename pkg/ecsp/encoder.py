"""Contextual token encoders

Two encoders share one contract: called on a sequence of corpus
tokens, they return a TokenEncoding with one d-dimensional row per
token and a d-dimensional document-level context vector.

  toy:         frozen hash-derived token and position embeddings,
               a trainable affine layer and tanh; the context vector
               is the mean row passed through a second affine layer.
  pretrained:  a pretrained bidirectional transformer from the
               transformers library; subword pieces are mean-pooled
               back onto corpus tokens and the context vector is the
               final hidden state of the first ([CLS]) position.

"""

import collections
import hashlib
import logging
import os

import numpy as np

import torch
from torch import nn


LOG = logging.getLogger('ecsp.encoder')

# Scale of position embeddings relative to token embeddings in the toy
# encoder
TOY_POSITION_SCALE = 0.1

TokenEncoding = collections.namedtuple(
    'TokenEncoding', ['hidden', 'global_context']
)

EncoderConfig = collections.namedtuple(
    'EncoderConfig',
    [
        'kind',
        'model_id',
        'hidden_dim',
        'max_positions',
        'trainable',
        'seed',
        'dropout',
    ],
)

Window = collections.namedtuple('Window', ['start', 'end'])


class WindowError(ValueError):
    """Document or clause does not fit in the encoder window"""

    def __init__(self, message, doc_id=None):
        if doc_id is not None:
            message = 'doc_id {}: {}'.format(doc_id, message)
        ValueError.__init__(self, message)
        self.doc_id = doc_id


def encoder_config(run_config):
    """Extract an EncoderConfig from a RunConfig"""
    return EncoderConfig(
        kind=run_config['encoder.kind'],
        model_id=run_config['encoder.model_id'],
        hidden_dim=run_config['encoder.hidden_dim'],
        max_positions=run_config['encoder.max_positions'],
        trainable=run_config['encoder.trainable'],
        seed=run_config['encoder.seed'],
        dropout=run_config['train.dropout'],
    )


def token_limit(max_positions, model_positions, n_special):
    """Corpus tokens that fit in one window

    Leaves room for the n_special tokens a tokenizer adds around each
    window.

    """
    limit = min(max_positions, model_positions - n_special)
    if limit < 1:
        raise ValueError(
            '{} positions leave no room for tokens after {} special '
            'tokens'.format(model_positions, n_special)
        )
    return limit


def create_encoder(config):
    """Create an encoder module

    The class depends on config.kind, which must be "toy" or
    "pretrained".

    """
    if config.kind == 'toy':
        return ToyEncoder(
            hidden_dim=config.hidden_dim,
            max_positions=config.max_positions,
            trainable=config.trainable,
            seed=config.seed,
            dropout=config.dropout,
        )
    if config.kind == 'pretrained':
        return PretrainedEncoder(
            model_id=config.model_id,
            max_positions=config.max_positions,
            trainable=config.trainable,
            dropout=config.dropout,
            cache_dir=os.environ.get('ECSP_CACHE'),
        )
    raise ValueError('unknown encoder kind "{}"'.format(config.kind))


def hashed_vector(key, seed, dim):
    """Deterministic standard normal vector derived from a string key"""
    digest = hashlib.sha256('{}\x00{}'.format(seed, key).encode('utf-8')).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], 'little'))
    return rng.standard_normal(dim)


class ToyEncoder(nn.Module):
    """Small deterministic encoder for tests and desk-scale runs

    Token embeddings are derived from a hash of (seed, token string)
    and never trained; position embeddings likewise.  Identical
    tokens at identical positions therefore get identical input
    vectors in every document.

    """

    def __init__(
        self, hidden_dim=64, max_positions=512, trainable=True, seed=0,
        dropout=0.1,
    ):
        nn.Module.__init__(self)
        self.hidden_dim = hidden_dim
        self.max_positions = max_positions
        self.seed = seed
        self.identity = 'toy-d{}-seed{}'.format(hidden_dim, seed)
        self._token_cache = {}
        positions = np.stack(
            [
                hashed_vector('position:{}'.format(i), seed, hidden_dim)
                for i in range(max_positions)
            ]
        )
        self.register_buffer(
            'position_table',
            torch.as_tensor(
                TOY_POSITION_SCALE * positions, dtype=torch.get_default_dtype()
            ),
        )
        self.affine = nn.Linear(hidden_dim, hidden_dim)
        self.global_affine = nn.Linear(hidden_dim, hidden_dim)
        self.dropout = nn.Dropout(dropout)
        for parameter in self.parameters():
            parameter.requires_grad = trainable

    def token_table(self, tokens):
        """Frozen embeddings for a token sequence as an (n, d) array"""
        rows = []
        for token in tokens:
            vector = self._token_cache.get(token)
            if vector is None:
                vector = hashed_vector(
                    'token:{}'.format(token), self.seed, self.hidden_dim
                )
                self._token_cache[token] = vector
            rows.append(vector)
        return np.stack(rows)

    def forward(self, tokens):  # pylint: disable=arguments-differ
        n = len(tokens)
        if n > self.max_positions:
            raise WindowError(
                '{} tokens exceed max_positions {}'.format(n, self.max_positions)
            )
        dtype = self.affine.weight.dtype
        embedded = torch.as_tensor(
            self.token_table(tokens), dtype=dtype
        ) + self.position_table[:n].to(dtype)
        hidden = self.dropout(torch.tanh(self.affine(embedded)))
        global_context = torch.tanh(self.global_affine(hidden.mean(dim=0)))
        return TokenEncoding(hidden, global_context)


class PretrainedEncoder(nn.Module):
    """Pretrained transformer adapter

    Corpus tokens are passed to the tokenizer as pre-split words;
    pieces are mean-pooled back to one vector per corpus token, so
    the output has exactly one row per corpus token whatever the
    subword segmentation.

    """

    def __init__(
        self, model_id, max_positions=512, trainable=True, dropout=0.1,
        cache_dir=None,
    ):
        # Lazy import
        from transformers import AutoModel, AutoTokenizer

        nn.Module.__init__(self)
        LOG.info('loading pretrained encoder %s', model_id)
        self.tokenizer = AutoTokenizer.from_pretrained(
            model_id, cache_dir=cache_dir, use_fast=True
        )
        self.transformer = AutoModel.from_pretrained(
            model_id,
            cache_dir=cache_dir,
            hidden_dropout_prob=dropout,
            attention_probs_dropout_prob=dropout,
        )
        self.hidden_dim = self.transformer.config.hidden_size
        self.model_positions = getattr(
            self.transformer.config, 'max_position_embeddings', max_positions
        )
        self.max_positions = token_limit(
            max_positions,
            self.model_positions,
            self.tokenizer.num_special_tokens_to_add(),
        )
        if self.max_positions < max_positions:
            LOG.info(
                'windows limited to %s tokens to fit the %s positions of %s',
                self.max_positions,
                self.model_positions,
                model_id,
            )
        self.identity = model_id
        for parameter in self.transformer.parameters():
            parameter.requires_grad = trainable

    def forward(self, tokens):  # pylint: disable=arguments-differ
        n = len(tokens)
        if n > self.max_positions:
            raise WindowError(
                '{} tokens exceed max_positions {}'.format(n, self.max_positions)
            )
        # Whitespace tokens produce no pieces; map them to the unknown
        # token so every corpus token keeps a row
        words = [
            token if token.strip() else self.tokenizer.unk_token
            for token in tokens
        ]
        batch = self.tokenizer(
            words,
            is_split_into_words=True,
            return_tensors='pt',
            truncation=False,
        )
        n_pieces = batch['input_ids'].shape[1]
        if n_pieces > self.model_positions:
            raise WindowError(
                '{} tokens produce {} pieces, more than the {} positions of '
                '{}'.format(n, n_pieces, self.model_positions, self.identity)
            )
        word_ids = batch.word_ids(0)
        device = next(self.transformer.parameters()).device
        output = self.transformer(
            **{key: value.to(device) for key, value in batch.items()}
        ).last_hidden_state[0]
        index = torch.tensor(
            [-1 if word_id is None else word_id for word_id in word_ids],
            device=device,
        )
        is_word = index >= 0
        sums = output.new_zeros((n, output.shape[1])).index_add(
            0, index[is_word], output[is_word]
        )
        counts = torch.bincount(index[is_word], minlength=n).clamp(min=1)
        hidden = sums / counts.unsqueeze(1).to(output.dtype)
        return TokenEncoding(hidden, output[0])


def encode(document, encoder, window=None):
    """Encode a document, or one window of it

    window is an inclusive (start, end) token range; without one the
    whole document must fit in encoder.max_positions.

    """
    if window is None:
        if document.n > encoder.max_positions:
            raise WindowError(
                'window required: {} tokens exceed max_positions {}'.format(
                    document.n, encoder.max_positions
                ),
                doc_id=document.doc_id,
            )
        window = Window(0, document.n - 1)
    tokens = document.tokens[window.start : window.end + 1]
    encoding = encoder(tokens)
    assert encoding.hidden.shape[0] == len(tokens), (
        encoding.hidden.shape,
        len(tokens),
    )
    return encoding


def window_plan(document, max_positions):
    """Group consecutive whole clauses into windows

    Clauses are added greedily to the current window while its total
    length stays within max_positions.  Returns a list of Windows
    covering the document.

    """
    windows = []
    start = end = None
    for clause in document.clauses:
        if clause.length > max_positions:
            raise WindowError(
                'clause ({}, {}) of {} tokens exceeds max_positions {}'.format(
                    clause.start, clause.end, clause.length, max_positions
                ),
                doc_id=document.doc_id,
            )
        if start is not None and clause.end - start + 1 <= max_positions:
            end = clause.end
            continue
        if start is not None:
            windows.append(Window(start, end))
        start, end = clause.start, clause.end
    if start is not None:
        windows.append(Window(start, end))
    return windows
