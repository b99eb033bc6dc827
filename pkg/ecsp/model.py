"""Pair extraction model assembly

"""

import logging

from torch import nn

import ecsp.encoder as encoder_mod
import ecsp.pairing as pairing_mod
import ecsp.spans as spans_mod


LOG = logging.getLogger('ecsp.model')


class PairExtractionModel(nn.Module):
    """Encoder, span head and pair head of the pair extraction model

    candidate_mode is "spans" (all spans up to max_len tokens) or
    "clauses" (whole clauses only).

    """

    def __init__(self, encoder, span_head, pair_head, candidate_mode='spans'):
        nn.Module.__init__(self)
        if candidate_mode not in ('spans', 'clauses'):
            raise ValueError(
                'unknown candidate mode "{}"'.format(candidate_mode)
            )
        self.encoder = encoder
        self.span_head = span_head
        self.pair_head = pair_head
        self.candidate_mode = candidate_mode

    @property
    def categories(self):
        """Category vocabulary, in pair-label order"""
        return self.pair_head.labels[:-1]

    @property
    def max_len(self):
        """Longest candidate span"""
        return self.span_head.max_len

    def windows(self, document):
        """Encoder windows covering a document"""
        if document.n <= self.encoder.max_positions:
            return [encoder_mod.Window(0, document.n - 1)]
        windows = encoder_mod.window_plan(document, self.encoder.max_positions)
        LOG.debug('%s split into %s windows', document.doc_id, len(windows))
        return windows

    def candidates(self, document, window):
        """Candidate spans inside a window, in document coordinates"""
        if self.candidate_mode == 'clauses':
            return spans_mod.clause_candidates(
                [
                    clause
                    for clause in document.clauses
                    if window.start <= clause.start and clause.end <= window.end
                ]
            )
        return [
            span.shifted(window.start)
            for span in spans_mod.iter_spans(
                window.end - window.start + 1, self.max_len
            )
        ]

    def forward(self, document, window, spans, pairs):
        # pylint: disable=arguments-differ
        """Span-type logits and pair-label logits within a window

        spans and pairs are in window coordinates.

        """
        encoding = encoder_mod.encode(document, self.encoder, window)
        span_logits = self.span_head(self.span_head.represent(spans, encoding))
        if pairs:
            pair_logits = self.pair_head(
                self.pair_head.represent(pairs, encoding, self.span_head)
            )
        else:
            pair_logits = span_logits.new_zeros((0, len(self.pair_head.labels)))
        return (span_logits, pair_logits)


def create_model(run_config, categories):
    """Build an untrained model from a RunConfig and category vocabulary"""
    encoder = encoder_mod.create_encoder(encoder_mod.encoder_config(run_config))
    dropout = run_config['train.dropout']
    span_head = spans_mod.SpanHead(
        hidden_dim=encoder.hidden_dim,
        max_len=run_config['span.max_len'],
        phi_dim=run_config['span.phi_dim'],
        dropout=dropout,
        clamp_lengths=run_config['span.candidates'] == 'clauses',
    )
    pair_head = pairing_mod.PairHead(
        hidden_dim=encoder.hidden_dim,
        span_dim=span_head.representation_dim,
        categories=categories,
        psi_dim=run_config['pair.psi_dim'],
        dist_buckets=run_config['pair.dist_buckets'],
        use_localized_context=run_config['pair.use_localized_context'],
        dropout=dropout,
    )
    return PairExtractionModel(
        encoder, span_head, pair_head, run_config['span.candidates']
    )
