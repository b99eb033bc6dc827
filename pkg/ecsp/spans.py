"""Candidate spans, span representations and span-type classification

"""

import collections
import logging

import numpy as np

import torch
from torch import nn

from ecsp.corpus import SpanRef


LOG = logging.getLogger('ecsp.spans')

SPAN_TYPES = ('emotion', 'cause', 'none')
EMOTION, CAUSE, NONE = range(3)


class CandidateSpan(SpanRef):
    """A span considered by the extractor"""

    __slots__ = ()

    def shifted(self, offset):
        """The same span with offset added to both ends"""
        return CandidateSpan(self.start + offset, self.end + offset)


SpanTypeDistribution = collections.namedtuple(
    'SpanTypeDistribution', SPAN_TYPES
)


def iter_spans(n, max_len):
    """Generate spans of up to max_len tokens in a document of n tokens

    Spans come in (start, end) order.

    """
    if max_len < 1:
        raise ValueError('max_len must be >= 1, got {}'.format(max_len))
    for start in range(n):
        for end in range(start, min(n, start + max_len)):
            yield CandidateSpan(start, end)


def enumerate_spans(n, max_len):
    """List all spans of up to max_len tokens, ordered by (start, end)"""
    return list(iter_spans(n, max_len))


def count_spans(n, max_len):
    """Closed-form number of spans enumerate_spans returns"""
    return sum(n - length + 1 for length in range(1, min(max_len, n) + 1))


def clause_candidates(clauses, offset=0):
    """Use whole clauses as the candidate spans"""
    return [
        CandidateSpan(clause.start + offset, clause.end + offset)
        for clause in clauses
    ]


def pool_spans(hidden, spans):
    """Elementwise sum and max of hidden rows over each span

    Returns two (len(spans), d) tensors.  Spans are grouped by length
    so each group is a single unfold over the rows.

    """
    d = hidden.shape[1]
    if not spans:
        empty = hidden.new_zeros((0, d))
        return (empty, empty)
    by_length = collections.defaultdict(lambda: ([], []))
    for position, span in enumerate(spans):
        positions, starts = by_length[span.end - span.start + 1]
        positions.append(position)
        starts.append(span.start)
    order = []
    sum_parts = []
    max_parts = []
    for length, (positions, starts) in sorted(by_length.items()):
        windows = hidden.unfold(0, length, 1)[torch.tensor(starts)]
        sum_parts.append(windows.sum(dim=-1))
        max_parts.append(windows.max(dim=-1).values)
        order.extend(positions)
    inverse = torch.empty(len(order), dtype=torch.long)
    inverse[torch.tensor(order)] = torch.arange(len(order))
    return (torch.cat(sum_parts)[inverse], torch.cat(max_parts)[inverse])


class SpanHead(nn.Module):
    """Span representation and span-type classifier

    A span is represented by the concatenation of the document context
    vector, the sum and the max of its token rows, and a learned
    embedding of its length; a single linear layer shared by all spans
    scores emotion, cause and none.

    """

    def __init__(
        self, hidden_dim, max_len=20, phi_dim=25, dropout=0.1,
        clamp_lengths=False,
    ):
        nn.Module.__init__(self)
        self.hidden_dim = hidden_dim
        self.max_len = max_len
        self.phi_dim = phi_dim
        self.clamp_lengths = clamp_lengths
        # Row i embeds length i + 1
        self.length_embedding = nn.Embedding(max_len, phi_dim)
        self.classifier = nn.Linear(self.representation_dim, len(SPAN_TYPES))
        self.dropout = nn.Dropout(dropout)

    @property
    def representation_dim(self):
        """Dimension of a span representation"""
        return 3 * self.hidden_dim + self.phi_dim

    def length_index(self, spans):
        """Length embedding rows for spans"""
        lengths = np.array([span.end - span.start + 1 for span in spans])
        if self.clamp_lengths:
            lengths = np.minimum(lengths, self.max_len)
        elif len(lengths) and lengths.max() > self.max_len:
            raise ValueError(
                'span of length {} exceeds max_len {}'.format(
                    lengths.max(), self.max_len
                )
            )
        return torch.as_tensor(lengths - 1, dtype=torch.long)

    def represent(self, spans, encoding):
        """Representations of spans as an (m, 3d + phi_dim) tensor"""
        sums, maxes = pool_spans(encoding.hidden, spans)
        context = encoding.global_context.unsqueeze(0).expand(len(spans), -1)
        lengths = self.length_embedding(self.length_index(spans))
        return torch.cat(
            [context, sums, maxes, lengths.to(sums.dtype)], dim=1
        )

    def forward(self, representations):  # pylint: disable=arguments-differ
        if representations.shape[-1] != self.representation_dim:
            raise ValueError(
                'span representation has dimension {}, expected {}'.format(
                    representations.shape[-1], self.representation_dim
                )
            )
        return self.classifier(self.dropout(representations))


def represent_span(span, encoding, head):
    """Representation of a single span as a 1-d tensor"""
    n = encoding.hidden.shape[0]
    if not 0 <= span.start <= span.end < n:
        raise ValueError(
            'span ({}, {}) outside encoding of {} tokens'.format(
                span.start, span.end, n
            )
        )
    return head.represent([span], encoding)[0]


def classify_span(representation, head):
    """Span-type distribution for one span representation"""
    with torch.no_grad():
        logits = head(representation.unsqueeze(0))[0]
        probs = torch.softmax(logits, dim=0)
    return SpanTypeDistribution(*(float(p) for p in probs))


def span_type_probabilities(logits):
    """Softmax over span types as an (m, 3) float64 array"""
    with torch.no_grad():
        return torch.softmax(logits.double(), dim=-1).cpu().numpy()


def select_spans(candidates, distributions):
    """Split candidates into emotion spans E and cause spans C

    distributions holds one probability row (emotion, cause, none)
    per candidate.  Each candidate takes the type of its highest
    probability; exact ties go to the earlier type in the order
    emotion, cause, none.

    """
    distributions = np.asarray(distributions, dtype='float64')
    if len(candidates) != len(distributions):
        raise ValueError(
            '{} candidates but {} distributions'.format(
                len(candidates), len(distributions)
            )
        )
    if not candidates:
        return ([], [])
    # np.argmax returns the first maximum
    predicted = np.argmax(distributions, axis=1)
    emotions = [span for span, t in zip(candidates, predicted) if t == EMOTION]
    causes = [span for span, t in zip(candidates, predicted) if t == CAUSE]
    return (emotions, causes)
