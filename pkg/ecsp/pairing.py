"""Emotion-cause pairing and pair classification

Selected emotion spans and cause spans are paired by Cartesian
product.  Each pair is represented by the two span representations
and a localized context: the sum and max of the token rows strictly
between the two spans, plus a learned embedding of their distance.
A linear classifier over the pair representation predicts an emotion
category or "none"; pairs predicted none are discarded.

"""

import collections
import json
import logging

import numpy as np

import torch
from torch import nn

import ecsp.encoder as encoder_mod
import ecsp.spans as spans_mod
from ecsp.corpus import SpanRef


LOG = logging.getLogger('ecsp.pairing')

NONE_LABEL = 'none'

# Pairs scored per forward pass at inference
PAIR_CHUNK_SIZE = 4096

PairCandidate = collections.namedtuple('PairCandidate', ['emotion', 'cause'])

PairDistribution = collections.namedtuple(
    'PairDistribution', ['labels', 'probs']
)

ExtractedPair = collections.namedtuple(
    'ExtractedPair', ['emotion', 'cause', 'category', 'score']
)

DocumentPrediction = collections.namedtuple(
    'DocumentPrediction', ['doc_id', 'emotions', 'causes', 'pairs']
)


def cartesian_pairs(emotions, causes):
    """All (emotion, cause) pairs, emotion-major"""
    return [
        PairCandidate(emotion, cause) for emotion in emotions for cause in causes
    ]


def context_range(span_a, span_b):
    """Tokens strictly between two spans, and their number

    Returns ((start, end), distance) with an inclusive token range,
    or (None, 0) when the spans overlap or are adjacent.  The result
    does not depend on the order of the arguments.

    """
    earlier, later = sorted(
        [span_a, span_b], key=lambda span: (span.start, span.end)
    )
    start = earlier.end + 1
    end = later.start - 1
    if end < start:
        return (None, 0)
    return (SpanRef(start, end), end - start + 1)


class PairHead(nn.Module):
    """Localized context features and pair classifier

    labels are the category vocabulary followed by "none".

    """

    def __init__(
        self, hidden_dim, span_dim, categories, psi_dim=50, dist_buckets=64,
        use_localized_context=True, dropout=0.1,
    ):
        nn.Module.__init__(self)
        self.hidden_dim = hidden_dim
        self.span_dim = span_dim
        self.labels = list(categories) + [NONE_LABEL]
        self.psi_dim = psi_dim
        self.dist_buckets = dist_buckets
        self.use_localized_context = use_localized_context
        self.distance_embedding = nn.Embedding(dist_buckets, psi_dim)
        self.classifier = nn.Linear(self.representation_dim, len(self.labels))
        self.dropout = nn.Dropout(dropout)

    @property
    def context_dim(self):
        """Dimension of localized context features"""
        return 2 * self.hidden_dim + self.psi_dim

    @property
    def representation_dim(self):
        """Dimension of a pair representation"""
        return 2 * self.span_dim + self.context_dim

    @property
    def none_index(self):
        """Index of the none label"""
        return len(self.labels) - 1

    def localized_context(self, pairs, encoding):
        """Localized context features as an (m, 2d + psi_dim) tensor

        With use_localized_context off, the features are all zero.

        """
        hidden = encoding.hidden
        features = hidden.new_zeros((len(pairs), self.context_dim))
        if not self.use_localized_context or not pairs:
            return features
        ranges = []
        rows = []
        distances = []
        for row, pair in enumerate(pairs):
            between, distance = context_range(pair.emotion, pair.cause)
            distances.append(min(distance, self.dist_buckets - 1))
            if between is not None:
                ranges.append(between)
                rows.append(row)
        psi = self.distance_embedding(
            torch.as_tensor(distances, dtype=torch.long)
        ).to(hidden.dtype)
        pooled = hidden.new_zeros((len(pairs), 2 * self.hidden_dim))
        if ranges:
            sums, maxes = spans_mod.pool_spans(hidden, ranges)
            pooled = pooled.index_copy(
                0, torch.as_tensor(rows), torch.cat([sums, maxes], dim=1)
            )
        return torch.cat([pooled, psi], dim=1)

    def represent(self, pairs, encoding, span_head):
        """Pair representations as an (m, representation_dim) tensor"""
        emotions = span_head.represent([pair.emotion for pair in pairs], encoding)
        causes = span_head.represent([pair.cause for pair in pairs], encoding)
        return torch.cat(
            [emotions, causes, self.localized_context(pairs, encoding)], dim=1
        )

    def forward(self, representations):  # pylint: disable=arguments-differ
        if representations.shape[-1] != self.representation_dim:
            raise ValueError(
                'pair representation has dimension {}, expected {}'.format(
                    representations.shape[-1], self.representation_dim
                )
            )
        return self.classifier(self.dropout(representations))


def localized_context(pair, encoding, head):
    """Localized context features of a single pair as a 1-d tensor"""
    return head.localized_context([pair], encoding)[0]


def classify_pair(representation, head):
    """Label distribution for one pair representation"""
    with torch.no_grad():
        logits = head(representation.unsqueeze(0))[0]
        probs = torch.softmax(logits.double(), dim=0).cpu().numpy()
    return PairDistribution(list(head.labels), probs)


def predicted_label_index(probs, none_index):
    """Index of the predicted label

    The highest probability wins; if it is shared by several labels,
    the prediction is none.

    """
    best = np.max(probs)
    if np.count_nonzero(probs == best) > 1:
        return none_index
    return int(np.argmax(probs))


def oracle_candidates(document, model, window, oracle_emotions, counters=None):
    """Oracle emotion spans usable as candidates within a window

    Spans are returned in window coordinates.  With clause candidates,
    each span is replaced by the clauses it overlaps; otherwise spans
    longer than the model's max_len are dropped and, with counters,
    counted.

    """
    inside = [
        span
        for span in sorted(set(oracle_emotions))
        if window.start <= span.start and span.end <= window.end
    ]
    if model.candidate_mode == 'clauses':
        relaxed = sorted(
            set(
                clause
                for span in inside
                for clause in document.clauses
                if clause.start <= span.end and span.start <= clause.end
            )
        )
        return spans_mod.clause_candidates(relaxed, offset=-window.start)
    usable = [span for span in inside if span.end - span.start + 1 <= model.max_len]
    if len(usable) < len(inside):
        LOG.warning(
            '%s: %s oracle emotion span(s) longer than %s tokens dropped',
            document.doc_id,
            len(inside) - len(usable),
            model.max_len,
        )
        if counters is not None:
            counters['oracle_emotions_over_max_len'] += len(inside) - len(usable)
    return [
        spans_mod.CandidateSpan(span.start - window.start, span.end - window.start)
        for span in usable
    ]


def predict_document(document, model, oracle_emotions=None, counters=None):
    """Run the extract-then-classify pipeline on a document

    Each window is encoded; candidates are classified and selected;
    selected emotions and causes are paired, and the pairs are
    classified.  With oracle_emotions, those spans replace the
    selected emotion spans, as oracle_candidates gives them.

    Returns a DocumentPrediction in document coordinates, with pairs
    sorted by (emotion.start, cause.start).

    """
    was_training = model.training
    model.eval()
    emotions = []
    causes = []
    pairs = []
    try:
        with torch.no_grad():
            for window in model.windows(document):
                result = predict_window(
                    document, model, window, oracle_emotions, counters
                )
                emotions.extend(result[0])
                causes.extend(result[1])
                pairs.extend(result[2])
    finally:
        model.train(was_training)
    pairs.sort(
        key=lambda pair: (
            pair.emotion.start,
            pair.cause.start,
            pair.emotion.end,
            pair.cause.end,
        )
    )
    return DocumentPrediction(
        document.doc_id, sorted(emotions), sorted(causes), pairs
    )


def predict_window(
    document, model, window, oracle_emotions=None, counters=None
):
    """Predict emotions, causes and pairs within one window"""
    encoding = encoder_mod.encode(document, model.encoder, window)
    candidates = model.candidates(document, window)
    relative = [span.shifted(-window.start) for span in candidates]
    if relative:
        logits = model.span_head(model.span_head.represent(relative, encoding))
        distributions = spans_mod.span_type_probabilities(logits)
    else:
        distributions = np.zeros((0, len(spans_mod.SPAN_TYPES)))
    emotions, causes = spans_mod.select_spans(relative, distributions)
    if oracle_emotions is not None:
        emotions = oracle_candidates(
            document, model, window, oracle_emotions, counters
        )
    extracted = []
    candidate_pairs = cartesian_pairs(emotions, causes)
    head = model.pair_head
    for chunk_start in range(0, len(candidate_pairs), PAIR_CHUNK_SIZE):
        chunk = candidate_pairs[chunk_start : chunk_start + PAIR_CHUNK_SIZE]
        logits = head(head.represent(chunk, encoding, model.span_head))
        probs = torch.softmax(logits.double(), dim=-1).cpu().numpy()
        for pair, row in zip(chunk, probs):
            index = predicted_label_index(row, head.none_index)
            if index == head.none_index:
                continue
            extracted.append(
                ExtractedPair(
                    SpanRef(
                        pair.emotion.start + window.start,
                        pair.emotion.end + window.start,
                    ),
                    SpanRef(
                        pair.cause.start + window.start,
                        pair.cause.end + window.start,
                    ),
                    head.labels[index],
                    float(row[index]),
                )
            )
    return (
        [SpanRef(s.start + window.start, s.end + window.start) for s in emotions],
        [SpanRef(s.start + window.start, s.end + window.start) for s in causes],
        extracted,
    )


def extract_pairs(document, model):
    """Extract (emotion, cause, category, score) pairs from a document"""
    return predict_document(document, model).pairs


def prediction_record(prediction):
    """JSON-serializable record for a document prediction"""
    return {
        'doc_id': prediction.doc_id,
        'pairs': [
            {
                'emotion': {'start': pair.emotion.start, 'end': pair.emotion.end},
                'cause': {'start': pair.cause.start, 'end': pair.cause.end},
                'category': pair.category,
                'score': pair.score,
            }
            for pair in prediction.pairs
        ],
    }


def dump_predictions(corpus, model, outfile):
    """Write one JSON line of extracted pairs per document"""
    for document in corpus:
        prediction = predict_document(document, model)
        LOG.debug(
            '%s: %s pairs extracted', document.doc_id, len(prediction.pairs)
        )
        outfile.write(
            json.dumps(
                prediction_record(prediction), ensure_ascii=False, sort_keys=True
            )
        )
        outfile.write('\n')
