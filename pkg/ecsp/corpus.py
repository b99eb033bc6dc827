"""Corpus data model, loading, statistics and fold splitting

A corpus is a JSON-lines file with one document per line:

  {"doc_id": str,
   "tokens": [str],
   "clauses": [{"start": int, "end": int}],
   "pairs": [{"emotion": {"start": int, "end": int},
              "cause": {"start": int, "end": int},
              "category": str}]}

All offsets are inclusive token indices.  Tokens are taken as given
and never re-tokenized.

"""

import collections
import json
import logging

import numpy as np


LOG = logging.getLogger('ecsp.corpus')

DOCUMENT_KEYS = frozenset(['doc_id', 'tokens', 'clauses', 'pairs'])
PAIR_KEYS = frozenset(['emotion', 'cause', 'category'])
SPAN_KEYS = frozenset(['start', 'end'])

# Thresholds reported in the stats table
REPORTED_MAX_LENGTHS = (2, 5, 10, 15, 20)


class CorpusError(ValueError):
    """Malformed corpus file or invalid document"""

    def __init__(self, message, line_number=None, doc_id=None):
        prefix = []
        if line_number is not None:
            prefix.append('line {}'.format(line_number))
        if doc_id is not None:
            prefix.append('doc_id {}'.format(doc_id))
        if prefix:
            message = '{}: {}'.format(', '.join(prefix), message)
        ValueError.__init__(self, message)
        self.line_number = line_number
        self.doc_id = doc_id


class SpanRef(collections.namedtuple('SpanRef', ['start', 'end'])):
    """Inclusive token range (start, end)"""

    __slots__ = ()

    @property
    def length(self):
        """Number of tokens in the span"""
        return self.end - self.start + 1


class ClauseSpan(collections.namedtuple('ClauseSpan', ['start', 'end'])):
    """Inclusive token range of a clause"""

    __slots__ = ()

    @property
    def length(self):
        """Number of tokens in the clause"""
        return self.end - self.start + 1


GoldPair = collections.namedtuple('GoldPair', ['emotion', 'cause', 'category'])


class Document(
    collections.namedtuple('Document', ['doc_id', 'tokens', 'clauses', 'pairs'])
):
    """A tokenized document with clauses and gold emotion-cause pairs

    tokens, clauses and pairs are tuples, so documents are immutable.

    """

    __slots__ = ()

    @property
    def n(self):
        """Number of tokens"""
        return len(self.tokens)

    @property
    def emotion_spans(self):
        """Distinct gold emotion spans, sorted"""
        return sorted(set(pair.emotion for pair in self.pairs))

    @property
    def cause_spans(self):
        """Distinct gold cause spans, sorted"""
        return sorted(set(pair.cause for pair in self.pairs))


CorpusStats = collections.namedtuple(
    'CorpusStats',
    [
        'num_documents',
        'num_clauses',
        'num_causes',
        'num_cause_docs_by_count',
        'num_emotion_annotations',
        'num_cause_annotations',
        'num_annotations',
        'annotations_by_max_length',
        'num_cause_clauses',
        'category_counts',
    ],
)

FoldSplit = collections.namedtuple(
    'FoldSplit', ['fold_index', 'train_ids', 'test_ids']
)


def load_corpus(path, strict=True, require_pairs=None):
    """Load and validate a corpus from a JSON-lines file

    In strict mode, unknown keys are rejected and "pairs" is required;
    otherwise unknown keys are ignored and missing pairs read as none.
    require_pairs, if given, overrides whether "pairs" is required.

    Returns a tuple of Documents.  Raises CorpusError with the line
    number and doc_id of the first invalid document.

    """
    try:
        with open(path, 'rt', encoding='utf-8') as corpus_file:
            corpus = read_corpus(
                corpus_file, strict=strict, require_pairs=require_pairs
            )
    except (OSError, UnicodeDecodeError) as error:
        raise CorpusError(  # pylint: disable=raise-missing-from
            'cannot read corpus {}: {}'.format(path, error)
        )
    LOG.info(
        'loaded %s documents, %s clauses from %s',
        len(corpus),
        sum(len(document.clauses) for document in corpus),
        path,
    )
    return corpus


def read_corpus(lines, strict=True, require_pairs=None):
    """Parse and validate documents from an iterable of JSON lines"""
    documents = []
    seen_ids = set()
    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as error:
            raise CorpusError(  # pylint: disable=raise-missing-from
                'malformed JSON: {}'.format(error), line_number=line_number
            )
        document = parse_document(record, strict, line_number, require_pairs)
        if document.doc_id in seen_ids:
            raise CorpusError(
                'duplicate doc_id',
                line_number=line_number,
                doc_id=document.doc_id,
            )
        seen_ids.add(document.doc_id)
        documents.append(document)
    return tuple(documents)


def parse_document(record, strict=True, line_number=None, require_pairs=None):
    """Build a validated Document from a decoded JSON record"""
    if require_pairs is None:
        require_pairs = strict
    if not isinstance(record, dict):
        raise CorpusError('document is not a JSON object', line_number)
    doc_id = record.get('doc_id')
    required = DOCUMENT_KEYS if require_pairs else DOCUMENT_KEYS - {'pairs'}
    missing = sorted(required - set(record))
    if missing:
        raise CorpusError(
            'missing key(s) {}'.format(', '.join(missing)), line_number, doc_id
        )
    if strict:
        check_keys(record, DOCUMENT_KEYS, line_number, doc_id)
    if not isinstance(doc_id, str):
        raise CorpusError('doc_id must be a string', line_number, doc_id)
    tokens = record['tokens']
    if not isinstance(tokens, list) or not all(
        isinstance(token, str) for token in tokens
    ):
        raise CorpusError('tokens must be a list of strings', line_number, doc_id)
    if not tokens:
        raise CorpusError('document has no tokens', line_number, doc_id)
    n = len(tokens)
    clauses = tuple(
        ClauseSpan(*parse_offsets(clause, strict, line_number, doc_id))
        for clause in as_list(record['clauses'], 'clauses', line_number, doc_id)
    )
    check_partition(clauses, n, line_number, doc_id)
    pairs = []
    for pair in as_list(record.get('pairs', []), 'pairs', line_number, doc_id):
        if not isinstance(pair, dict):
            raise CorpusError('pair is not a JSON object', line_number, doc_id)
        missing = sorted(PAIR_KEYS - set(pair))
        if missing:
            raise CorpusError(
                'pair missing key(s) {}'.format(', '.join(missing)),
                line_number,
                doc_id,
            )
        if strict:
            check_keys(pair, PAIR_KEYS, line_number, doc_id)
        category = pair['category']
        if not isinstance(category, str) or not category:
            raise CorpusError(
                'category must be a non-empty string', line_number, doc_id
            )
        spans = []
        for role in ('emotion', 'cause'):
            span = SpanRef(*parse_offsets(pair[role], strict, line_number, doc_id))
            if not 0 <= span.start <= span.end <= n - 1:
                raise CorpusError(
                    'span out of range: {} span ({}, {}) in document of '
                    '{} tokens'.format(role, span.start, span.end, n),
                    line_number,
                    doc_id,
                )
            spans.append(span)
        pairs.append(GoldPair(spans[0], spans[1], category))
    return Document(doc_id, tuple(tokens), clauses, tuple(pairs))


def as_list(value, name, line_number, doc_id):
    """Check that value is a JSON list"""
    if not isinstance(value, list):
        raise CorpusError('{} must be a list'.format(name), line_number, doc_id)
    return value


def parse_offsets(record, strict, line_number, doc_id):
    """Read (start, end) from a {"start", "end"} record"""
    if not isinstance(record, dict) or not SPAN_KEYS <= set(record):
        raise CorpusError(
            'span must be an object with "start" and "end"',
            line_number,
            doc_id,
        )
    if strict:
        check_keys(record, SPAN_KEYS, line_number, doc_id)
    start, end = record['start'], record['end']
    for value in (start, end):
        if isinstance(value, bool) or not isinstance(value, int):
            raise CorpusError(
                'span offsets must be integers, got {!r}'.format(value),
                line_number,
                doc_id,
            )
    if start > end:
        raise CorpusError(
            'span start {} after end {}'.format(start, end),
            line_number,
            doc_id,
        )
    return (start, end)


def check_keys(record, allowed, line_number, doc_id):
    """Reject keys outside the schema"""
    unknown = sorted(set(record) - allowed)
    if unknown:
        raise CorpusError(
            'unknown key(s) {}'.format(', '.join(unknown)), line_number, doc_id
        )


def check_partition(clauses, n, line_number=None, doc_id=None):
    """Check that clauses are contiguous and cover [0, n - 1]"""
    expected_start = 0
    for clause in clauses:
        if clause.start != expected_start:
            raise CorpusError(
                'clauses not a partition: clause ({}, {}) should start at '
                '{}'.format(clause.start, clause.end, expected_start),
                line_number,
                doc_id,
            )
        expected_start = clause.end + 1
    if expected_start != n:
        raise CorpusError(
            'clauses not a partition: clauses cover {} of {} tokens'.format(
                expected_start, n
            ),
            line_number,
            doc_id,
        )


def document_record(document):
    """JSON-serializable record for a document"""
    return {
        'doc_id': document.doc_id,
        'tokens': list(document.tokens),
        'clauses': [
            {'start': clause.start, 'end': clause.end}
            for clause in document.clauses
        ],
        'pairs': [
            {
                'emotion': {'start': pair.emotion.start, 'end': pair.emotion.end},
                'cause': {'start': pair.cause.start, 'end': pair.cause.end},
                'category': pair.category,
            }
            for pair in document.pairs
        ],
    }


def dump_corpus(corpus, outfile):
    """Write documents as JSON lines"""
    for document in corpus:
        outfile.write(json.dumps(document_record(document), ensure_ascii=False))
        outfile.write('\n')


def category_vocabulary(corpus):
    """Sorted list of distinct gold pair categories"""
    return sorted(
        set(pair.category for document in corpus for pair in document.pairs)
    )


def corpus_stats(corpus):
    """Compute corpus statistics

    Annotations are distinct (role, start, end) spans of each
    document; a span that is the emotion of two pairs counts once.
    annotations_by_max_length maps each length from 1 to the longest
    annotation to the number of annotations no longer than that.

    """
    cause_docs_by_count = collections.Counter()
    category_counts = collections.Counter()
    lengths = []
    num_emotions = num_causes_spans = num_cause_clauses = 0
    for document in corpus:
        cause_docs_by_count[len(document.pairs)] += 1
        category_counts.update(pair.category for pair in document.pairs)
        emotions = document.emotion_spans
        causes = document.cause_spans
        num_emotions += len(emotions)
        num_causes_spans += len(causes)
        lengths.extend(span.length for span in emotions)
        lengths.extend(span.length for span in causes)
        num_cause_clauses += sum(
            1
            for clause in document.clauses
            if any(
                span.start <= clause.end and clause.start <= span.end
                for span in causes
            )
        )
    del cause_docs_by_count[0]
    if lengths:
        cumulative = np.cumsum(np.bincount(lengths))
        annotations_by_max_length = {
            max_len: int(cumulative[max_len])
            for max_len in range(1, len(cumulative))
        }
    else:
        annotations_by_max_length = {}
    return CorpusStats(
        num_documents=len(corpus),
        num_clauses=sum(len(document.clauses) for document in corpus),
        num_causes=sum(len(document.pairs) for document in corpus),
        num_cause_docs_by_count=dict(sorted(cause_docs_by_count.items())),
        num_emotion_annotations=num_emotions,
        num_cause_annotations=num_causes_spans,
        num_annotations=len(lengths),
        annotations_by_max_length=annotations_by_max_length,
        num_cause_clauses=num_cause_clauses,
        category_counts=dict(sorted(category_counts.items())),
    )


def annotations_within(stats, max_len):
    """Number of annotations of length at most max_len"""
    if max_len < 1:
        raise ValueError('max_len must be >= 1, got {}'.format(max_len))
    if not stats.annotations_by_max_length:
        return 0
    longest = max(stats.annotations_by_max_length)
    return stats.annotations_by_max_length[min(max_len, longest)]


def length_coverage(stats, max_len):
    """Fraction of annotations no longer than max_len tokens

    An empty corpus is fully covered.

    """
    within = annotations_within(stats, max_len)
    if stats.num_annotations == 0:
        return 1.0
    return within / stats.num_annotations


def write_stats_table(stats, max_len, outfile):
    """Write corpus statistics as a text table"""
    rows = [
        ('Instance', stats.num_documents),
        ('Clauses', stats.num_clauses),
        ('Cause', stats.num_causes),
    ]
    for count in (1, 2, 3):
        rows.append(
            ('Cause_{}'.format(count), stats.num_cause_docs_by_count.get(count, 0))
        )
    more = sum(
        docs for count, docs in stats.num_cause_docs_by_count.items() if count > 3
    )
    if more:
        rows.append(('Cause_>3', more))
    rows += [
        ('Annotations', stats.num_annotations),
        ('Emotion annotations', stats.num_emotion_annotations),
        ('Cause annotations', stats.num_cause_annotations),
    ]
    for threshold in sorted(set(REPORTED_MAX_LENGTHS + (max_len,))):
        rows.append(
            ('Length ≤ {}'.format(threshold), annotations_within(stats, threshold))
        )
    rows.append(('Cause clauses', stats.num_cause_clauses))
    width = max(len(label) for label, _ in rows)
    for label, value in rows:
        outfile.write('{}: {}\n'.format(label.ljust(width), value))
    for category, count in stats.category_counts.items():
        outfile.write('Category {}: {}\n'.format(category, count))
    outfile.write(
        'coverage@{} = {:.2f}%\n'.format(
            max_len, 100 * length_coverage(stats, max_len)
        )
    )


def kfold_split(corpus, k, seed):
    """Split a corpus into k folds

    Document order is shuffled with a seeded generator, then documents
    are dealt round-robin to test folds, so test folds differ in size
    by at most one.  Returns a list of FoldSplit.

    """
    if k < 2:
        raise ValueError('k must be >= 2, got {}'.format(k))
    if not corpus:
        raise ValueError('cannot split an empty corpus')
    if k > len(corpus):
        raise ValueError(
            'k = {} exceeds corpus size {}'.format(k, len(corpus))
        )
    doc_ids = [document.doc_id for document in corpus]
    order = np.random.default_rng(seed).permutation(len(doc_ids))
    all_ids = frozenset(doc_ids)
    folds = []
    for fold_index in range(k):
        test_ids = frozenset(doc_ids[i] for i in order[fold_index::k])
        folds.append(FoldSplit(fold_index, all_ids - test_ids, test_ids))
    LOG.info(
        '%s folds, test sizes %s',
        k,
        sorted(set(len(fold.test_ids) for fold in folds)),
    )
    return folds


def select_documents(corpus, doc_ids):
    """Documents of corpus with ids in doc_ids, in corpus order"""
    return tuple(document for document in corpus if document.doc_id in doc_ids)


def split_dev(documents, fraction, seed):
    """Split off a seeded dev set

    Returns (train, dev).  The dev set holds round(fraction * n)
    documents, at least one when there are two or more documents.

    """
    documents = tuple(documents)
    if len(documents) < 2:
        return (documents, ())
    n_dev = min(max(1, int(round(fraction * len(documents)))), len(documents) - 1)
    order = np.random.default_rng(seed).permutation(len(documents))
    dev_index = set(order[:n_dev].tolist())
    train = tuple(d for i, d in enumerate(documents) if i not in dev_index)
    dev = tuple(d for i, d in enumerate(documents) if i in dev_index)
    return (train, dev)
