"""Exact-boundary evaluation of extracted spans and pairs

Span mode scores four sub-tasks by exact (start, end) match:

  EESE   emotion span extraction
  ECSE   cause span extraction
  ECSPE  emotion-cause span-pair extraction, category ignored
  ECSP   emotion-cause span-pair extraction and classification

Clause mode first replaces every span by the clauses it overlaps and
scores the clause-level analogues EEE_clause, CE_clause, ECPE_clause
and ECE_clause.  Predicted emotions and causes are those appearing in
extracted pairs.  Items are compared as sets within each document;
counts are summed over documents.

"""

import bisect
import collections
import logging

import numpy as np

import scipy.stats as stats_mod

import ecsp.pairing as pairing_mod


LOG = logging.getLogger('ecsp.evaluation')

SPAN_TASKS = ('EESE', 'ECSE', 'ECSPE', 'ECSP')
CLAUSE_TASKS = ('EEE_clause', 'CE_clause', 'ECPE_clause', 'ECE_clause')
MODES = {'span': SPAN_TASKS, 'clause': CLAUSE_TASKS}


class MatchCounts(
    collections.namedtuple('MatchCounts', ['proposed', 'annotated', 'correct'])
):
    """Proposed, annotated and correct item counts"""

    __slots__ = ()

    def __new__(cls, proposed=0, annotated=0, correct=0):
        assert 0 <= correct <= min(proposed, annotated), (
            proposed,
            annotated,
            correct,
        )
        return super().__new__(cls, proposed, annotated, correct)

    def __add__(self, other):
        return MatchCounts(*(a + b for a, b in zip(self, other)))


def prf1(counts):
    """Precision, recall and F1 for match counts

    Empty denominators give 0, and F1 is 0 when P + R is 0.

    """
    precision = counts.correct / counts.proposed if counts.proposed else 0.0
    recall = counts.correct / counts.annotated if counts.annotated else 0.0
    if precision + recall == 0:
        return (precision, recall, 0.0)
    return (precision, recall, 2 * precision * recall / (precision + recall))


def match_spans_exact(gold, predicted):
    """Count exact matches between a gold and a predicted item set

    Items are (start, end) spans, or any hashable items; duplicates
    collapse to one.

    """
    gold = set(tuple(item) for item in gold)
    predicted = set(tuple(item) for item in predicted)
    return MatchCounts(len(predicted), len(gold), len(gold & predicted))


def pair_key(pair, require_category):
    """Hashable key of a pair for matching"""
    spans = (tuple(pair.emotion), tuple(pair.cause))
    if not require_category:
        return spans
    if pair.category is None:
        raise ValueError(
            'pair ({}, {}) has no category'.format(pair.emotion, pair.cause)
        )
    return spans + (pair.category,)


def match_pairs(gold, predicted, require_category):
    """Count pair matches

    A predicted pair is correct if both its spans exactly match a gold
    pair's spans, and with require_category, its category matches too.

    """
    return match_spans_exact(
        [pair_key(pair, require_category) for pair in gold],
        [pair_key(pair, require_category) for pair in predicted],
    )


def relax_to_clauses(document, spans):
    """Indices of clauses overlapped by any of the spans"""
    starts = [clause.start for clause in document.clauses]
    indices = set()
    for span in spans:
        first = bisect.bisect_right(starts, span.start) - 1
        last = bisect.bisect_right(starts, span.end) - 1
        indices.update(range(first, last + 1))
    return indices


def relax_pairs_to_clauses(document, pairs):
    """(emotion clause, cause clause) index pairs of a set of pairs"""
    return set(
        (emotion, cause)
        for pair in pairs
        for emotion in relax_to_clauses(document, [pair.emotion])
        for cause in relax_to_clauses(document, [pair.cause])
    )


class EvalReport:
    """Match counts per sub-task for one evaluation mode"""

    __slots__ = ['mode', 'counts']

    def __init__(self, mode, counts):
        if mode not in MODES:
            raise ValueError('unknown evaluation mode "{}"'.format(mode))
        missing = set(MODES[mode]) - set(counts)
        if missing:
            raise ValueError(
                'no counts for {}'.format(', '.join(sorted(missing)))
            )
        self.mode = mode
        self.counts = {task: counts[task] for task in MODES[mode]}

    @property
    def tasks(self):
        return MODES[self.mode]

    def metrics(self, task):
        """(P, R, F1) for a sub-task"""
        return prf1(self.counts[task])

    def f1(self, task):
        return self.metrics(task)[2]

    def to_dict(self):
        """Percentages rounded to 2 decimals, with raw counts"""
        tasks = {}
        for task in self.tasks:
            counts = self.counts[task]
            tasks[task] = dict(
                percentages(self.metrics(task)), **counts._asdict()
            )
        return {'mode': self.mode, 'tasks': tasks}


def percentages(metrics):
    """Round (P, R, F1) fractions to percentages"""
    return {
        name: round(100 * value, 2)
        for name, value in zip(('P', 'R', 'F1'), metrics)
    }


def aggregate_reports(reports):
    """Mean and standard error of P, R and F1 over fold reports

    Percentages are rounded to 2 decimals; with a single report the
    standard errors are None.

    """
    reports = list(reports)
    if not reports:
        raise ValueError('no reports to aggregate')
    modes = set(report.mode for report in reports)
    if len(modes) != 1:
        raise ValueError(
            'cannot aggregate modes {}'.format(', '.join(sorted(modes)))
        )
    mode = modes.pop()
    tasks = {}
    for task in MODES[mode]:
        table = 100 * np.array([report.metrics(task) for report in reports])
        entry = {}
        for column, name in enumerate(('P', 'R', 'F1')):
            entry[name] = round(float(table[:, column].mean()), 2)
            entry[name + '_sem'] = (
                round(float(stats_mod.sem(table[:, column])), 2)
                if len(reports) > 1
                else None
            )
        tasks[task] = entry
    return {'mode': mode, 'folds': len(reports), 'tasks': tasks}


def empty_prediction(doc_id):
    return pairing_mod.DocumentPrediction(doc_id, [], [], [])


def evaluate_predictions(corpus, predictions, mode, oracle_predictions=None):
    """Score predictions against a corpus

    predictions maps doc_id to DocumentPrediction; documents without a
    prediction count as predicting nothing.  In clause mode,
    oracle_predictions (made with gold emotions given) supply the cause
    clauses scored by ECE_clause; otherwise ECE_clause scores the
    predicted pairs' cause clauses.

    """
    if mode not in MODES:
        raise ValueError('unknown evaluation mode "{}"'.format(mode))
    if oracle_predictions is not None and mode != 'clause':
        raise ValueError('oracle emotions are only scored in clause mode')
    totals = {task: MatchCounts() for task in MODES[mode]}
    for document in corpus:
        prediction = predictions.get(
            document.doc_id, empty_prediction(document.doc_id)
        )
        pairs = prediction.pairs
        emotions = [pair.emotion for pair in pairs]
        causes = [pair.cause for pair in pairs]
        if mode == 'span':
            counts = {
                'EESE': match_spans_exact(document.emotion_spans, emotions),
                'ECSE': match_spans_exact(document.cause_spans, causes),
                'ECSPE': match_pairs(document.pairs, pairs, False),
                'ECSP': match_pairs(document.pairs, pairs, True),
            }
        else:
            gold_causes = relax_to_clauses(document, document.cause_spans)
            if oracle_predictions is None:
                oracle_causes = causes
            else:
                oracle_causes = [
                    pair.cause
                    for pair in oracle_predictions.get(
                        document.doc_id, empty_prediction(document.doc_id)
                    ).pairs
                ]
            counts = {
                'EEE_clause': match_spans_exact(
                    [(i,) for i in relax_to_clauses(document, document.emotion_spans)],
                    [(i,) for i in relax_to_clauses(document, emotions)],
                ),
                'CE_clause': match_spans_exact(
                    [(i,) for i in gold_causes],
                    [(i,) for i in relax_to_clauses(document, causes)],
                ),
                'ECPE_clause': match_spans_exact(
                    relax_pairs_to_clauses(document, document.pairs),
                    relax_pairs_to_clauses(document, pairs),
                ),
                'ECE_clause': match_spans_exact(
                    [(i,) for i in gold_causes],
                    [(i,) for i in relax_to_clauses(document, oracle_causes)],
                ),
            }
        for task, task_counts in counts.items():
            totals[task] = totals[task] + task_counts
    return EvalReport(mode, totals)


def evaluate(corpus, model, mode, oracle_emotion=False):
    """Run a model over a corpus and score it

    With oracle_emotion (clause mode only), ECE_clause scores the
    causes found when the gold emotion spans are given.

    """
    if oracle_emotion and mode != 'clause':
        raise ValueError('oracle emotions are only scored in clause mode')
    corpus = list(corpus)
    predictions = {
        document.doc_id: pairing_mod.predict_document(document, model)
        for document in corpus
    }
    oracle_predictions = None
    if oracle_emotion:
        counters = collections.Counter()
        oracle_predictions = {
            document.doc_id: pairing_mod.predict_document(
                document,
                model,
                oracle_emotions=document.emotion_spans,
                counters=counters,
            )
            for document in corpus
        }
        if counters:
            LOG.warning(
                '%s oracle emotion span(s) longer than %s tokens were not '
                'given to the model',
                counters['oracle_emotions_over_max_len'],
                model.max_len,
            )
    report = evaluate_predictions(corpus, predictions, mode, oracle_predictions)
    LOG.info(
        '%s evaluation of %s documents: %s',
        mode,
        len(corpus),
        ', '.join(
            '{} F1 {:.2f}'.format(task, 100 * report.f1(task))
            for task in report.tasks
        ),
    )
    return report
