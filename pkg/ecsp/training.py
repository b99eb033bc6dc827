"""Training: label assignment, joint loss, schedule and early stopping

Every step trains on one document.  Span candidates are labeled
emotion, cause or none by exact boundary match against the gold
spans; pair labels are assigned to the Cartesian product of gold
emotion spans and gold cause spans, so the pair classifier always
trains on gold spans.  The loss is the weighted sum of the mean span
cross-entropy and the mean pair cross-entropy.

"""

import collections
import copy
import json
import logging

import numpy as np

import torch
import torch.nn.functional as functional_mod

import ecsp.checkpoint as checkpoint_mod
import ecsp.corpus as corpus_mod
import ecsp.evaluation as evaluation_mod
import ecsp.model as model_mod
import ecsp.pairing as pairing_mod
import ecsp.spans as spans_mod


LOG = logging.getLogger('ecsp.training')

TrainConfig = collections.namedtuple(
    'TrainConfig',
    [
        'peak_lr',
        'warmup_fraction',
        'total_steps',
        'dropout',
        'batch_size',
        'patience_evals',
        'eval_interval_steps',
        'seed',
        'span_loss_weight',
        'pair_loss_weight',
        'neg_downsample',
        'dev_fraction',
    ],
)

TrainingWindow = collections.namedtuple(
    'TrainingWindow', ['window', 'spans', 'span_labels', 'pairs', 'pair_labels']
)

TrainingExample = collections.namedtuple(
    'TrainingExample', ['document', 'windows']
)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss"""


def train_config(run_config):
    """Extract a TrainConfig from a RunConfig"""
    return TrainConfig(
        **{
            field: run_config['train.{}'.format(field)]
            for field in TrainConfig._fields
        }
    )


def assign_span_labels(document, candidates, max_len=None, counters=None):
    """Label each candidate emotion, cause or none

    A candidate takes a gold label only if its start and end both
    match a gold span.  A span that is gold for both roles is labeled
    emotion.  With counters, gold spans longer than max_len (which no
    candidate can match) and label conflicts are counted.

    Returns a list of indices into spans.SPAN_TYPES.

    """
    gold = {}
    for span in document.cause_spans:
        gold[(span.start, span.end)] = spans_mod.CAUSE
    for span in document.emotion_spans:
        if gold.get((span.start, span.end)) == spans_mod.CAUSE:
            LOG.warning(
                '%s: span (%s, %s) is both emotion and cause; using emotion',
                document.doc_id,
                span.start,
                span.end,
            )
            if counters is not None:
                counters['span_label_conflicts'] += 1
        gold[(span.start, span.end)] = spans_mod.EMOTION
    if counters is not None and max_len is not None:
        too_long = sum(1 for span in gold if span[1] - span[0] + 1 > max_len)
        if too_long:
            LOG.warning(
                '%s: %s gold span(s) longer than %s tokens cannot be '
                'extracted',
                document.doc_id,
                too_long,
                max_len,
            )
            counters['gold_spans_over_max_len'] += too_long
    return [
        gold.get((span.start, span.end), spans_mod.NONE) for span in candidates
    ]


def assign_pair_labels(document):
    """Label the Cartesian product of gold emotions and gold causes

    Gold-annotated combinations get their category; all others get
    none.  Returns a list of (PairCandidate, label) in emotion-major
    order.

    """
    categories = {}
    for pair in document.pairs:
        key = (pair.emotion, pair.cause)
        if key in categories and categories[key] != pair.category:
            LOG.warning(
                '%s: pair annotated with categories %s and %s; using %s',
                document.doc_id,
                categories[key],
                pair.category,
                categories[key],
            )
            continue
        categories[key] = pair.category
    return [
        (
            candidate,
            categories.get(
                (candidate.emotion, candidate.cause), pairing_mod.NONE_LABEL
            ),
        )
        for candidate in pairing_mod.cartesian_pairs(
            document.emotion_spans, document.cause_spans
        )
    ]


def relax_gold_to_clauses(document):
    """Replace each gold span by the clauses it overlaps"""
    pairs = []
    for pair in document.pairs:
        for emotion_index in sorted(
            evaluation_mod.relax_to_clauses(document, [pair.emotion])
        ):
            for cause_index in sorted(
                evaluation_mod.relax_to_clauses(document, [pair.cause])
            ):
                relaxed = corpus_mod.GoldPair(
                    corpus_mod.SpanRef(*document.clauses[emotion_index]),
                    corpus_mod.SpanRef(*document.clauses[cause_index]),
                    pair.category,
                )
                if relaxed not in pairs:
                    pairs.append(relaxed)
    return document._replace(pairs=tuple(pairs))


def check_labels(labels, n_classes, name):
    """Reject label indices outside [0, n_classes)"""
    if len(labels) and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(
            '{} label outside vocabulary of {} labels'.format(name, n_classes)
        )


def joint_loss(
    span_logits, span_labels, pair_logits, pair_labels, span_weight=1.0,
    pair_weight=1.0,
):
    """Weighted sum of mean span and mean pair cross-entropy

    Logits are (m, classes) tensors; labels are class indices.  A
    term with no labeled items contributes zero.

    """
    span_labels = torch.as_tensor(span_labels, dtype=torch.long)
    pair_labels = torch.as_tensor(pair_labels, dtype=torch.long)
    check_labels(span_labels, span_logits.shape[-1], 'span')
    check_labels(pair_labels, pair_logits.shape[-1], 'pair')
    loss = span_logits.new_zeros(())
    if len(span_labels):
        loss = loss + span_weight * functional_mod.cross_entropy(
            span_logits, span_labels
        )
    if len(pair_labels):
        loss = loss + pair_weight * functional_mod.cross_entropy(
            pair_logits, pair_labels
        )
    return loss


def warmup_steps(config):
    """Number of warmup steps, at least one and fewer than total"""
    return min(
        max(1, int(round(config.warmup_fraction * config.total_steps))),
        config.total_steps - 1,
    )


def lr_at(step, config):
    """Learning rate at a step

    Rises linearly from 0 to peak_lr over the warmup steps, then
    falls linearly to 0 at total_steps.

    """
    if not 0 <= step <= config.total_steps:
        raise ValueError(
            'step {} outside [0, {}]'.format(step, config.total_steps)
        )
    warmup = warmup_steps(config)
    if step <= warmup:
        return config.peak_lr * step / warmup
    return (
        config.peak_lr
        * (config.total_steps - step)
        / (config.total_steps - warmup)
    )


def prepare_example(document, model, counters=None):
    """Candidates, span labels and training pairs for each window

    Pairs whose spans fall in different windows, or that include a
    span longer than the candidate limit, are dropped and counted.

    """
    if counters is None:
        counters = collections.Counter()
    clause_mode = model.candidate_mode == 'clauses'
    if clause_mode:
        document = relax_gold_to_clauses(document)
    label_index = {
        label: index for index, label in enumerate(model.pair_head.labels)
    }
    labelled_pairs = assign_pair_labels(document)
    unknown = sorted(
        set(label for _, label in labelled_pairs) - set(label_index)
    )
    if unknown:
        raise ValueError(
            'document {} has categories outside the vocabulary: {}'.format(
                document.doc_id, ', '.join(unknown)
            )
        )
    windows = model.windows(document)
    placed = 0
    items = []
    for window_number, window in enumerate(windows):
        candidates = model.candidates(document, window)
        labels = assign_span_labels(
            document,
            candidates,
            max_len=None if clause_mode else model.max_len,
            counters=counters if window_number == 0 else None,
        )
        pairs = []
        pair_labels = []
        for candidate, label in labelled_pairs:
            spans = (candidate.emotion, candidate.cause)
            if not all(
                window.start <= span.start and span.end <= window.end
                for span in spans
            ):
                continue
            placed += 1
            if not clause_mode and any(
                span.length > model.max_len for span in spans
            ):
                counters['pairs_dropped_over_max_len'] += 1
                continue
            pairs.append(
                pairing_mod.PairCandidate(
                    *(
                        spans_mod.CandidateSpan(
                            span.start - window.start, span.end - window.start
                        )
                        for span in spans
                    )
                )
            )
            pair_labels.append(label_index[label])
        items.append(
            TrainingWindow(
                window,
                [span.shifted(-window.start) for span in candidates],
                np.array(labels, dtype='int64'),
                pairs,
                np.array(pair_labels, dtype='int64'),
            )
        )
    crossing = len(labelled_pairs) - placed
    if crossing:
        LOG.warning(
            '%s: %s training pair(s) cross window boundaries and are dropped',
            document.doc_id,
            crossing,
        )
        counters['pairs_dropped_across_windows'] += crossing
    counters['span_candidates'] += sum(len(item.spans) for item in items)
    counters['training_pairs'] += sum(len(item.pairs) for item in items)
    return TrainingExample(document, items)


def downsample_negatives(spans, labels, fraction, rng):
    """Keep every labeled span and a random fraction of the none spans"""
    keep = (labels != spans_mod.NONE) | (rng.random(len(labels)) < fraction)
    return ([span for span, kept in zip(spans, keep) if kept], labels[keep])


def document_loss(model, example, config, rng=None):
    """Joint loss over all windows of a prepared document

    With config.neg_downsample set and an rng given, only that
    fraction of none-labeled candidates is kept, chosen at random.

    """
    span_logits = []
    span_labels = []
    pair_logits = []
    pair_labels = []
    for item in example.windows:
        spans = item.spans
        labels = item.span_labels
        if config.neg_downsample is not None and rng is not None:
            spans, labels = downsample_negatives(
                spans, labels, config.neg_downsample, rng
            )
        window_span_logits, window_pair_logits = model(
            example.document, item.window, spans, item.pairs
        )
        span_logits.append(window_span_logits)
        span_labels.append(labels)
        pair_logits.append(window_pair_logits)
        pair_labels.append(item.pair_labels)
    return joint_loss(
        torch.cat(span_logits),
        np.concatenate(span_labels),
        torch.cat(pair_logits),
        np.concatenate(pair_labels),
        span_weight=config.span_loss_weight,
        pair_weight=config.pair_loss_weight,
    )


def write_log(log_file, record):
    """Append a JSON line to the training log"""
    if log_file is not None:
        log_file.write(json.dumps(record, sort_keys=True))
        log_file.write('\n')
        log_file.flush()


def dev_documents_for(model, documents):
    """Dev documents with gold matching the model's candidate mode"""
    if model.candidate_mode == 'clauses':
        return tuple(relax_gold_to_clauses(document) for document in documents)
    return tuple(documents)


def train(
    train_documents, run_config, dev_documents=None, categories=None,
    log_file=None,
):
    """Train a model with Adam, evaluation on a dev set and early stopping

    Without dev_documents, a seeded fraction train.dev_fraction of the
    training documents is held out.  The dev set is evaluated every
    train.eval_interval_steps steps (default: one pass over the
    training documents) by span-level ECSP F1, and training stops after
    train.patience_evals evaluations without improvement.

    Returns the Checkpoint of the best evaluation.

    """
    config = train_config(run_config)
    train_documents = tuple(train_documents)
    if not train_documents:
        raise ValueError('empty training set')
    if dev_documents is None:
        train_documents, dev_documents = corpus_mod.split_dev(
            train_documents, config.dev_fraction, config.seed
        )
    dev_documents = tuple(dev_documents)
    if not dev_documents:
        LOG.warning('empty dev set; evaluating on training documents')
        dev_documents = train_documents
    if categories is None:
        categories = corpus_mod.category_vocabulary(
            train_documents + dev_documents
        )

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model = model_mod.create_model(run_config, categories)
    counters = collections.Counter()
    examples = [
        prepare_example(document, model, counters)
        for document in train_documents
    ]
    dev_documents = dev_documents_for(model, dev_documents)
    LOG.info(
        'training on %s documents, %s dev documents, %s categories',
        len(examples),
        len(dev_documents),
        len(categories),
    )
    optimizer = torch.optim.Adam(
        [parameter for parameter in model.parameters() if parameter.requires_grad],
        lr=config.peak_lr,
    )
    interval = config.eval_interval_steps or len(examples)

    best = {'f1': -1.0, 'step': 0, 'state': None}
    evals_without_improvement = 0
    stopped_early = False
    order = []
    step = 0
    while step < config.total_steps:
        if not order:
            order = rng.permutation(len(examples)).tolist()
        example = examples[order.pop(0)]
        step += 1
        model.train()
        loss = document_loss(model, example, config, rng)
        loss_value = loss.item()
        if not np.isfinite(loss_value):
            raise DivergenceError(
                'non-finite loss {} at step {} on document {}'.format(
                    loss_value, step, example.document.doc_id
                )
            )
        optimizer.zero_grad()
        loss.backward()
        lr = lr_at(step, config)
        for group in optimizer.param_groups:
            group['lr'] = lr
        optimizer.step()
        LOG.debug('step %s loss %.6f lr %.3g', step, loss_value, lr)
        write_log(log_file, {'step': step, 'loss': loss_value, 'lr': lr})

        if step % interval and step != config.total_steps:
            continue
        report = evaluation_mod.evaluate(dev_documents, model, 'span')
        f1 = report.f1('ECSP')
        write_log(log_file, {'step': step, 'dev': report.to_dict()})
        LOG.info('step %s dev ECSP F1 %.4f', step, f1)
        if f1 > best['f1']:
            best = {
                'f1': f1,
                'step': step,
                'state': copy.deepcopy(model.state_dict()),
            }
            evals_without_improvement = 0
        else:
            evals_without_improvement += 1
            if evals_without_improvement >= config.patience_evals:
                LOG.info(
                    'early stop at step %s after %s evaluations without '
                    'improvement',
                    step,
                    evals_without_improvement,
                )
                stopped_early = True
                break

    LOG.info('best dev ECSP F1 %.4f at step %s', best['f1'], best['step'])
    run_metadata = dict(sorted(counters.items()))
    run_metadata.update(
        {
            'train_documents': len(train_documents),
            'dev_documents': len(dev_documents),
            'steps_run': step,
            'stopped_early': stopped_early,
        }
    )
    return checkpoint_mod.Checkpoint(
        metadata=checkpoint_mod.make_metadata(
            run_config,
            categories,
            model.encoder.identity,
            best['step'],
            best['f1'],
        ),
        parameters=best['state'],
        run_metadata=run_metadata,
    )
