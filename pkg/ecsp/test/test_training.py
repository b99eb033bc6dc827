"""Test code for label assignment, loss, schedule and training

"""

import collections
import io
import json

import numpy as np

import pytest

import torch
import torch.nn.functional as functional_mod

from ecsp.test import conftest
import ecsp.checkpoint as checkpoint_mod
import ecsp.corpus as corpus_mod
import ecsp.evaluation as evaluation_mod
import ecsp.model as model_mod
import ecsp.pairing as pairing_mod
import ecsp.spans as spans_mod
import ecsp.training as training_mod
from ecsp.corpus import GoldPair, SpanRef


CATEGORIES = ['anger', 'fear', 'happiness', 'sadness']


def document_with_pairs(pairs, n=20, clauses=None):
    if clauses is None:
        clauses = [corpus_mod.ClauseSpan(0, n - 1)]
    return corpus_mod.Document(
        'doc', tuple('t{}'.format(i) for i in range(n)), tuple(clauses), tuple(pairs)
    )


def test_assign_span_labels_exact_match():
    """Only exact boundary matches take gold labels"""
    document = document_with_pairs(
        [GoldPair(SpanRef(3, 7), SpanRef(10, 12), 'fear')]
    )
    candidates = [
        spans_mod.CandidateSpan(3, 7),
        spans_mod.CandidateSpan(3, 6),
        spans_mod.CandidateSpan(10, 12),
        spans_mod.CandidateSpan(10, 13),
    ]
    assert training_mod.assign_span_labels(document, candidates) == [
        spans_mod.EMOTION,
        spans_mod.NONE,
        spans_mod.CAUSE,
        spans_mod.NONE,
    ]


def test_assign_span_labels_conflict():
    """A span that is both emotion and cause is labeled emotion"""
    document = document_with_pairs(
        [
            GoldPair(SpanRef(1, 2), SpanRef(5, 6), 'fear'),
            GoldPair(SpanRef(5, 6), SpanRef(9, 9), 'anger'),
        ]
    )
    counters = collections.Counter()
    labels = training_mod.assign_span_labels(
        document, [spans_mod.CandidateSpan(5, 6)], counters=counters
    )
    assert labels == [spans_mod.EMOTION]
    assert counters['span_label_conflicts'] == 1


def test_assign_span_labels_counts_long_spans():
    """Gold spans longer than max_len are counted"""
    document = document_with_pairs(
        [GoldPair(SpanRef(0, 0), SpanRef(2, 12), 'fear')]
    )
    counters = collections.Counter()
    training_mod.assign_span_labels(
        document,
        spans_mod.enumerate_spans(document.n, 5),
        max_len=5,
        counters=counters,
    )
    assert counters['gold_spans_over_max_len'] == 1


def test_assign_pair_labels():
    """Gold combinations get their category; other combinations get none"""
    document = document_with_pairs(
        [
            GoldPair(SpanRef(0, 1), SpanRef(5, 6), 'fear'),
            GoldPair(SpanRef(10, 11), SpanRef(15, 16), 'anger'),
        ]
    )
    labelled = training_mod.assign_pair_labels(document)
    assert [
        ((p.emotion.start, p.cause.start), label) for p, label in labelled
    ] == [
        ((0, 5), 'fear'),
        ((0, 15), 'none'),
        ((10, 5), 'none'),
        ((10, 15), 'anger'),
    ]


def test_lr_schedule():
    """Linear warmup to the peak, then linear decay to zero"""
    config = training_mod.train_config(
        conftest.toy_run_config(
            train__total_steps=100, train__warmup_fraction=0.1, train__peak_lr=1e-3
        )
    )
    assert training_mod.lr_at(0, config) == 0.0
    assert training_mod.lr_at(5, config) == pytest.approx(5e-4)
    assert training_mod.lr_at(10, config) == pytest.approx(1e-3)
    assert training_mod.lr_at(55, config) == pytest.approx(5e-4)
    assert training_mod.lr_at(100, config) == 0.0
    rates = [training_mod.lr_at(step, config) for step in range(101)]
    assert max(rates) == pytest.approx(1e-3)
    assert rates[:11] == sorted(rates[:11])
    assert rates[10:] == sorted(rates[10:], reverse=True)
    with pytest.raises(ValueError):
        training_mod.lr_at(101, config)


def test_lr_schedule_short_run():
    """Very short runs still warm up for one step"""
    config = training_mod.train_config(
        conftest.toy_run_config(train__total_steps=2, train__warmup_fraction=0.01)
    )
    assert training_mod.lr_at(1, config) == pytest.approx(config.peak_lr)
    assert training_mod.lr_at(2, config) == 0.0


def test_joint_loss_value():
    """The loss is the weighted sum of the mean cross-entropies"""
    generator = torch.Generator().manual_seed(0)
    span_logits = torch.randn(6, 3, generator=generator, dtype=torch.float64)
    pair_logits = torch.randn(4, 5, generator=generator, dtype=torch.float64)
    span_labels = np.array([0, 2, 2, 1, 2, 2])
    pair_labels = np.array([4, 1, 4, 0])
    loss = training_mod.joint_loss(
        span_logits, span_labels, pair_logits, pair_labels, 1.0, 0.5
    )
    span_loss = -np.mean(
        [
            torch.log_softmax(span_logits[i], dim=0)[label].item()
            for i, label in enumerate(span_labels)
        ]
    )
    pair_loss = -np.mean(
        [
            torch.log_softmax(pair_logits[i], dim=0)[label].item()
            for i, label in enumerate(pair_labels)
        ]
    )
    assert loss.item() == pytest.approx(span_loss + 0.5 * pair_loss, rel=1e-12)


def test_joint_loss_without_pairs():
    """With no pairs, the pair term is zero"""
    span_logits = torch.zeros(3, 3, dtype=torch.float64)
    loss = training_mod.joint_loss(
        span_logits,
        [0, 1, 2],
        torch.zeros(0, 5, dtype=torch.float64),
        np.zeros(0, dtype='int64'),
    )
    assert loss.item() == pytest.approx(np.log(3))


def test_joint_loss_bad_label():
    """Labels outside the vocabulary are rejected"""
    with pytest.raises(ValueError):
        training_mod.joint_loss(
            torch.zeros(2, 3), [0, 3], torch.zeros(0, 5), []
        )


def test_relax_gold_to_clauses():
    """Gold spans become the clauses they overlap"""
    clauses = [
        corpus_mod.ClauseSpan(0, 4),
        corpus_mod.ClauseSpan(5, 9),
        corpus_mod.ClauseSpan(10, 19),
    ]
    document = document_with_pairs(
        [GoldPair(SpanRef(1, 2), SpanRef(4, 6), 'fear')], clauses=clauses
    )
    relaxed = training_mod.relax_gold_to_clauses(document)
    assert relaxed.pairs == (
        GoldPair(SpanRef(0, 4), SpanRef(0, 4), 'fear'),
        GoldPair(SpanRef(0, 4), SpanRef(5, 9), 'fear'),
    )


def test_prepare_example_drops_pairs_across_windows(synthetic_corpus):
    """Training pairs never cross encoder windows"""
    document = next(d for d in synthetic_corpus if len(d.pairs) == 2)
    longest_clause = max(clause.length for clause in document.clauses)
    torch.manual_seed(0)
    model = model_mod.create_model(
        conftest.toy_run_config(encoder__max_positions=longest_clause), CATEGORIES
    )
    counters = collections.Counter()
    example = training_mod.prepare_example(document, model, counters)
    assert len(example.windows) > 1
    # Both gold pairs lie within one clause; the two cross pairs do not
    assert sum(len(item.pairs) for item in example.windows) == 2
    assert counters['pairs_dropped_across_windows'] == 2
    for item in example.windows:
        size = item.window.end - item.window.start + 1
        for candidate in item.pairs:
            assert candidate.cause.end < size


def test_prepare_example_clause_mode(synthetic_corpus):
    """In clause mode the candidates are the clauses"""
    document = synthetic_corpus[0]
    torch.manual_seed(0)
    model = model_mod.create_model(
        conftest.toy_run_config(span__candidates='clauses'), CATEGORIES
    )
    example = training_mod.prepare_example(document, model)
    (item,) = example.windows
    assert item.spans == list(document.clauses)
    # Emotion and cause share clause 0, which is labeled emotion
    assert item.span_labels[0] == spans_mod.EMOTION
    assert len(item.pairs) == len(example.document.emotion_spans) * len(
        example.document.cause_spans
    )


def test_prepare_example_unknown_category(synthetic_corpus):
    """Categories outside the model vocabulary are an error"""
    torch.manual_seed(0)
    model = model_mod.create_model(conftest.toy_run_config(), ['joy'])
    with pytest.raises(ValueError):
        training_mod.prepare_example(synthetic_corpus[0], model)


def indexed_rows(example, model):
    """Length and distance embedding rows an example reads"""
    lengths = set()
    distances = set()
    for item in example.windows:
        spans = list(item.spans)
        for pair in item.pairs:
            spans.extend(pair)
            _, distance = pairing_mod.context_range(pair.emotion, pair.cause)
            distances.add(min(distance, model.pair_head.dist_buckets - 1))
        lengths.update(span.end - span.start for span in spans)
    return (sorted(lengths), sorted(distances))


def test_gradient_check(synthetic_corpus):
    """Analytic gradients of the loss match central differences

    Checked on 20 documents; embedding entries are drawn from the rows
    each document reads.

    """
    torch.manual_seed(0)
    model = model_mod.create_model(conftest.toy_run_config(), CATEGORIES)
    model.double().eval()
    config = training_mod.train_config(conftest.toy_run_config())
    rng = np.random.default_rng(0)
    epsilon = 1e-5
    checked = 0
    embedding_checks = []
    assert len(synthetic_corpus) == 20
    for document in synthetic_corpus:
        example = training_mod.prepare_example(document, model)
        length_rows, distance_rows = indexed_rows(example, model)
        assert distance_rows

        def loss_value(example=example):
            with torch.no_grad():
                return training_mod.document_loss(model, example, config).item()

        model.zero_grad()
        training_mod.document_loss(model, example, config).backward()
        dense = [
            model.span_head.classifier.weight,
            model.span_head.classifier.bias,
            model.pair_head.classifier.weight,
            model.pair_head.classifier.bias,
            model.encoder.affine.weight,
            model.encoder.global_affine.weight,
        ]
        indices = [
            (parameter, int(index), False)
            for parameter in dense
            for index in rng.choice(parameter.numel(), size=3, replace=False)
        ]
        for embedding, rows in (
            (model.span_head.length_embedding.weight, length_rows),
            (model.pair_head.distance_embedding.weight, distance_rows),
        ):
            for _ in range(3):
                row = int(rows[rng.integers(len(rows))])
                column = int(rng.integers(embedding.shape[1]))
                indices.append((embedding, row * embedding.shape[1] + column, True))
        for parameter, index, is_embedding in indices:
            flat = parameter.data.view(-1)
            original = flat[index].item()
            flat[index] = original + epsilon
            plus = loss_value()
            flat[index] = original - epsilon
            minus = loss_value()
            flat[index] = original
            numeric = (plus - minus) / (2 * epsilon)
            analytic = parameter.grad.view(-1)[index].item()
            assert abs(analytic - numeric) <= 1e-4 * max(
                abs(analytic), abs(numeric)
            ) + 1e-8, (document.doc_id, parameter.shape, index, analytic, numeric)
            checked += 1
            if is_embedding:
                embedding_checks.append(analytic)
    assert checked == 20 * (6 * 3 + 2 * 3)
    assert len(embedding_checks) == 20 * 6
    assert sum(1 for value in embedding_checks if value != 0) >= 100


def test_divergence(synthetic_corpus, monkeypatch):
    """A non-finite loss stops training with DivergenceError"""

    def nan_loss(model, example, config, rng=None):
        parameter = next(model.parameters())
        return parameter.sum() * float('nan')

    monkeypatch.setattr(training_mod, 'document_loss', nan_loss)
    with pytest.raises(training_mod.DivergenceError):
        training_mod.train(
            synthetic_corpus[:4], conftest.toy_run_config(train__total_steps=5)
        )


def test_early_stopping(synthetic_corpus):
    """Training stops after patience evaluations without improvement"""
    log_file = io.StringIO()
    checkpoint = training_mod.train(
        synthetic_corpus[:4],
        conftest.toy_run_config(
            train__peak_lr=1e-12,
            train__total_steps=50,
            train__eval_interval_steps=1,
            train__patience_evals=1,
        ),
        dev_documents=synthetic_corpus[4:6],
        log_file=log_file,
    )
    assert checkpoint.run_metadata['stopped_early']
    assert checkpoint.run_metadata['steps_run'] == 2
    assert checkpoint.metadata['step'] == 1
    records = [json.loads(line) for line in log_file.getvalue().splitlines()]
    assert [sorted(record) for record in records] == [
        ['loss', 'lr', 'step'],
        ['dev', 'step'],
        ['loss', 'lr', 'step'],
        ['dev', 'step'],
    ]
    assert records[1]['dev']['mode'] == 'span'


def test_train_metadata(synthetic_corpus):
    """The checkpoint metadata records config, vocabulary and dev F1"""
    run_config = conftest.toy_run_config(
        train__total_steps=6, train__eval_interval_steps=3
    )
    checkpoint = training_mod.train(synthetic_corpus[:6], run_config)
    metadata = checkpoint.metadata
    assert set(metadata) == checkpoint_mod.METADATA_KEYS
    assert metadata['schema_version'] == checkpoint_mod.SCHEMA_VERSION
    assert metadata['categories'] == corpus_mod.category_vocabulary(
        synthetic_corpus[:6]
    )
    assert metadata['config'] == run_config.to_dict()
    assert metadata['encoder_id'] == 'toy-d64-seed0'
    assert metadata['step'] in (3, 6)
    assert 0 <= metadata['dev_f1'] <= 1
    assert checkpoint.run_metadata['train_documents'] == 5
    assert checkpoint.run_metadata['dev_documents'] == 1


def test_train_deterministic(synthetic_corpus):
    """The same seed gives the same parameters"""
    run_config = conftest.toy_run_config(train__total_steps=4)
    first = training_mod.train(synthetic_corpus[:3], run_config)
    second = training_mod.train(synthetic_corpus[:3], run_config)
    assert first.metadata == second.metadata
    for name, value in first.parameters.items():
        assert torch.equal(value, second.parameters[name])


@pytest.mark.filterwarnings('error::UserWarning')
def test_train_without_warnings(synthetic_corpus):
    """Logging the loss does not convert a tensor that requires grad"""
    log_file = io.StringIO()
    training_mod.train(
        synthetic_corpus[:2],
        conftest.toy_run_config(train__total_steps=2),
        log_file=log_file,
    )
    records = [json.loads(line) for line in log_file.getvalue().splitlines()]
    assert all(
        isinstance(record['loss'], float) for record in records if 'loss' in record
    )


def test_negative_downsampling(synthetic_corpus):
    """Downsampling keeps every positive span and fewer negatives"""
    torch.manual_seed(0)
    model = model_mod.create_model(conftest.toy_run_config(), CATEGORIES)
    example = training_mod.prepare_example(synthetic_corpus[0], model)
    (item,) = example.windows
    positives = [
        span
        for span, label in zip(item.spans, item.span_labels)
        if label != spans_mod.NONE
    ]
    n_negatives = len(item.spans) - len(positives)
    assert positives and n_negatives > 50
    spans, labels = training_mod.downsample_negatives(
        item.spans, item.span_labels, 0.5, np.random.default_rng(0)
    )
    assert len(spans) == len(labels)
    assert [
        span for span, label in zip(spans, labels) if label != spans_mod.NONE
    ] == positives
    assert 0 < len(spans) - len(positives) < n_negatives
    spans, labels = training_mod.downsample_negatives(
        item.spans, item.span_labels, 0.0, np.random.default_rng(0)
    )
    assert spans == positives
    assert (labels != spans_mod.NONE).all()
    config = training_mod.train_config(
        conftest.toy_run_config(train__neg_downsample=0.1)
    )
    loss = training_mod.document_loss(
        model, example, config, np.random.default_rng(0)
    )
    assert torch.isfinite(loss)
    full = training_mod.document_loss(model, example, config)
    assert torch.isfinite(full)


def test_overfit_synthetic_corpus(synthetic_corpus, overfit_checkpoint):
    """The toy model fits a 20-document synthetic corpus exactly"""
    model = checkpoint_mod.build_model(
        overfit_checkpoint.metadata, overfit_checkpoint.parameters
    )
    assert overfit_checkpoint.metadata['step'] <= 500
    report = evaluation_mod.evaluate(synthetic_corpus, model, 'span')
    assert report.f1('ECSP') == 1.0
    for document in synthetic_corpus:
        extracted = pairing_mod.extract_pairs(document, model)
        assert sorted(
            (p.emotion, p.cause, p.category) for p in extracted
        ) == sorted(tuple(p) for p in document.pairs)


def test_cross_entropy_matches_functional():
    """The span term equals torch cross-entropy"""
    logits = torch.tensor([[2.0, 0.5, -1.0], [0.0, 0.0, 0.0]])
    labels = [0, 2]
    loss = training_mod.joint_loss(logits, labels, torch.zeros(0, 2), [])
    expected = functional_mod.cross_entropy(logits, torch.tensor(labels))
    assert loss.item() == pytest.approx(expected.item())


def test_localized_context_ablation(synthetic_corpus):
    """Models trained with and without localized context both evaluate"""
    reports = []
    for use_localized_context in (True, False):
        checkpoint = training_mod.train(
            synthetic_corpus[:6],
            conftest.toy_run_config(
                train__total_steps=10,
                pair__use_localized_context=use_localized_context,
            ),
        )
        model = checkpoint_mod.build_model(
            checkpoint.metadata, checkpoint.parameters
        )
        assert model.pair_head.use_localized_context is use_localized_context
        reports.append(
            evaluation_mod.evaluate(synthetic_corpus[6:10], model, 'span')
        )
    for report in reports:
        assert set(report.to_dict()['tasks']) == set(
            evaluation_mod.SPAN_TASKS
        )
