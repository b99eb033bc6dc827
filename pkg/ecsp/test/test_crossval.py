"""Test code for k-fold cross-validation

"""

import json
import os
import tempfile

from ecsp.test import conftest
import ecsp.checkpoint as checkpoint_mod
import ecsp.corpus as corpus_mod
import ecsp.crossval as crossval_mod


def small_config(**overrides):
    settings = dict(train__total_steps=6, train__eval_interval_steps=3)
    settings.update(overrides)
    return conftest.toy_run_config(**settings)


def read_report(out_dir):
    with open(
        os.path.join(out_dir, crossval_mod.REPORT_FILE), 'rt', encoding='utf-8'
    ) as report_file:
        return report_file.read()


def test_crossval_three_folds(synthetic_corpus):
    """Every fold writes a checkpoint, log and report"""
    corpus = synthetic_corpus[:9]
    with tempfile.TemporaryDirectory() as out_dir:
        report = crossval_mod.run_crossval(corpus, small_config(), 3, out_dir)
        assert json.loads(read_report(out_dir)) == report
        for fold_index in range(3):
            fold_dir = crossval_mod.fold_directory(out_dir, fold_index)
            for file_name in (
                checkpoint_mod.METADATA_FILE,
                checkpoint_mod.PARAMETERS_FILE,
                checkpoint_mod.RUN_METADATA_FILE,
                crossval_mod.TRAIN_LOG_FILE,
                crossval_mod.REPORT_FILE,
            ):
                assert os.path.exists(os.path.join(fold_dir, file_name))
    assert report['folds'] == 3
    assert report['failed_folds'] == []
    assert report['categories'] == sorted(report['categories'])
    test_ids = [
        doc_id
        for result in report['fold_results']
        for doc_id in result['test_ids']
    ]
    assert sorted(test_ids) == sorted(document.doc_id for document in corpus)
    assert [
        len(result['test_ids']) for result in report['fold_results']
    ] == [3, 3, 3]
    assert report['span']['folds'] == 3
    assert set(report['span']['tasks']) == {'EESE', 'ECSE', 'ECSPE', 'ECSP'}
    assert set(report['clause']['tasks']['ECE_clause']) == {
        'P',
        'P_sem',
        'R',
        'R_sem',
        'F1',
        'F1_sem',
    }
    for result in report['fold_results']:
        assert result['status'] == 'ok'
        assert result['span']['mode'] == 'span'
        assert result['clause']['mode'] == 'clause'


def test_crossval_deterministic(synthetic_corpus):
    """The same seed writes byte-identical reports"""
    corpus = synthetic_corpus[:6]
    reports = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as out_dir:
            crossval_mod.run_crossval(corpus, small_config(), 2, out_dir)
            reports.append(read_report(out_dir))
    assert reports[0] == reports[1]


def test_crossval_parallel(synthetic_corpus):
    """Folds trained in worker processes give the same folds"""
    corpus = synthetic_corpus[:6]
    with tempfile.TemporaryDirectory() as out_dir:
        serial = crossval_mod.run_crossval(corpus, small_config(), 2, out_dir)
    with tempfile.TemporaryDirectory() as out_dir:
        parallel = crossval_mod.run_crossval(
            corpus, small_config(), 2, out_dir, jobs=2
        )
    assert [result['test_ids'] for result in parallel['fold_results']] == [
        result['test_ids'] for result in serial['fold_results']
    ]
    assert parallel['failed_folds'] == []
    assert parallel['span']['folds'] == 2


def test_crossval_failed_folds(synthetic_corpus):
    """Folds that cannot train are recorded without stopping the run"""
    corpus = synthetic_corpus[:4]
    with tempfile.TemporaryDirectory() as out_dir:
        report = crossval_mod.run_crossval(
            corpus, small_config(encoder__max_positions=2), 2, out_dir
        )
    assert report['failed_folds'] == [0, 1]
    assert report['span'] is None
    assert report['clause'] is None
    for result in report['fold_results']:
        assert result['status'] == 'failed'
        assert result['error']


def test_fold_documents(synthetic_corpus):
    """Fold documents partition the corpus"""
    corpus = synthetic_corpus[:5]
    splits = corpus_mod.kfold_split(corpus, 2, 0)
    train, test = crossval_mod.fold_documents(corpus, splits, 1)
    assert sorted(d.doc_id for d in train + test) == [d.doc_id for d in corpus]
    assert not set(train) & set(test)
