"""k-fold cross-validation

Each fold trains on the other folds (holding out a dev fraction of
them for early stopping), saves its checkpoint and training log under
fold_<i>/, and is evaluated on its test documents in span and clause
mode.  A failed fold is recorded and does not stop the others.

"""

import concurrent.futures
import json
import logging
import multiprocessing
import os

import ecsp.checkpoint as checkpoint_mod
import ecsp.config as config_mod
import ecsp.corpus as corpus_mod
import ecsp.evaluation as evaluation_mod
import ecsp.training as training_mod


LOG = logging.getLogger('ecsp.crossval')

REPORT_FILE = 'report.json'
TRAIN_LOG_FILE = 'train_log.jsonl'


def fold_documents(corpus, splits, fold_index):
    """(train documents, test documents) of one fold"""
    if not 0 <= fold_index < len(splits):
        raise ValueError(
            'fold {} outside 0..{}'.format(fold_index, len(splits) - 1)
        )
    split = splits[fold_index]
    return (
        corpus_mod.select_documents(corpus, split.train_ids),
        corpus_mod.select_documents(corpus, split.test_ids),
    )


def fold_directory(out_dir, fold_index):
    return os.path.join(out_dir, 'fold_{}'.format(fold_index))


def train_and_save(train_documents, run_config, out_dir, categories=None):
    """Train, writing the training log and checkpoint under out_dir"""
    os.makedirs(out_dir, exist_ok=True)
    with open(
        os.path.join(out_dir, TRAIN_LOG_FILE), 'wt', encoding='utf-8'
    ) as log_file:
        checkpoint = training_mod.train(
            train_documents,
            run_config,
            categories=categories,
            log_file=log_file,
        )
    checkpoint_mod.save_checkpoint(checkpoint, out_dir)
    return checkpoint


def run_fold(corpus, config_values, split, categories, out_dir):
    """Train and evaluate one fold; returns a fold result record

    Takes plain values so it can run in a worker process.

    """
    run_config = config_mod.RunConfig(config_values)
    train_documents = corpus_mod.select_documents(corpus, split.train_ids)
    test_documents = corpus_mod.select_documents(corpus, split.test_ids)
    LOG.info(
        'fold %s: %s training, %s test documents',
        split.fold_index,
        len(train_documents),
        len(test_documents),
    )
    result = {'fold': split.fold_index, 'test_ids': sorted(split.test_ids)}
    try:
        checkpoint = train_and_save(
            train_documents, run_config, out_dir, categories
        )
        model = checkpoint_mod.build_model(
            checkpoint.metadata, checkpoint.parameters
        )
        reports = {
            mode: evaluation_mod.evaluate(test_documents, model, mode)
            for mode in ('span', 'clause')
        }
    except (ValueError, RuntimeError) as error:
        LOG.warning('fold %s failed: %s', split.fold_index, error)
        result.update({'status': 'failed', 'error': str(error)})
        return (result, None)
    result.update(
        {
            'status': 'ok',
            'step': checkpoint.metadata['step'],
            'dev_f1': checkpoint.metadata['dev_f1'],
        }
    )
    result.update(
        {mode: report.to_dict() for mode, report in reports.items()}
    )
    checkpoint_mod.write_json(os.path.join(out_dir, REPORT_FILE), result)
    return (result, reports)


def run_crossval(corpus, run_config, folds, out_dir, jobs=1):
    """Cross-validate over k folds and write an aggregate report

    Folds come from corpus.kfold_split seeded by train.seed; the
    category vocabulary is taken from the whole corpus so every fold's
    model has the same label set.  With jobs > 1, folds train in
    parallel worker processes.

    Returns the report written to out_dir/report.json.

    """
    corpus = list(corpus)
    seed = run_config['train.seed']
    splits = corpus_mod.kfold_split(corpus, folds, seed)
    categories = corpus_mod.category_vocabulary(corpus)
    config_values = run_config.to_dict()
    os.makedirs(out_dir, exist_ok=True)
    arguments = [
        (
            corpus,
            config_values,
            split,
            categories,
            fold_directory(out_dir, split.fold_index),
        )
        for split in splits
    ]
    if jobs > 1:
        # torch is not fork-safe
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=jobs, mp_context=multiprocessing.get_context('spawn')
        ) as executor:
            outcomes = list(executor.map(run_fold, *zip(*arguments)))
    else:
        outcomes = [run_fold(*args) for args in arguments]

    fold_results = [result for result, _ in outcomes]
    succeeded = [reports for _, reports in outcomes if reports is not None]
    report = {
        'folds': folds,
        'seed': seed,
        'categories': categories,
        'fold_results': fold_results,
        'failed_folds': [
            result['fold']
            for result in fold_results
            if result['status'] != 'ok'
        ],
    }
    for mode in ('span', 'clause'):
        report[mode] = (
            evaluation_mod.aggregate_reports(
                reports[mode] for reports in succeeded
            )
            if succeeded
            else None
        )
    if succeeded:
        LOG.info(
            'cross-validation ECSP F1 %.2f over %s folds',
            report['span']['tasks']['ECSP']['F1'],
            len(succeeded),
        )
    with open(
        os.path.join(out_dir, REPORT_FILE), 'wt', encoding='utf-8'
    ) as report_file:
        report_file.write(json.dumps(report, sort_keys=True, indent=2))
        report_file.write('\n')
    return report
