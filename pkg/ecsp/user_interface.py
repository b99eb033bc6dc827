"""User interface for ecsp

Exit codes: 0 success, 2 usage, corpus or config error, 3 training
failure, 4 unreadable or incompatible checkpoint.

"""

import argparse
import json
import logging
import os
import sys

import ecsp.checkpoint as checkpoint_mod
import ecsp.config as config_mod
import ecsp.corpus as corpus_mod
import ecsp.crossval as crossval_mod
import ecsp.encoder as encoder_mod
import ecsp.evaluation as evaluation_mod
import ecsp.pairing as pairing_mod
import ecsp.plot_coverage as coverage_plot_mod
import ecsp.plot_training as training_plot_mod
import ecsp.training as training_mod


LEVELS = [logging.ERROR, logging.WARNING, logging.INFO, logging.DEBUG]

EXIT_USAGE = 2
EXIT_TRAINING = 3
EXIT_CHECKPOINT = 4

LOG = logging.getLogger('ecsp.user_interface')


def main(argv):
    """CLI for ecsp"""
    (parser, subparsers) = create_parsers()

    args = parser.parse_args(argv)
    if args.version:
        print(get_version())
        parser.exit()
    if args.task is None:
        parser.print_help()
        parser.exit()

    set_up_logging(args.logfile, args.verbosity)
    check_usage(args, subparsers)

    try:
        return dispatch(args, subparsers)
    except (
        corpus_mod.CorpusError,
        config_mod.ConfigError,
        encoder_mod.WindowError,
    ) as error:
        LOG.error('%s', error)
        return EXIT_USAGE
    except training_mod.DivergenceError as error:
        LOG.error('training diverged: %s', error)
        return EXIT_TRAINING
    except checkpoint_mod.CheckpointError as error:
        LOG.error('%s', error)
        return EXIT_CHECKPOINT
    finally:
        for name in ('output', 'dump'):
            stream = getattr(args, name, None)
            if hasattr(stream, 'flush'):
                stream.flush()


def dispatch(args, subparsers):
    """Run the selected task"""
    if args.task == 'stats':
        stats(args)
    elif args.task == 'train':
        train(args)
    elif args.task == 'crossval':
        return crossval(args)
    elif args.task == 'predict':
        predict(args)
    elif args.task == 'eval':
        evaluate(args)
    elif args.task == 'plot':
        if args.subtask is None:
            subparsers['plot'].print_help()
            subparsers['plot'].exit()
        plot(args)
    else:
        raise AssertionError('Bad task {}'.format(args.task))
    return 0


def check_usage(args, subparsers):
    """Reject argument combinations argparse cannot express"""
    if args.task == 'eval' and args.oracle_emotion and args.mode != 'clause':
        subparsers['eval'].error('--oracle-emotion requires --mode clause')
    if args.task in ('train', 'crossval') and args.folds < 2:
        subparsers[args.task].error(
            '--folds must be at least 2, got {}'.format(args.folds)
        )
    if args.task == 'train':
        if args.fold is not None and not 0 <= args.fold < args.folds:
            subparsers['train'].error(
                '--fold must lie in 0..{}'.format(args.folds - 1)
            )
        if (
            os.path.isdir(args.out)
            and os.listdir(args.out)
            and not args.overwrite
        ):
            subparsers['train'].error(
                'output directory {} is not empty; use --overwrite'.format(
                    args.out
                )
            )
    if args.task == 'crossval' and args.jobs < 1:
        subparsers['crossval'].error('--jobs must be at least 1')


def create_parsers():
    """Create ecsp command-line parser and subparsers"""
    parser = argparse.ArgumentParser(
        description='Span-based emotion-cause span-pair extraction'
    )
    parser.add_argument(
        '--version', help='Print version string and exit', action='store_true'
    )

    subparsers = parser.add_subparsers(help='sub-command help', dest='task')
    by_name = {}

    stats_parser = subparsers.add_parser(
        'stats', help='Print corpus statistics and span length coverage'
    )
    add_stats_args(stats_parser)
    add_shared_args(stats_parser)
    by_name['stats'] = stats_parser

    train_parser = subparsers.add_parser(
        'train', help='Train a model and write a checkpoint'
    )
    add_train_args(train_parser)
    add_shared_args(train_parser)
    by_name['train'] = train_parser

    crossval_parser = subparsers.add_parser(
        'crossval', help='Train and evaluate by k-fold cross-validation'
    )
    add_crossval_args(crossval_parser)
    add_shared_args(crossval_parser)
    by_name['crossval'] = crossval_parser

    predict_parser = subparsers.add_parser(
        'predict', help='Extract emotion-cause pairs with a trained model'
    )
    add_predict_args(predict_parser)
    add_shared_args(predict_parser)
    by_name['predict'] = predict_parser

    eval_parser = subparsers.add_parser(
        'eval', help='Evaluate a trained model on an annotated corpus'
    )
    add_eval_args(eval_parser)
    add_shared_args(eval_parser)
    by_name['eval'] = eval_parser

    plot_parser = subparsers.add_parser('plot', help='Plot data')
    add_plot_args(plot_parser)
    add_shared_args(plot_parser)
    by_name['plot'] = plot_parser

    return (parser, by_name)


def set_up_logging(logfile, verbosity):
    """Configure logging for ecsp"""
    loglevel, is_clipped = get_verbosity(verbosity)
    for handler in logging.root.handlers[:]:
        logging.root.removeHandler(handler)
    logging.basicConfig(stream=logfile, level=loglevel)
    if is_clipped:
        LOG.warning('maximum verbosity exceeded, ignoring flag')


def load_run_config(args):
    """Run configuration from --config and --set"""
    return config_mod.load_config(
        args.config, overrides=config_mod.parse_overrides(args.set)
    )


def stats(args):
    """Print the corpus statistics table"""
    corpus = corpus_mod.load_corpus(args.corpus, strict=not args.lenient)
    corpus_mod.write_stats_table(
        corpus_mod.corpus_stats(corpus), args.max_len, args.output
    )


def train(args):
    """Command-line interface to train a model"""
    run_config = load_run_config(args)
    corpus = corpus_mod.load_corpus(args.corpus, strict=not args.lenient)
    categories = corpus_mod.category_vocabulary(corpus)
    if args.fold is None:
        train_documents = corpus
    else:
        splits = corpus_mod.kfold_split(
            corpus, args.folds, run_config['train.seed']
        )
        train_documents, _ = crossval_mod.fold_documents(
            corpus, splits, args.fold
        )
    checkpoint = crossval_mod.train_and_save(
        train_documents, run_config, args.out, categories
    )
    LOG.info(
        'best dev ECSP F1 %.4f at step %s',
        checkpoint.metadata['dev_f1'],
        checkpoint.metadata['step'],
    )


def crossval(args):
    """Command-line interface to cross-validate; nonzero if a fold fails"""
    run_config = load_run_config(args)
    corpus = corpus_mod.load_corpus(args.corpus, strict=not args.lenient)
    report = crossval_mod.run_crossval(
        corpus, run_config, args.folds, args.out, jobs=args.jobs
    )
    if report['failed_folds']:
        LOG.error(
            'folds failed: %s',
            ', '.join(str(fold) for fold in report['failed_folds']),
        )
        return EXIT_TRAINING
    return 0


def predict(args):
    """Command-line interface to extract pairs"""
    model, _ = checkpoint_mod.load_model(args.model)
    corpus = corpus_mod.load_corpus(
        args.input, strict=not args.lenient, require_pairs=False
    )
    pairing_mod.dump_predictions(corpus, model, args.output)


def evaluate(args):
    """Command-line interface to evaluate a model"""
    model, _ = checkpoint_mod.load_model(args.model)
    corpus = corpus_mod.load_corpus(args.corpus, strict=not args.lenient)
    report = evaluation_mod.evaluate(
        corpus, model, args.mode, oracle_emotion=args.oracle_emotion
    )
    args.output.write(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    args.output.write('\n')


def plot(args):
    """Dispatch to plotting scripts"""
    if args.subtask == 'coverage':
        corpus_stats = corpus_mod.corpus_stats(
            corpus_mod.load_corpus(args.corpus, strict=not args.lenient)
        )
        if args.dump is not None:
            coverage_plot_mod.dump_coverage(
                stats=corpus_stats, max_len=args.max_len, outfile=args.dump
            )
        else:
            coverage_plot_mod.plot_coverage(
                stats=corpus_stats, max_len=args.max_len, output=args.output
            )
    elif args.subtask == 'training-log':
        if args.dump is not None:
            training_plot_mod.dump_training_log(
                log_file=args.log, outfile=args.dump
            )
        else:
            training_plot_mod.plot_training_log(
                log_file=args.log, output=args.output
            )
    else:
        raise AssertionError('Bad plot task {}'.format(args.subtask))


def add_shared_args(parser):
    """Add arguments shared across subparsers"""
    parser.add_argument(
        '-v',
        '--verbose',
        dest='verbosity',
        action='count',
        default=0,
        help='Write more messages about what is being done',
    )
    parser.add_argument(
        '--logfile',
        metavar='FILE',
        type=argparse.FileType('wt'),
        default=sys.stderr,
        help='File to write status messages, default stderr',
    )


def add_corpus_arg(
    parser,
    flag='--corpus',
    help_text='JSON-lines corpus',
    lenient_help='Ignore unknown keys and allow documents without pairs',
):
    """Add a corpus path and the --lenient flag"""
    parser.add_argument(flag, metavar='PATH', required=True, help=help_text)
    parser.add_argument('--lenient', action='store_true', help=lenient_help)


def add_config_args(parser):
    """Add run configuration arguments"""
    parser.add_argument(
        '-c',
        '--config',
        metavar='YAML',
        type=argparse.FileType('rt'),
        required=True,
        help='YAML run configuration',
    )
    parser.add_argument(
        '-s',
        '--set',
        metavar='KEY=VALUE',
        action='append',
        default=[],
        help='Override a configuration value; may be repeated',
    )


def add_output_arg(parser):
    parser.add_argument(
        '-o',
        '--output',
        metavar='FILE',
        help='Write output to file, default stdout',
        type=argparse.FileType('wt'),
        default=sys.stdout,
    )


def add_stats_args(parser):
    """Add arguments for ecsp stats parser"""
    add_corpus_arg(parser)
    parser.add_argument(
        '-L',
        '--max-len',
        metavar='N',
        type=int,
        default=20,
        help='Maximum span length for coverage, default 20',
    )
    add_output_arg(parser)


def add_train_args(parser):
    """Add arguments for ecsp train parser"""
    add_corpus_arg(parser)
    add_config_args(parser)
    parser.add_argument(
        '--out',
        metavar='DIR',
        required=True,
        help='Checkpoint directory',
    )
    parser.add_argument(
        '--fold',
        metavar='K',
        type=int,
        default=None,
        help='Train on the training part of fold K only',
    )
    parser.add_argument(
        '--folds',
        metavar='N',
        type=int,
        default=10,
        help='Number of folds for --fold, default 10',
    )
    parser.add_argument(
        '--overwrite',
        action='store_true',
        help='Write into a non-empty checkpoint directory',
    )


def add_crossval_args(parser):
    """Add arguments for ecsp crossval parser"""
    add_corpus_arg(parser)
    add_config_args(parser)
    parser.add_argument(
        '--folds',
        metavar='N',
        type=int,
        default=10,
        help='Number of folds, default 10',
    )
    parser.add_argument(
        '--out',
        metavar='DIR',
        required=True,
        help='Directory for fold checkpoints and reports',
    )
    parser.add_argument(
        '-j',
        '--jobs',
        metavar='N',
        type=int,
        default=1,
        help='Number of folds to run in parallel, default 1',
    )


def add_predict_args(parser):
    """Add arguments for ecsp predict parser"""
    parser.add_argument(
        '-m', '--model', metavar='DIR', required=True, help='Checkpoint directory'
    )
    add_corpus_arg(
        parser,
        '--input',
        'JSON-lines documents; pairs are optional',
        'Ignore unknown keys',
    )
    add_output_arg(parser)


def add_eval_args(parser):
    """Add arguments for ecsp eval parser"""
    parser.add_argument(
        '-m', '--model', metavar='DIR', required=True, help='Checkpoint directory'
    )
    add_corpus_arg(parser)
    parser.add_argument(
        '--mode',
        choices=sorted(evaluation_mod.MODES),
        default='span',
        help='Exact span matching, or matching relaxed to clauses',
    )
    parser.add_argument(
        '--oracle-emotion',
        action='store_true',
        help='Also score causes found given the gold emotions (clause mode)',
    )
    add_output_arg(parser)


def add_plot_args(parser):
    """Add arguments for ecsp plot parser"""
    plot_subparsers = parser.add_subparsers(
        help='plotting sub-command help', dest='subtask'
    )

    coverage_plot_parser = plot_subparsers.add_parser(
        'coverage', help='Plot annotation coverage by maximum span length'
    )
    add_corpus_arg(coverage_plot_parser)
    coverage_plot_parser.add_argument(
        '-L',
        '--max-len',
        metavar='N',
        type=int,
        default=30,
        help='Largest span length to plot, default 30',
    )

    training_plot_parser = plot_subparsers.add_parser(
        'training-log', help='Plot loss, learning rate and dev F1'
    )
    training_plot_parser.add_argument(
        'log',
        metavar='LOG',
        type=argparse.FileType('rt'),
        help='Training log written by ecsp train',
    )

    for subparser in (coverage_plot_parser, training_plot_parser):
        group = subparser.add_mutually_exclusive_group(required=True)
        group.add_argument(
            '-o', '--output', metavar='IMAGE', help='Write plot to image file'
        )
        group.add_argument(
            '-d',
            '--dump',
            type=argparse.FileType('wt'),
            help='Do not plot; dump curve to file as delimited text',
        )
        del subparser
    del coverage_plot_parser
    del training_plot_parser


def get_verbosity(level_index):
    """Get verbosity of logging for an integer level_index

    Higher levels mean more verbose; the levels are:
      0: ERROR
      1: WARNING
      2: INFO
      3: DEBUG

    Returns a logging debug level and a flag for whether the
    level index was higher than the maximum.

    """
    if level_index >= len(LEVELS):
        level = LEVELS[-1]
        is_clipped = True
    else:
        level = LEVELS[level_index]
        is_clipped = False
    return (level, is_clipped)


def get_version():
    """Get project version"""
    version_file_path = os.path.join(os.path.dirname(__file__), 'VERSION.txt')
    with open(version_file_path, encoding='utf-8') as version_file:
        return version_file.read().strip()
