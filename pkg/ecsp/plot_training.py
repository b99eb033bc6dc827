"""Plot a training log

The log holds JSON lines written during training: step records with
"loss" and "lr", and evaluation records with "dev".

"""

import json

import matplotlib.pyplot as plt

import numpy as np


def read_training_log(log_file):
    """Read a training log

    Returns (steps, losses, lrs) for training steps and (eval_steps,
    dev_f1) for dev evaluations, as arrays; dev F1 is the ECSP F1 in
    percent.

    """
    steps = []
    losses = []
    lrs = []
    eval_steps = []
    dev_f1 = []
    for line_number, line in enumerate(log_file, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as error:
            raise ValueError(  # pylint: disable=raise-missing-from
                'training log line {}: {}'.format(line_number, error)
            )
        if 'dev' in record:
            eval_steps.append(record['step'])
            dev_f1.append(record['dev']['tasks']['ECSP']['F1'])
        else:
            steps.append(record['step'])
            losses.append(record['loss'])
            lrs.append(record['lr'])
    return (
        (np.array(steps), np.array(losses), np.array(lrs)),
        (np.array(eval_steps), np.array(dev_f1)),
    )


def dump_training_log(log_file, outfile):
    """Dump a training log as delimited text

    Steps without a dev evaluation have an empty dev_ECSP_F1 field.

    """
    (steps, losses, lrs), (eval_steps, dev_f1) = read_training_log(log_file)
    f1_at = dict(zip(eval_steps.tolist(), dev_f1.tolist()))
    outfile.write('step, loss, lr, dev_ECSP_F1\n')
    for step, loss, lr in zip(steps, losses, lrs):
        outfile.write(
            '{}, {}, {}, {}\n'.format(step, loss, lr, f1_at.get(step, ''))
        )


def plot_training_log(log_file, output):
    """Plot loss, learning rate and dev F1 against step"""
    (steps, losses, lrs), (eval_steps, dev_f1) = read_training_log(log_file)
    fig = plt.figure()
    loss_axes = fig.add_subplot(3, 1, 1)
    lr_axes = fig.add_subplot(3, 1, 2, sharex=loss_axes)
    f1_axes = fig.add_subplot(3, 1, 3, sharex=loss_axes)
    loss_axes.set_ylabel('Loss')
    loss_axes.set_yscale('log')
    lr_axes.set_ylabel('Learning rate')
    f1_axes.set_ylabel('Dev ECSP F1, %')
    f1_axes.set_xlabel('Step')

    loss_axes.plot(steps, losses, 'k-', linewidth=0.5)
    lr_axes.plot(steps, lrs, 'b-')
    f1_axes.plot(eval_steps, dev_f1, 'ro-')

    fig.savefig(output)
    plt.close(fig)
    return 0
