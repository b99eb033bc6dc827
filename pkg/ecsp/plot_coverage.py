"""Plot annotation coverage by maximum span length

"""

import matplotlib.pyplot as plt

import numpy as np

import ecsp.corpus as corpus_mod


def dump_coverage(stats, max_len, outfile):
    """Dump coverage by maximum span length to a file"""
    outfile.write('max_len, annotations, coverage\n')
    for length, annotations, coverage in zip(*grid_coverage(stats, max_len)):
        outfile.write('{}, {}, {:.4f}\n'.format(length, annotations, coverage))


def plot_coverage(stats, max_len, output):
    """Plot coverage by maximum span length to an image file"""
    fig = plt.figure()
    axes = fig.add_subplot(1, 1, 1)
    axes.set_xlabel('Maximum span length, tokens')
    axes.set_ylabel('Annotations covered, %')

    lengths, _, coverage = grid_coverage(stats, max_len)
    axes.plot(lengths, 100 * coverage, 'b.-')
    axes.set_ylim(0, 100)

    fig.savefig(output)
    plt.close(fig)
    return 0


def grid_coverage(stats, max_len):
    """Annotation counts and coverage for span lengths 1..max_len"""
    if max_len < 1:
        raise ValueError('max_len must be >= 1, got {}'.format(max_len))
    lengths = np.arange(1, max_len + 1)
    annotations = np.array(
        [corpus_mod.annotations_within(stats, length) for length in lengths]
    )
    coverage = np.array(
        [corpus_mod.length_coverage(stats, length) for length in lengths]
    )
    return (lengths, annotations, coverage)
