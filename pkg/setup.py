#!/usr/bin/python3

"""Installation script for ecsp

"""

import glob
import os.path
import re

from setuptools import setup


SCRIPTS = glob.glob('bin/*[!~]')
with open('README.md', encoding='utf-8') as readme_file:
    LONG_DESCRIPTION = readme_file.read()
    del readme_file


def get_version():
    """Get project version

    """
    version_file_path = os.path.join(
        os.path.dirname(__file__),
        'ecsp',
        'VERSION.txt')
    with open(version_file_path, encoding='utf-8') as version_file:
        version_string = version_file.read().strip()
    version_string_re = re.compile('[0-9.]+')
    match = version_string_re.match(version_string)
    if match is None:
        raise ValueError(
            'version string "{}" does not match regexp "{}"'
            .format(version_string, version_string_re.pattern))
    return match.group(0)


setup(name='ecsp',
      version=get_version(),
      description='Span-based emotion-cause span-pair extraction',
      long_description=LONG_DESCRIPTION,
      long_description_content_type='text/markdown',
      packages=['ecsp',
                'ecsp.test'],
      package_data={'ecsp': ['VERSION.txt'],
                    'ecsp.test': ['sample_data/*.jsonl',
                                  'sample_data/*.yml']},
      python_requires='>=3.8',
      install_requires=['matplotlib',
                        'numpy',
                        'PyYAML',
                        'scipy',
                        'torch',
                        'transformers'],
      extras_require={'test': ['pytest']},
      scripts=SCRIPTS)
