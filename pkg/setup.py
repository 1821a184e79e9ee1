import re
import os
import sys

from setuptools import setup, find_packages


if sys.version_info[:2] < (3, 7):
    print("Python >= 3.7 is required.")
    sys.exit(-1)


def about(package):
    ret = {}
    filename = os.path.join(os.path.dirname(__file__), package, "__about__.py")
    with open(filename, 'rb') as file:
        exec(compile(file.read(), filename, 'exec'), ret)
    return ret


def changelog():
    """Return the changes for the latest version only"""
    if not os.path.exists("changelog.md"):
        return ""

    with open("changelog.md") as file:
        log = file.read()
    match = re.search(r"### ([\s\S]*?)(?:\n###\s|$)", log)
    return match.group(1) if match else ""


info = about("gadguard")
setup(
    name=info['__title__'],
    version=info['__version__'],
    description=info['__summary__'],
    long_description=changelog(),
    url=info['__url__'],
    license=info['__license__'],
    keywords="graph anomaly detection gnn autoencoder unsupervised",

    author=info['__author__'],
    author_email=info['__email__'],

    platforms=['Unix', 'Windows'],
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'License :: OSI Approved :: BSD License',
        'Programming Language :: Python :: 3 :: Only',
        'Programming Language :: Python :: Implementation :: CPython',
    ],

    packages=find_packages(exclude=['examples*', 'test*']) + ['gadguard.tests'],
    package_dir={'gadguard.tests': 'tests'},
    package_data={'gadguard.tests': ['local.cfg']},
    install_requires=['numpy>=1.20', 'scipy>=1.6', 'matplotlib>=3.5', 'pytest>=6.0',
                      'tomli>=1.1; python_version<"3.11"'],
    entry_points={'console_scripts': ['gadguard = gadguard.cli:main']},
    zip_safe=False,
)
