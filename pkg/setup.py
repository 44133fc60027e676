#!/usr/bin/env python3
"""
Setup script for InfoGate - learned input and feature gating
"""

import re
from pathlib import Path

from setuptools import find_packages, setup

this_directory = Path(__file__).parent
long_description = (this_directory / "README.md").read_text(encoding="utf-8")

# Read version from package without importing it
version_file = (this_directory / "src" / "infogate" / "__init__.py").read_text(encoding="utf-8")
version_match = re.search(r"^__version__ = ['\"]([^'\"]*)['\"]", version_file, re.M)
if not version_match:
    raise RuntimeError("Unable to find version string.")

setup(
    name="infogate",
    version=version_match.group(1),
    author="InfoGate developers",
    description="Learned noise gates for representation learning, with a synthetic distractor benchmark",
    long_description=long_description,
    long_description_content_type="text/markdown",
    package_dir={"": "src"},
    packages=find_packages(where="src"),
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
    python_requires=">=3.8",
    install_requires=[
        "numpy>=1.21",
        "python-dotenv>=0.19.0",
        "tqdm>=4.60",
    ],
    extras_require={
        "dev": [
            "pytest>=7.0",
            "pytest-cov>=2.0",
            "black>=21.0",
            "flake8>=3.8",
            "mypy>=0.800",
        ],
    },
    entry_points={
        "console_scripts": [
            "infogate=infogate.cli:main",
        ],
    },
    include_package_data=True,
    zip_safe=False,
    keywords="information-bottleneck masking representation-learning inverse-dynamics autodiff",
)
