import os

from setuptools import setup


def read(fname):
    return open(os.path.join(os.path.dirname(__file__), fname)).read()


setup(
    name="lowrankipm",
    description="Primal-dual interior-point solver for convex QPs with low-rank modified Newton directions",
    packages=["lowrankipm"],
    package_dir={"lowrankipm": "lowrankipm"},
    package_data={"lowrankipm": ["py.typed"]},
    include_package_data=True,
    install_requires=["numpy>=1.24", "scipy>=1.10"],
    entry_points={"console_scripts": ["lowrankipm-bench = lowrankipm.bench:main"]},
    long_description=read("README.md"),
    classifiers=[
        "Development Status :: 4 - Beta",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
)
