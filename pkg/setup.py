"""Setup configuration for driftcast package."""
from setuptools import find_packages, setup

setup(
    name="driftcast",
    version="0.1.0",
    description="Online time-series forecasting with delay-aware evaluation and proactive drift adaptation",
    packages=find_packages(exclude=["tests*"]),
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.24.0",
        "pandas>=2.0.0",
        "scikit-learn>=1.3.0",
        "pydantic>=2.4.0",
        "python-dotenv>=1.0.0",
        "loguru>=0.7.2",
        "prometheus-client>=0.19.0",
    ],
    extras_require={
        "test": [
            "pytest>=8.0.0",
            "pytest-cov>=4.1.0",
        ],
    },
    entry_points={"console_scripts": ["driftcast = driftcast.cli:main"]},
)
