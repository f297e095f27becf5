"""
Configuration settings for the optimization toolkit command line.
"""
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _env_float(name: str, default: float) -> float:
    return float(os.environ.get(name, default))


def _env_int(name: str, default: int) -> int:
    return int(float(os.environ.get(name, default)))


class Config:
    """Base configuration class."""

    DEBUG = os.environ.get('OPTKIT_DEBUG', 'False').lower() == 'true'
    TESTING = False
    LOG_LEVEL = os.environ.get('OPTKIT_LOG_LEVEL', 'INFO').upper()

    # Artifacts and batch execution
    OUTPUT_DIR = os.environ.get('OPTKIT_OUTPUT_DIR', 'runs')
    WORKERS = _env_int('OPTKIT_WORKERS', 1)
    SEED = _env_int('OPTKIT_SEED', 0)

    # Solver caps
    SINKHORN_MAX_ITERS = _env_int('SINKHORN_MAX_ITERS', 10 ** 6)
    IBP_MAX_ITERS = _env_int('IBP_MAX_ITERS', 10 ** 5)
    GM_MAX_INNER_ATTEMPTS = _env_int('GM_MAX_INNER_ATTEMPTS', 64)

    # Numerical settings
    INNER_ACCURACY_CONSTANT = _env_float('INNER_ACCURACY_CONSTANT', 1.0)
    MARGINAL_FLOOR = _env_float('MARGINAL_FLOOR', 1e-3)
    ADAPTIVE_L_BLOWUP = _env_float('ADAPTIVE_L_BLOWUP', 10.0)
    PLAIN_DOMAIN_THRESHOLD = _env_float('PLAIN_DOMAIN_THRESHOLD', 30.0)

    # Supported cost metrics for grid images
    SUPPORTED_METRICS = ['euclid', 'sqeuclid']


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True
    LOG_LEVEL = 'DEBUG'


class ProductionConfig(Config):
    """Production configuration."""
    DEBUG = False


class TestingConfig(Config):
    """Testing configuration."""
    TESTING = True
    LOG_LEVEL = 'WARNING'
    WORKERS = 1
    SINKHORN_MAX_ITERS = 10 ** 5
    IBP_MAX_ITERS = 10 ** 4


# Configuration dictionary
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': ProductionConfig
}
