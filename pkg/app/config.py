"""
Observable Transport Lab Configuration Module
Handles logging, output and numerical-default settings for different environments
"""

from decouple import config


class Config:
    """Base configuration - shared across all environments"""

    ENV_NAME = 'base'
    DEBUG = False
    TESTING = False

    # Output Settings
    OUTPUT_DIR = config('LAB_OUTPUT_DIR', default='out')
    CSV_SIGNIFICANT_DIGITS = config('LAB_CSV_DIGITS', default=17, cast=int)
    COPY_CONFIG_TO_OUTPUT = config('LAB_COPY_CONFIG', default=True, cast=bool)

    # Quadrature & Verification Defaults
    QUADRATURE_TOLERANCE = config('LAB_QUADRATURE_TOLERANCE', default=1e-8, cast=float)
    RESIDUAL_RELATIVE_TOLERANCE = config('LAB_RESIDUAL_RELATIVE_TOLERANCE', default=1e-6, cast=float)
    DEFINITION_RESIDUAL_TOLERANCE = config('LAB_DEFINITION_RESIDUAL_TOLERANCE', default=1e-8, cast=float)
    SENSITIVITY_THRESHOLD = config('LAB_SENSITIVITY_THRESHOLD', default=1e-4, cast=float)
    BUMP_SUITE_SIZE = config('LAB_BUMP_SUITE_SIZE', default=10, cast=int)
    BUMP_SUITE_SEED = config('LAB_BUMP_SUITE_SEED', default=20100, cast=int)

    # Broad Solver Defaults
    CONTRACTION_SLACK = config('LAB_CONTRACTION_SLACK', default=0.05, cast=float)
    BROAD_TOLERANCE = config('LAB_BROAD_TOLERANCE', default=1e-10, cast=float)
    BROAD_MAX_ITER = config('LAB_BROAD_MAX_ITER', default=60, cast=int)

    # Eulerian Acceptance Defaults
    FRONT_SPEED_TOLERANCE = config('LAB_FRONT_SPEED_TOLERANCE', default=0.02, cast=float)
    MASS_SLOPE_TOLERANCE = config('LAB_MASS_SLOPE_TOLERANCE', default=0.05, cast=float)

    # Logging Configuration
    LOG_LEVEL = config('LOG_LEVEL', default='INFO')
    LOG_FILE = config('LOG_FILE', default='logs/observable_lab.log')
    LOG_MAX_BYTES = config('LOG_MAX_BYTES', default=10485760, cast=int)
    LOG_BACKUP_COUNT = config('LOG_BACKUP_COUNT', default=5, cast=int)
    LOG_FORMAT = config(
        'LOG_FORMAT',
        default='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    LOG_TO_FILE = config('LOG_TO_FILE', default=True, cast=bool)
    LOG_TO_CONSOLE = config('LOG_TO_CONSOLE', default=True, cast=bool)
    LOG_JSON = config('LOG_JSON', default=False, cast=bool)


class DevelopmentConfig(Config):
    """Development environment configuration"""
    ENV_NAME = 'development'
    DEBUG = True
    LOG_LEVEL = config('LOG_LEVEL', default='DEBUG')


class TestingConfig(Config):
    """Testing environment configuration"""
    ENV_NAME = 'testing'
    DEBUG = True
    TESTING = True

    # Keep test runs from writing log files
    LOG_TO_FILE = False
    LOG_TO_CONSOLE = False
    COPY_CONFIG_TO_OUTPUT = True


class ProductionConfig(Config):
    """Batch/cluster configuration: structured logs, quieter console"""
    ENV_NAME = 'production'
    LOG_JSON = config('LOG_JSON', default=True, cast=bool)
    LOG_LEVEL = config('LOG_LEVEL', default='INFO')


# Configuration dictionary for easy access
config_by_name = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,
    'default': DevelopmentConfig
}


def get_config(env: str = None) -> Config:
    """Get configuration object based on environment

    Args:
        env: Environment name (development, testing, production)

    Returns:
        Configuration object for the specified environment
    """
    if env is None:
        env = config('LAB_ENV', default='development')

    return config_by_name.get(env, DevelopmentConfig)()
