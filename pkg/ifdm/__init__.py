from config import Config, config_by_name
from .logging import configure_logging
from .utils.helpers.settings import use_config


def init_app(config_name: str = Config.ENV, structured_logs: bool | None = None, log_level: str | None = None) -> type[Config]:
    '''
    Prepares process-wide settings and logging for a solver run.

    Args:
        config_name: The settings class to use (development, production, testing).
        structured_logs: Force JSON logs on or off; production defaults to JSON.
        log_level: Override the level from LOG_LEVEL.

    Returns:
        The selected settings class.
    '''
    settings = config_by_name.get(config_name, Config)
    use_config(config_name)

    if structured_logs is None:
        structured_logs = config_name == "production"
    configure_logging(level=log_level or settings.LOG_LEVEL, structured=structured_logs)

    return settings
