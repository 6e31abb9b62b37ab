import copy
import logging
import logging.config
import os
import socket

_shared = {}

RUN_LOG = 'run.log'
ERROR_LOG = 'errors.log'


def create_shared_logger_data(logger_names, log_levels, log_to_consoles, sim_name, log_directory):
    """
    Records the logger settings of a scenario run so that the root process and every worker of
    :class:`~chronolens.utils.environment.Environment` write to the same log files. Call it once per run, before
    the first worker is started.

    :param logger_names: top level logger names of the subsystems, e.g. ['metrics', 'waves']
    :param log_levels: level name per logger ('DEBUG', 'INFO', ...)
    :param log_to_consoles: per logger, whether records also go to stderr
    :param sim_name: scenario name, prefixes the log file names
    :param log_directory: existing directory of the log files, the run's `logs` directory
    """
    assert len(logger_names) == len(log_levels) == len(log_to_consoles), \
        "The sizes of logger_names, log_levels, log_to_consoles are inconsistent"
    assert all(isinstance(x, str) for x in list(logger_names) + list(log_levels)), \
        "'logger_names' and 'log_levels' must be lists of strings"
    assert os.path.isdir(log_directory), "The log_directory {} is not a valid log directory".format(log_directory)

    _shared.clear()
    _shared.update(logger_names=list(logger_names),
                   log_levels=list(log_levels),
                   log_to_consoles=[bool(x) for x in log_to_consoles],
                   sim_name=sim_name,
                   log_directory=log_directory)
    configure_loggers.already_configured = False


def shared_logger_data():
    """
    :return: a copy of the run's logger settings, handed to worker processes that do not inherit module state
    """
    return dict(_shared)


def log_file_paths():
    """
    :return: (run log, error log) paths of the current run, None before :func:`create_shared_logger_data`
    """
    if not _shared:
        return None
    prefix = '{}_'.format(_shared['sim_name'])
    return tuple(os.path.join(_shared['log_directory'], prefix + name) for name in (RUN_LOG, ERROR_LOG))


def configure_loggers(exactly_once=False, shared=None):
    """
    Applies the run's logger settings: every named logger writes to the run log, errors additionally to the error
    log, and loggers flagged for the console to stderr. Does nothing before
    :func:`create_shared_logger_data` was called in this process or `shared` is given.

    :param exactly_once: skip when this process is already configured, used as worker initializer
    :param shared: settings from :func:`shared_logger_data` of the parent process
    """
    if shared:
        _shared.update(shared)
    if exactly_once and configure_loggers.already_configured:
        return
    if not _shared:
        return

    config = copy.deepcopy(RUN_LOGGING)
    run_log, error_log = log_file_paths()
    config['handlers']['run_file']['filename'] = run_log
    config['handlers']['error_file']['filename'] = error_log
    for name, level, to_console in zip(_shared['logger_names'], _shared['log_levels'], _shared['log_to_consoles']):
        handlers = ['run_file', 'error_file'] + (['console'] if to_console else [])
        config['loggers'][name] = {'level': level, 'handlers': handlers, 'propagate': False}

    logging.config.dictConfig(config)
    configure_loggers.already_configured = True


configure_loggers.already_configured = False

RUN_LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'file': {
            'format': '%(asctime)s {} %(process)d %(name)s %(levelname)-8s: %(message)s'.format(socket.gethostname())
        },
        'console': {
            'format': '%(processName)-12s %(name)s %(levelname)-8s: %(message)s'
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'console',
        },
        'run_file': {
            'class': 'logging.FileHandler',
            'formatter': 'file',
            'filename': RUN_LOG,
        },
        'error_file': {
            'class': 'logging.FileHandler',
            'formatter': 'file',
            'filename': ERROR_LOG,
            'level': 'ERROR',
        },
    },
    'loggers': {},
}
