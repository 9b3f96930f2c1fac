"""Debug logging system for the cemri package.

This module provides the threaded logging used throughout cemri. Two
process-wide loggers exist: the run log, which reports experiment progress
(phantom generation, training steps, checkpoint writes, evaluation
summaries), and the internal log, which reports framework details (shape
schedules, parameter counts, tensor file I/O).

The module features:
- Multi-threaded logging with buffered message processing
- Configurable log levels from DEBUG to CRITICAL
- Automatic log file rotation based on size and count limits
- Separate run and internal loggers
- Command-line argument integration through the runarg module

Classes:
    LogLevel: Enum defining log severity levels
    Logger: Thread-based logger with file output and rotation

Functions:
    Logging convenience functions for the run and internal loggers

Example:
    from cemri.debug import runlog_write, LogLevel

    runlog_write("TRAIN", "epoch 3 total_g=12.41", LogLevel.INFO)
    runlog_write("CKPT", "checkpoint write failed", LogLevel.ERROR)

Note:
    Loggers are only created when their switch is on the command line:
        python -m cemri train ... --run-log log_level=INFO log_dir=./log
    Without a switch every logging call is a no-op.
"""
import os.path
import threading
from datetime import datetime
from enum import IntEnum


try:
    from . import runarg

except ImportError:
    import runarg


class LogLevel(IntEnum):
    """Log levels in ascending order of severity"""
    DEBUG = 10
    INFO = 20
    WARNING = 30
    ERROR = 40
    CRITICAL = 50

    @classmethod
    def from_string(cls, level_str: str) -> 'LogLevel':
        """Convert string to LogLevel"""
        level_map = {
            'DEBUG': cls.DEBUG,
            'INFO': cls.INFO,
            'WARNING': cls.WARNING,
            'ERROR': cls.ERROR,
            'CRITICAL': cls.CRITICAL,
            # Aliases
            'WARN': cls.WARNING,
            'CRIT': cls.CRITICAL,
        }

        return level_map.get(level_str.upper(), cls.DEBUG)

    def to_string(self) -> str:
        """Convert LogLevel to string"""
        return self.name


class Logger(threading.Thread):
    """Thread-based logger with file output and rotation capabilities.

    A daemon thread drains an internal message buffer so that logging never
    blocks a training step. Messages are printed to the console and, when
    the log directory exists, appended to ``<log_dir>/<name>.log``. The file
    is archived with a timestamp suffix once it reaches ``log_maxline``
    lines, and the oldest archive is removed when ``log_maxfiles`` files
    exist.

    Args:
        logger_name: Name identifier for the logger thread
        log_dir: Directory path where log files will be stored
        log_timestamp: strftime format string for timestamp formatting
        log_tag_length: Maximum length for log tags (truncated if longer)
        log_maxline: Maximum lines per log file before rotation
        log_maxfiles: Maximum number of log files to keep
        log_level: Minimum log level threshold for output

    Example:
        logger = Logger("run", "./log", "%Y-%m-%d %H:%M:%S",
                        8, 5000, 10, LogLevel.INFO)
        logger.info("TRAIN", "epoch 1 started")
    """


    def __init__(
            self,
            logger_name: str,
            log_dir: str,
            log_timestamp: str,
            log_tag_length: int,
            log_maxline: int,
            log_maxfiles: int,
            log_level: LogLevel = LogLevel.DEBUG):
        # if exit from main thread, exit from this thread
        super().__init__(
            target = self._logger,
            name = logger_name,
            daemon = True
        )

        self._buffer: list[str] = []
        self._buffer_lock = threading.Lock()

        self._log_dir = log_dir
        self._log_timestamp = log_timestamp
        self._log_tag_length = log_tag_length
        self._log_maxline = log_maxline
        self._log_maxfiles = log_maxfiles
        self._log_level = log_level

        # logger thread idle signal
        self._log_idlesignal = threading.Event()

        self.start()


    def _logger(self):
        """Main logger thread loop for processing buffered messages."""
        while True:
            message = self._pop()

            if message is not None:
                self._logprint(message)
                self._logsave(message)
            else:
                self._log_idlesignal.wait()
                self._log_idlesignal.clear()


    def _pop(self) -> str | None:
        with self._buffer_lock:
            if self._buffer:
                return self._buffer.pop(0)

        return None


    def _logprint(self, message: str):
        """Print log message to console, handling newline normalization."""
        if message.endswith("\n"):
            message = message[:-1]

        print(message, flush=True)


    def _logsave(self, message: str):
        """Save log message to file with rotation management."""
        if not os.path.isdir(self._log_dir):
            return

        if not message.endswith("\n"):
            message += "\n"

        log_file_path = os.path.join(self._log_dir, f"{self.name}.log")

        try:
            logfiles = sorted(
                name for name in os.listdir(self._log_dir)
                if name.startswith(self.name) and name.endswith(".log")
            )

            if len(logfiles) >= self._log_maxfiles:
                archived = [
                    name for name in logfiles if name != f"{self.name}.log"
                ]

                if archived:
                    os.remove(os.path.join(self._log_dir, archived[0]))

            if os.path.exists(log_file_path):
                with open(log_file_path, "r", encoding="utf-8") as logfile:
                    line_amount = sum(1 for _ in logfile)

                if line_amount >= self._log_maxline:
                    timestamp = datetime.now().strftime('%Y%m%d%H%M%S')
                    os.rename(
                        log_file_path,
                        os.path.join(
                            self._log_dir, f"{self.name}{timestamp}.log"
                        )
                    )

        except OSError:
            # rotation is best effort, the message is still appended
            ...

        with open(log_file_path, "a", encoding="utf-8") as logfile:
            logfile.write(message)


    def log(self, tag: str, message: str, level: LogLevel = LogLevel.INFO):
        """Log a message with specified level and tag.

        The message is queued for the logger thread only if ``level`` meets
        the logger's threshold. The formatted line carries a timestamp, the
        logger name and the tag, both upper-cased and padded to the
        configured tag length.

        Args:
            tag: A category identifier such as "TRAIN" or "TNSR".
            message: The actual log message content.
            level: The severity level of the message (default: INFO).

        Example:
            logger.log("CKPT", "wrote epoch_0003", LogLevel.INFO)
        """
        if level < self._log_level:
            return

        timestamp = datetime.now().strftime(self._log_timestamp)
        logger_tag = self.name.ljust(self._log_tag_length)
        logger_tag = logger_tag[0:self._log_tag_length].upper()
        message_tag = tag.ljust(self._log_tag_length)
        message_tag = message_tag[0:self._log_tag_length].upper()

        with self._buffer_lock:
            self._buffer.append(
                f"{timestamp} [{logger_tag}] [{message_tag}] {message}"
            )

        self._log_idlesignal.set()


    def debug(self, tag: str, message: str):
        """Log debug message"""
        self.log(tag, message, LogLevel.DEBUG)


    def info(self, tag: str, message: str):
        """Log info message"""
        self.log(tag, message, LogLevel.INFO)


    def warning(self, tag: str, message: str):
        """Log warning message"""
        self.log(tag, message, LogLevel.WARNING)


    def error(self, tag: str, message: str):
        """Log error message"""
        self.log(tag, message, LogLevel.ERROR)


    def critical(self, tag: str, message: str):
        """Log critical message"""
        self.log(tag, message, LogLevel.CRITICAL)


    def set_level(self, level: LogLevel):
        """Change the minimum log level"""
        self._log_level = level


    def get_level(self) -> LogLevel:
        """Get current minimum log level"""
        return self._log_level


def create_logger_from_sysargs(
        option: runarg.Options,
        name: str,
        argv: list[str] | None = None) -> Logger | None:
    """Create a Logger instance from command-line arguments.

    Args:
        option: The runarg.Options switch enabling this logger
        name: Name identifier for the logger
        argv: Argument list (default: ``sys.argv``)

    Returns:
        Configured Logger instance or None if the switch is absent

    Example:
        logger = create_logger_from_sysargs(runarg.Options.RUN_LOG, "run")
    """
    if not runarg.exist_option(option, argv):
        return None

    options = runarg.get_option(option, argv)

    log_dir = runarg.get_var(options, 'log_dir') or os.path.join(".", "log")
    log_timestamp = (
        runarg.get_var(options, 'log_timestamp') or "%Y/%m/%d %H:%M:%S"
    )
    log_tag_length = int(runarg.get_var(options, 'log_tag_length') or 8)
    log_maxline = int(runarg.get_var(options, 'log_maxline') or 5000)
    log_maxfiles = int(runarg.get_var(options, 'log_maxfiles') or 10)

    log_level_str = runarg.get_var(options, 'log_level')

    if log_level_str is None:
        log_level = LogLevel.DEBUG
    else:
        log_level = LogLevel.from_string(log_level_str)

    return Logger(
        name,
        log_dir,
        log_timestamp,
        log_tag_length,
        log_maxline,
        log_maxfiles,
        log_level
    )


def remain_logger_output(logger: Logger | None):
    """Flush any remaining messages in the logger buffer.

    Waits up to 1 second for the logger thread, then drains whatever is
    left from the calling thread.

    Args:
        logger: Logger instance to flush, or None (no-op)
    """
    if logger is None:
        return

    logger._log_idlesignal.clear()
    logger._log_idlesignal.wait(1)

    while True:
        message = logger._pop()

        if message is None:
            break

        logger._logprint(message)
        logger._logsave(message)


runlog = create_logger_from_sysargs(runarg.Options.RUN_LOG, "run")

internal = create_logger_from_sysargs(runarg.Options.INTERNAL_LOG, "internal")


def runlog_write(tag: str, message: str, level: LogLevel = LogLevel.INFO):
    """Log a message to the run logger"""
    if runlog is not None:
        runlog.log(tag, message, level)


def rundebug_log(tag: str, message: str):
    """Log debug message to the run logger"""
    runlog_write(tag, message, LogLevel.DEBUG)


def runinfo_log(tag: str, message: str):
    """Log info message to the run logger"""
    runlog_write(tag, message, LogLevel.INFO)


def runwarning_log(tag: str, message: str):
    """Log warning message to the run logger"""
    runlog_write(tag, message, LogLevel.WARNING)


def runerror_log(tag: str, message: str):
    """Log error message to the run logger"""
    runlog_write(tag, message, LogLevel.ERROR)


def runcritical_log(tag: str, message: str):
    """Log critical message to the run logger"""
    runlog_write(tag, message, LogLevel.CRITICAL)


def runlog_set_level(level: LogLevel):
    """Set run logger level"""
    if runlog is not None:
        runlog.set_level(level)


def runlog_get_level() -> LogLevel:
    """Get run logger level"""
    if runlog is not None:
        return runlog.get_level()

    return LogLevel.DEBUG


def runlog_output_remaining():
    remain_logger_output(runlog)


def internallog(tag: str, message: str, level: LogLevel = LogLevel.INFO):
    """Log a message to internal logger"""
    if internal is not None:
        internal.log(tag, message, level)


def internaldebug_log(tag: str, message: str):
    """Log debug message to internal logger"""
    internallog(tag, message, LogLevel.DEBUG)


def internalinfo_log(tag: str, message: str):
    """Log info message to internal logger"""
    internallog(tag, message, LogLevel.INFO)


def internalwarning_log(tag: str, message: str):
    """Log warning message to internal logger"""
    internallog(tag, message, LogLevel.WARNING)


def internalerror_log(tag: str, message: str):
    """Log error message to internal logger"""
    internallog(tag, message, LogLevel.ERROR)


def internalcritical_log(tag: str, message: str):
    """Log critical message to internal logger"""
    internallog(tag, message, LogLevel.CRITICAL)


def internal_set_level(level: LogLevel):
    """Set internal logger level"""
    if internal is not None:
        internal.set_level(level)


def internal_get_level() -> LogLevel:
    """Get internal logger level"""
    if internal is not None:
        return internal.get_level()

    return LogLevel.DEBUG


def internallog_output_remaining():
    remain_logger_output(internal)


__all__ = [
    # Core classes
    'LogLevel',
    'Logger',

    # Logger creation and management
    'create_logger_from_sysargs',
    'remain_logger_output',

    # Run logging functions
    'runlog_write',
    'rundebug_log',
    'runinfo_log',
    'runwarning_log',
    'runerror_log',
    'runcritical_log',
    'runlog_set_level',
    'runlog_get_level',
    'runlog_output_remaining',

    # Internal logging functions
    'internallog',
    'internaldebug_log',
    'internalinfo_log',
    'internalwarning_log',
    'internalerror_log',
    'internalcritical_log',
    'internal_set_level',
    'internal_get_level',
    'internallog_output_remaining',

    # Logger instances
    'runlog',
    'internal',
]
