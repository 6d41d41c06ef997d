import logging
import os
from datetime import datetime

from config import CBF_LOG_DIR, CBF_LOG_LEVEL


class DatedFileHandler(logging.FileHandler):
    """Appends to <log_dir>/<YYYY-MM-DD>.log; the directory is created on the first record."""

    def __init__(self, log_dir):
        super().__init__(os.path.join(log_dir, f"{datetime.now().strftime('%Y-%m-%d')}.log"), delay=True)

    def _open(self):
        os.makedirs(os.path.dirname(self.baseFilename), exist_ok=True)
        return super()._open()


# Loggerning konfiguratsiyasi
_handlers = [logging.StreamHandler()]
if CBF_LOG_DIR:
    _handlers.append(DatedFileHandler(CBF_LOG_DIR))

logging.basicConfig(
    level=getattr(logging, CBF_LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=_handlers
)

def get_logger(name):
    return logging.getLogger(name)
