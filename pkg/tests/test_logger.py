import logging

from utils.logger import DatedFileHandler, get_logger


def test_log_directory_is_created_on_first_record(tmp_path):
    log_dir = tmp_path / "logs"
    handler = DatedFileHandler(str(log_dir))
    assert not log_dir.exists()
    handler.emit(logging.makeLogRecord({"msg": "forward solve started", "levelno": logging.INFO}))
    handler.close()
    files = list(log_dir.iterdir())
    assert len(files) == 1
    assert files[0].suffix == ".log"
    assert "forward solve started" in files[0].read_text()


def test_get_logger_returns_named_logger():
    assert get_logger("services.forward_solver_service").name == "services.forward_solver_service"
