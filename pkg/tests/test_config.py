import logging
import os
from pathlib import Path

import pytest
from app.exceptions import ConfigurationError
from app.toolkit_config import ToolkitConfig

ENV_VARS = ('TOOLKIT_BASE_DIR', 'TOOLKIT_LOG_DIR', 'TOOLKIT_LOG_FILE', 'TOOLKIT_LOG_LEVEL',
            'TOOLKIT_DEFAULT_ENCODING')

# Helper fixture: every test starts from a clean environment
@pytest.fixture(autouse=True)
def clear_env_vars(monkeypatch):
    for var in ENV_VARS:
        monkeypatch.delenv(var, raising=False)

def test_environment_configuration(monkeypatch):
    monkeypatch.setenv('TOOLKIT_DEFAULT_ENCODING', 'utf-16')
    monkeypatch.setenv('TOOLKIT_LOG_LEVEL', 'debug')
    monkeypatch.setenv('TOOLKIT_LOG_DIR', './test_logs')
    monkeypatch.setenv('TOOLKIT_LOG_FILE', './test_logs/test_log.log')
    config = ToolkitConfig()
    assert config.default_encoding == 'utf-16'
    assert config.log_level == 'DEBUG'
    assert config.numeric_log_level == logging.DEBUG
    assert config.log_dir == Path('./test_logs').resolve()
    assert config.log_file == Path('./test_logs/test_log.log').resolve()

def test_default_configuration():
    config = ToolkitConfig()
    assert config.default_encoding == 'utf-8'
    assert config.log_level == 'INFO'
    assert config.base_dir == Path(__file__).resolve().parent.parent

def test_base_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv('TOOLKIT_BASE_DIR', str(tmp_path))
    assert ToolkitConfig().base_dir == tmp_path.resolve()

def test_custom_configuration():
    config = ToolkitConfig(base_dir=Path('/custom_base_dir'), default_encoding='ascii', log_level='WARNING')
    assert config.default_encoding == 'ascii'
    assert config.numeric_log_level == logging.WARNING

def test_directory_properties():
    config = ToolkitConfig(base_dir=Path('/custom_base_dir'))
    assert config.log_dir == Path('/custom_base_dir/logs').resolve()

def test_file_properties():
    config = ToolkitConfig(base_dir=Path('/custom_base_dir'))
    assert config.log_file == Path('/custom_base_dir/logs/toolkit.log').resolve()

def test_validate_accepts_defaults():
    ToolkitConfig().validate()

def test_invalid_log_level():
    with pytest.raises(ConfigurationError, match="Unknown log level: LOUD"):
        ToolkitConfig(log_level='LOUD').validate()

def test_invalid_log_level_from_environment(monkeypatch):
    monkeypatch.setenv('TOOLKIT_LOG_LEVEL', 'chatty')
    with pytest.raises(ConfigurationError, match="Unknown log level: CHATTY"):
        ToolkitConfig().validate()

def test_empty_encoding():
    with pytest.raises(ConfigurationError, match="default_encoding must not be empty"):
        ToolkitConfig(default_encoding='').validate()

def test_log_dir_override_keeps_base_dir():
    os.environ['TOOLKIT_LOG_DIR'] = '/tmp/toolkit_logs'
    try:
        config = ToolkitConfig(base_dir=Path('/custom_base_dir'))
        assert config.log_dir == Path('/tmp/toolkit_logs').resolve()
        assert config.log_file == Path('/tmp/toolkit_logs/toolkit.log').resolve()
    finally:
        os.environ.pop('TOOLKIT_LOG_DIR', None)
