"""Python access to the virtual laboratory core.

Templates and configs are plain dicts shaped like the JSON documents the
service and the template files use.
"""

import json

from . import _vlab
from ._vlab import ConfigError, InvalidConfig, JSONError, TemplateError

__all__ = [
    "ConfigError",
    "InvalidConfig",
    "JSONError",
    "Service",
    "TemplateError",
    "ValidationError",
    "default_config",
    "random_config",
    "run",
    "run_csv",
    "template",
    "template_ids",
    "validate",
]


class ValidationError(ValueError):
    """Config rejected; ``violations`` lists the offending slots and params."""

    def __init__(self, violations):
        super().__init__("; ".join(v["message"] for v in violations))
        self.violations = violations


def _tpl(template):
    if isinstance(template, str):
        return _vlab.builtin_template(template)
    return json.dumps(template)


def template_ids():
    return _vlab.template_ids()


def template(template):
    """Built-in template by id, or a dict checked and normalized."""
    if isinstance(template, str):
        return json.loads(_vlab.builtin_template(template))
    return json.loads(_vlab.normalize_template(json.dumps(template)))


def default_config(template):
    return json.loads(_vlab.default_config(_tpl(template)))


def random_config(template, seed):
    return json.loads(_vlab.random_config(_tpl(template), seed))


def validate(template, config):
    return json.loads(_vlab.validate(_tpl(template), json.dumps(config)))


def _checked(template, config):
    tpl = _tpl(template)
    if config is None:
        config = json.loads(_vlab.default_config(tpl))
    doc = json.dumps(config)
    violations = json.loads(_vlab.validate(tpl, doc))
    if violations:
        raise ValidationError(violations)
    return tpl, doc


def run(template, config=None):
    """Simulate; returns {"t": [...], "channels": [{"label", "unit", "values"}]}."""
    return json.loads(_vlab.run(*_checked(template, config)))


def run_csv(template, config=None):
    return _vlab.run_csv(*_checked(template, config))


class Service:
    """In-process lab service answering the same requests as the HTTP API."""

    def __init__(self, data_dir=None, workers=2, pbkdf2_iterations=200000):
        self._svc = _vlab.Service(None if data_dir is None else str(data_dir), workers, pbkdf2_iterations)

    def bootstrap_admin(self, login, password):
        return self._svc.bootstrap_admin(login, password)

    def request(self, method, path, token="", body=None, query=None):
        """Returns (status, payload); JSON payloads are decoded, others stay text."""
        raw = "" if body is None else json.dumps(body)
        status, ctype, data = self._svc.request(method, path, token, raw, query or {})
        text = data.decode()
        return status, json.loads(text) if ctype == "application/json" else text

    def wait_idle(self):
        self._svc.wait_idle()
